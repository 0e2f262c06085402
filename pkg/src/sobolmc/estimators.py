"""Pick-freeze estimators of the closed and total Sobol' indices.

All estimators of the closed index lower_u are sample means of a
per-sample term built from a handful of function values at blended
points; they differ in how the two members of the cross pair
f(x), f(x_u # y_-u) are centered (# denotes coordinate blending):

    original       f(x) f(x_u#y_-u) - muhat^2          2 evals, biased
    correlation1   f(x) (f(x_u#y_-u) - f(y))           3 evals
    correlation2   (f(x) - f(z_u#x_-u)) (f(x_u#y_-u) - f(y))     4 evals
    oracle1        (f(x) - c) (f(x_u#y_-u) - f(y))     3 evals
    oracle2        (f(x) - c) (f(x_u#y_-u) - c)        2 evals
    generalized    (f(x) - f(x_v#z_-v)) (f(x_u#y_-u) - f(y_v'#w_-v'))
                   for v, v' inside the complement of u, 4 evals

plus the nonnegative squared-difference estimator of the total index:

    upper          (1/2) (f(x) - f(y_u#x_-u))^2        2 evals

which resamples the u coordinates, so it vanishes identically (not just
in expectation) whenever f does not depend on them.

Every unbiased kind has per-sample expectation lower_u (upper_u for
``upper``); ``original`` estimates the cross moment mu^2 + lower_u and
subtracts an estimated mean, which leaves a small bias, so it is
reported with a ``biased`` flag and no standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BlockSampler, DimensionError, IndexSet, RngSpec, blend
from .models import Model

DEFAULT_BATCH = 32768

#: function values consumed per sample, by estimator kind
COSTS = {
    "original": 2,
    "correlation1": 3,
    "correlation2": 4,
    "oracle1": 3,
    "oracle2": 2,
    "generalized": 4,
    "upper": 2,
}

_ORACLE_TAGS = ("oracle1", "oracle2")

_ROLES_NEEDED = {
    "original": ("x", "y"),
    "correlation1": ("x", "y"),
    "correlation2": ("x", "y", "z"),
    "oracle1": ("x", "y"),
    "oracle2": ("x", "y"),
    "generalized": ("x", "y", "z", "w"),
    "upper": ("x", "y"),
}


@dataclass(frozen=True)
class EstimatorKind:
    """Tagged description of one per-sample term.

    ``center`` applies to the oracle kinds only (None defers to the
    model's exact mean at run time).  ``v``/``v2`` apply to the
    generalized kind only; None means "use the complement of u", the
    variance-optimal choice for product-form integrands.
    """

    tag: str
    center: float | None = None
    v: IndexSet | None = None
    v2: IndexSet | None = None

    def __post_init__(self) -> None:
        if self.tag not in COSTS:
            raise ValueError(f"unknown estimator tag {self.tag!r}")
        if self.center is not None:
            if self.tag not in _ORACLE_TAGS:
                raise ValueError(f"{self.tag} takes no center")
            if not math.isfinite(self.center):
                raise ValueError("oracle center must be finite")
        if (self.v is not None or self.v2 is not None) and self.tag != "generalized":
            raise ValueError(f"{self.tag} takes no blending sets v/v2")

    @property
    def cost(self) -> int:
        return COSTS[self.tag]

    @classmethod
    def original(cls) -> "EstimatorKind":
        return cls("original")

    @classmethod
    def correlation1(cls) -> "EstimatorKind":
        return cls("correlation1")

    @classmethod
    def correlation2(cls) -> "EstimatorKind":
        return cls("correlation2")

    @classmethod
    def oracle1(cls, center: float | None = None) -> "EstimatorKind":
        return cls("oracle1", center=center)

    @classmethod
    def oracle2(cls, center: float | None = None) -> "EstimatorKind":
        return cls("oracle2", center=center)

    @classmethod
    def generalized(cls, v: IndexSet | None = None, v2: IndexSet | None = None) -> "EstimatorKind":
        return cls("generalized", v=v, v2=v2)

    @classmethod
    def upper(cls) -> "EstimatorKind":
        return cls("upper")

    def __str__(self) -> str:
        parts = [self.tag]
        if self.center is not None:
            parts.append(f"c={self.center}")
        if self.v is not None:
            parts.append(f"v={self.v}")
        if self.v2 is not None:
            parts.append(f"v2={self.v2}")
        return "(".join([parts[0], ",".join(parts[1:])]) + ")" if len(parts) > 1 else self.tag


# ---------------------------------------------------------------------------
# per-sample terms


def term_correlation1(model: Model, x, y, u: IndexSet):
    """f(x) (f(x_u#y_-u) - f(y)); expectation lower_u."""
    return model.evaluate(x) * (model.evaluate(blend(x, y, u)) - model.evaluate(y))


def term_correlation2(model: Model, x, y, z, u: IndexSet):
    """(f(x) - f(z_u#x_-u)) (f(x_u#y_-u) - f(y)); expectation lower_u.

    Both factors are centered by an extra pick-freeze value, so each one
    vanishes per sample when f does not depend on the u coordinates.
    """
    left = model.evaluate(x) - model.evaluate(blend(z, x, u))
    right = model.evaluate(blend(x, y, u)) - model.evaluate(y)
    return left * right


def term_oracle1(model: Model, x, y, u: IndexSet, c: float):
    """(f(x) - c) (f(x_u#y_-u) - f(y)); expectation lower_u for any c."""
    return (model.evaluate(x) - c) * (model.evaluate(blend(x, y, u)) - model.evaluate(y))


def term_oracle2(model: Model, x, y, u: IndexSet, c: float):
    """(f(x) - c) (f(x_u#y_-u) - c); expectation lower_u requires c = mu."""
    return (model.evaluate(x) - c) * (model.evaluate(blend(x, y, u)) - c)


def term_generalized(model: Model, x, y, z, w, u: IndexSet, v: IndexSet, v2: IndexSet):
    """(f(x) - f(x_v#z_-v)) (f(x_u#y_-u) - f(y_v'#w_-v')); expectation lower_u.

    Valid for any v, v2 disjoint from u.  v = v2 = complement(u), with the
    u-part of w taken from y, collapses to the correlation2 term.
    """
    if not v.isdisjoint(u) or not v2.isdisjoint(u):
        raise ValueError(f"v={v} and v2={v2} must be disjoint from u={u}")
    left = model.evaluate(x) - model.evaluate(blend(x, z, v))
    right = model.evaluate(blend(x, y, u)) - model.evaluate(blend(y, w, v2))
    return left * right


def term_upper(model: Model, x, y, u: IndexSet):
    """(1/2) (f(x) - f(y_u#x_-u))^2; expectation upper_u.

    The u coordinates are resampled from y while the rest stay shared, so
    the difference kills every ANOVA effect not touching u; if upper_u = 0
    the term is exactly 0 for every sample.
    """
    diff = model.evaluate(x) - model.evaluate(blend(y, x, u))
    return 0.5 * diff * diff


# ---------------------------------------------------------------------------
# streaming accumulation


class Accumulator:
    """Streaming count / mean / sum-of-squared-deviations, mergeable.

    Welford updates for single values, Chan's pairwise formula for batch
    and cross-worker merges; merging replicates the statistics of the
    concatenated stream up to floating-point reassociation.
    """

    __slots__ = ("n", "mean", "m2")

    def __init__(self, n: int = 0, mean: float = 0.0, m2: float = 0.0) -> None:
        self.n = n
        self.mean = mean
        self.m2 = m2

    @classmethod
    def of(cls, values) -> "Accumulator":
        acc = cls()
        acc.add_batch(np.asarray(values, dtype=np.float64))
        return acc

    def update(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def add_batch(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        k = values.size
        if k == 0:
            return
        bmean = float(values.mean())
        bm2 = float(np.sum((values - bmean) ** 2))
        self._combine(k, bmean, bm2)

    def merge(self, other: "Accumulator") -> None:
        self._combine(other.n, other.mean, other.m2)

    def _combine(self, n2: int, mean2: float, m22: float) -> None:
        if n2 == 0:
            return
        n = self.n + n2
        delta = mean2 - self.mean
        self.mean += delta * n2 / n
        self.m2 += m22 + delta * delta * self.n * n2 / n
        self.n = n

    def copy(self) -> "Accumulator":
        return Accumulator(self.n, self.mean, self.m2)

    def variance(self, ddof: int = 1) -> float:
        """Sample variance of the accumulated terms (n-1 divisor)."""
        if self.n <= ddof:
            raise ValueError(f"need more than {ddof} values, have {self.n}")
        return self.m2 / (self.n - ddof)

    def __repr__(self) -> str:
        return f"Accumulator(n={self.n}, mean={self.mean}, m2={self.m2})"


@dataclass(frozen=True)
class EstimateReport:
    """Result of one estimation run.

    ``estimate`` is in variance units of f.  ``term_variance`` is the
    sample variance of the per-sample terms (not divided by n) and
    ``std_error`` = sqrt(term_variance / n); both are None for the biased
    original kind.  ``evals`` counts distinct function evaluations for the
    whole run; for a single-set run it equals n * cost(kind).
    """

    kind: EstimatorKind
    u: IndexSet
    n: int
    estimate: float
    term_variance: float | None
    std_error: float | None
    evals: int
    biased: bool = False


# ---------------------------------------------------------------------------
# streaming runners


class _BatchEvals:
    """Caches the function values of one sample batch by blend signature.

    Signatures are canonicalized (a full blend is the plain left point, an
    empty one the plain right point) so repeated requests across several
    target sets u cost one evaluation each, which is what makes sharing
    sample vectors across sets cheaper than independent runs.
    """

    def __init__(self, model: Model, arrays: dict[str, np.ndarray]) -> None:
        self.model = model
        self.arrays = arrays
        self._cache: dict[tuple, np.ndarray] = {}

    def plain(self, role: str) -> np.ndarray:
        key = ("plain", role)
        if key not in self._cache:
            self._cache[key] = self.model.evaluate(self.arrays[role])
        return self._cache[key]

    def blended(self, role_a: str, role_b: str, u: IndexSet) -> np.ndarray:
        if u.bits == (1 << u.dim) - 1:
            return self.plain(role_a)
        if u.bits == 0:
            return self.plain(role_b)
        key = (role_a, role_b, u.bits)
        if key not in self._cache:
            self._cache[key] = self.model.evaluate(
                blend(self.arrays[role_a], self.arrays[role_b], u)
            )
        return self._cache[key]


def _batch_terms(ev: _BatchEvals, kind: EstimatorKind, u: IndexSet, center: float | None):
    tag = kind.tag
    if tag == "correlation1":
        return ev.plain("x") * (ev.blended("x", "y", u) - ev.plain("y"))
    if tag == "correlation2":
        return (ev.plain("x") - ev.blended("z", "x", u)) * (
            ev.blended("x", "y", u) - ev.plain("y")
        )
    if tag == "oracle1":
        return (ev.plain("x") - center) * (ev.blended("x", "y", u) - ev.plain("y"))
    if tag == "oracle2":
        return (ev.plain("x") - center) * (ev.blended("x", "y", u) - center)
    if tag == "generalized":
        v = kind.v if kind.v is not None else u.complement()
        v2 = kind.v2 if kind.v2 is not None else u.complement()
        if not v.isdisjoint(u) or not v2.isdisjoint(u):
            raise ValueError(f"v={v} and v2={v2} must be disjoint from u={u}")
        return (ev.plain("x") - ev.blended("x", "z", v)) * (
            ev.blended("x", "y", u) - ev.blended("y", "w", v2)
        )
    if tag == "upper":
        diff = ev.plain("x") - ev.blended("y", "x", u)
        return 0.5 * diff * diff
    raise ValueError(f"no streaming term for {tag!r}")


def _resolve_center(model: Model, kind: EstimatorKind) -> float | None:
    if kind.tag not in _ORACLE_TAGS:
        return None
    return model.mean() if kind.center is None else kind.center


def accumulate_terms(
    model: Model,
    kind: EstimatorKind,
    us: Sequence[IndexSet],
    n: int,
    rng: RngSpec,
    batch_size: int = DEFAULT_BATCH,
) -> tuple[dict[IndexSet, Accumulator], int]:
    """Stream n per-sample terms for each set into accumulators.

    Returns the per-set accumulators and the total count of distinct
    function evaluations.  Not defined for the original kind, whose
    estimate is not a plain term mean.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if not us:
        raise ValueError("need at least one target set")
    for u in us:
        if u.dim != model.dim:
            raise DimensionError(f"set {u} has dimension {u.dim}, model has {model.dim}")
    if kind.tag == "original":
        raise ValueError("the original estimator is not a plain term mean")

    center = _resolve_center(model, kind)
    sampler = BlockSampler(rng, model.dim)
    roles = _ROLES_NEEDED[kind.tag]
    accs = {u: Accumulator() for u in us}
    start = model.counter.count
    done = 0
    while done < n:
        b = min(batch_size, n - done)
        ev = _BatchEvals(model, {role: sampler.draw_role(role, b) for role in roles})
        for u in us:
            accs[u].add_batch(_batch_terms(ev, kind, u, center))
        done += b
    return accs, model.counter.count - start


def run_multi_u(
    model: Model,
    kind: EstimatorKind,
    us: Sequence[IndexSet],
    n: int,
    rng: RngSpec,
    batch_size: int = DEFAULT_BATCH,
) -> list[EstimateReport]:
    """Estimate the index of several sets u from shared sample vectors.

    Per-set results are distributed exactly as single-set runs with the
    same rng; only the evaluation sharing differs.  The reported ``evals``
    is the run total and counts each distinct blend signature once per
    sample (e.g. plain f(x) and f(y) are evaluated once, not once per u).

    Results depend only on (seed, replicate, n, batch_size), never on
    thread scheduling; batch_size is the deterministic partition policy.
    """
    if kind.tag == "original":
        if n < 1:
            raise ValueError("need at least one sample")
        for u in us:
            if u.dim != model.dim:
                raise DimensionError(f"set {u} has dimension {u.dim}, model has {model.dim}")
        return _run_original_multi(model, us, n, rng, batch_size)
    accs, evals = accumulate_terms(model, kind, us, n, rng, batch_size)
    return [
        EstimateReport(
            kind=kind,
            u=u,
            n=n,
            estimate=accs[u].mean,
            term_variance=accs[u].variance() if n > 1 else None,
            std_error=math.sqrt(accs[u].variance() / n) if n > 1 else None,
            evals=evals,
        )
        for u in us
    ]


def run_estimator(
    model: Model,
    kind: EstimatorKind,
    u: IndexSet,
    n: int,
    rng: RngSpec,
    batch_size: int = DEFAULT_BATCH,
) -> EstimateReport:
    """Estimate lower_u (upper_u for the ``upper`` kind) from n samples."""
    return run_multi_u(model, kind, [u], n, rng, batch_size)[0]


def _run_original_multi(model, us, n, rng, batch_size) -> list[EstimateReport]:
    if n < 2:
        raise ValueError("the original estimator needs n >= 2")
    sampler = BlockSampler(rng, model.dim)
    cross = {u: Accumulator() for u in us}
    fb_mean = {u: Accumulator() for u in us}
    fx_mean = Accumulator()
    start = model.counter.count
    done = 0
    while done < n:
        b = min(batch_size, n - done)
        ev = _BatchEvals(model, {role: sampler.draw_role(role, b) for role in ("x", "y")})
        fx = ev.plain("x")
        fx_mean.add_batch(fx)
        for u in us:
            fb = ev.blended("x", "y", u)
            cross[u].add_batch(fx * fb)
            fb_mean[u].add_batch(fb)
        done += b
    evals = model.counter.count - start
    reports = []
    for u in us:
        mu_hat = 0.5 * (fx_mean.mean + fb_mean[u].mean)
        reports.append(
            EstimateReport(
                kind=EstimatorKind.original(),
                u=u,
                n=n,
                estimate=cross[u].mean - mu_hat**2,
                term_variance=None,
                std_error=None,
                evals=evals,
                biased=True,
            )
        )
    return reports


def estimate_original(model: Model, xs, ys, u: IndexSet) -> EstimateReport:
    """Cross-moment estimator with the pooled mean correction.

    estimate = (1/n) sum f(x_i) f(x_i,u # y_i,-u) - muhat^2 with
    muhat = (1/2n) sum (f(x_i) + f(x_i,u # y_i,-u)).  Biased: the
    squared mean estimate does not decouple from the cross term.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 2 or xs.shape != ys.shape:
        raise DimensionError("xs and ys must be (n, d) arrays of equal shape")
    n = xs.shape[0]
    if n < 2:
        raise ValueError("the original estimator needs n >= 2")
    start = model.counter.count
    fx = model.evaluate(xs)
    fb = model.evaluate(blend(xs, ys, u))
    mu_hat = (float(fx.sum()) + float(fb.sum())) / (2.0 * n)
    return EstimateReport(
        kind=EstimatorKind.original(),
        u=u,
        n=n,
        estimate=float(np.mean(fx * fb)) - mu_hat**2,
        term_variance=None,
        std_error=None,
        evals=model.counter.count - start,
        biased=True,
    )
