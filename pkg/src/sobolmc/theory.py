"""Variance analysis of the generalized estimator, and the exact oracle.

For product-form integrands the generalized per-sample term is a product
of two centered factors

    D = f(x) - f(x_v # z_-v),      E = f(x_u # y_-u) - f(y_v' # w_-v'),

whose squares Q_v = D^2 and Q_uv' = E^2 expand into three-term products
of the per-coordinate factor values.  The estimator's sampling variance
satisfies n var = E(Q_v Q_uv') - lower_u^2, so the size of E(Q_v^2)
over choices of v is a tractable proxy objective for picking which
coordinates to hold fixed; it is minimized by v = complement(u).

Two closed forms of E(Q_v^2) = E(D^4) are provided: the exact binomial
expansion in the per-factor raw moments, and the simplified "proxy" form

    2 prod_j m4_j - 2 prod_{j in v} m4_j prod_{j not in v} m2_j^2

which agrees with the exact value exactly when m1_j m3_j = m2_j^2 for
every coordinate outside v (e.g. constant factors, or mu_j = tau_j
factors with symmetric shapes) and is a monotone surrogate otherwise.

``enumerate_expectation`` is the brute-force oracle: for tabulated models
it computes the exact mean and variance of any estimator's per-sample
term by summing over all joint grid states of the 2-4 input vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import IndexSet
from .estimators import EstimatorKind
from .models import BudgetError, DiscreteModel, Model, ProductModel, factor_raw_moments


@dataclass(frozen=True)
class QFactors:
    """Raw moments m1..m4 of every factor h_j of a product model."""

    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.m4 < self.m2**2 - 1e-12):
            raise ValueError("infeasible factor moments: m4 < m2^2")

    @classmethod
    def from_model(cls, model: ProductModel) -> "QFactors":
        moments = np.array(
            [factor_raw_moments(model, j) for j in range(1, model.dim + 1)]
        )
        return cls(moments[:, 0], moments[:, 1], moments[:, 2], moments[:, 3])


def q_v(model: ProductModel, x, z, v: IndexSet):
    """Squared left factor Q_v = (f(x) - f(x_v # z_-v))^2, expanded.

    Evaluated as the three-term product of squared/cross factor values;
    identical to squaring the difference directly.
    """
    hx = model.factor_values(np.asarray(x, dtype=np.float64))
    hz = model.factor_values(np.asarray(z, dtype=np.float64))
    m = v.mask()
    t1 = np.prod(hx**2, axis=-1)
    t2 = np.prod(np.where(m, hx**2, hz**2), axis=-1)
    t3 = np.prod(np.where(m, hx**2, hx * hz), axis=-1)
    return t1 + t2 - 2.0 * t3


def q_uv(model: ProductModel, x, y, w, u: IndexSet, v2: IndexSet):
    """Squared right factor Q_uv' = (f(x_u # y_-u) - f(y_v' # w_-v'))^2.

    Requires v' disjoint from u; the cross term takes h(x)h(w) on u,
    h(y)^2 on v', and h(y)h(w) on the rest.
    """
    if not v2.isdisjoint(u):
        raise ValueError(f"v2={v2} must be disjoint from u={u}")
    hx = model.factor_values(np.asarray(x, dtype=np.float64))
    hy = model.factor_values(np.asarray(y, dtype=np.float64))
    hw = model.factor_values(np.asarray(w, dtype=np.float64))
    mu_ = u.mask()
    mv2 = v2.mask()
    a2 = np.prod(np.where(mu_, hx**2, hy**2), axis=-1)
    b2 = np.prod(np.where(mv2, hy**2, hw**2), axis=-1)
    cross = np.prod(np.where(mu_, hx * hw, np.where(mv2, hy**2, hy * hw)), axis=-1)
    return a2 + b2 - 2.0 * cross


def _moment_products(qf: QFactors, v: IndexSet) -> tuple[float, float, float]:
    in_v = v.mask()
    p_all_m4 = 1.0
    p_mixed_m2 = 1.0
    p_mixed_m13 = 1.0
    for j in range(v.dim):
        p_all_m4 *= qf.m4[j]
        p_mixed_m2 *= qf.m4[j] if in_v[j] else qf.m2[j] ** 2
        p_mixed_m13 *= qf.m4[j] if in_v[j] else qf.m1[j] * qf.m3[j]
    return p_all_m4, p_mixed_m2, p_mixed_m13


def diff_fourth_moment(model: ProductModel, v: IndexSet) -> float:
    """Exact E[(f(x) - f(x_v # z_-v))^4] from the factor raw moments.

    Binomial expansion of the fourth power:
    2 prod m4 + 6 prod_v m4 prod_-v m2^2 - 8 prod_v m4 prod_-v m1 m3.
    """
    t1, t2, t3 = _moment_products(QFactors.from_model(model), v)
    return 2.0 * t1 + 6.0 * t2 - 8.0 * t3


def diff_fourth_moment_proxy(model: ProductModel, v: IndexSet) -> float:
    """Simplified objective 2 prod m4 - 2 prod_v m4 prod_-v m2^2.

    Equals diff_fourth_moment exactly when m1_j m3_j = m2_j^2 for all
    j outside v; in general it is the tractable surrogate whose
    minimizer over v inside complement(u) is always the full complement.
    """
    t1, t2, _ = _moment_products(QFactors.from_model(model), v)
    return 2.0 * t1 - 2.0 * t2


_OBJECTIVES = {
    "proxy": diff_fourth_moment_proxy,
    "exact": diff_fourth_moment,
}


def argmin_v(model: ProductModel, u: IndexSet, objective: str = "proxy") -> IndexSet:
    """Exhaustive minimizer of the chosen objective over v in complement(u).

    Ties break toward the lexicographically smallest bitmask.  Under the
    proxy objective the minimizer always contains every coordinate of the
    complement whose factor has m4 > m2^2.
    """
    if objective not in _OBJECTIVES:
        raise ValueError(f"objective must be one of {sorted(_OBJECTIVES)}")
    comp = u.complement()
    if len(comp) > 20:
        raise ValueError(f"exhaustive search over 2^{len(comp)} subsets refused")
    fn = _OBJECTIVES[objective]
    best_v = None
    best_val = math.inf
    for v in comp.subsets():  # increasing bitmask order
        val = fn(model, v)
        if val < best_val:
            best_val = val
            best_v = v
    return best_v


# ---------------------------------------------------------------------------
# brute-force enumeration oracle


@dataclass(frozen=True)
class EnumerationBudget:
    """Cap on the number of joint grid states an enumeration may visit."""

    max_states: int = 10_000_000


#: independent input vectors consumed per estimator kind
N_VECTORS = {
    "original": 2,
    "correlation1": 2,
    "correlation2": 3,
    "oracle1": 2,
    "oracle2": 2,
    "upper": 2,
    "generalized": 4,
}


def _blend_table(model: DiscreteModel, u: IndexSet) -> np.ndarray:
    """(m, m) array: entry [a, b] = f at (coords of state a on u, of b off u)."""
    m = model.levels**model.dim
    digits = np.stack(np.unravel_index(np.arange(m), model.table.shape), axis=-1)
    blended = np.where(u.mask(), digits[:, None, :], digits[None, :, :])
    flat = np.ravel_multi_index(
        tuple(blended[..., j] for j in range(model.dim)), model.table.shape
    )
    return model.table.reshape(-1)[flat]


def _stable_mean(t: np.ndarray) -> float:
    # pairwise partial sums along trailing axes, compensated outer sum
    parts = np.sum(t.reshape(t.shape[0], -1), axis=1)
    return math.fsum(parts.tolist()) / t.size


def enumerate_expectation(
    model: DiscreteModel,
    kind: EstimatorKind,
    u: IndexSet,
    budget: EnumerationBudget | int = EnumerationBudget(),
) -> tuple[float, float]:
    """Exact mean and variance of a per-sample term over all grid states.

    Sums the term over every joint state of the input vectors the kind
    consumes (m^2 .. m^4 states for m = levels^dim), which is the
    distribution induced by uniform sampling of the piecewise-constant
    model.  Oracle centers default to the exact table mean.
    """
    if u.dim != model.dim:
        raise ValueError(f"set {u} has dimension {u.dim}, model has {model.dim}")
    max_states = budget if isinstance(budget, int) else budget.max_states
    m = model.levels**model.dim
    states = m ** N_VECTORS[kind.tag]
    if states > max_states:
        raise BudgetError(
            f"{kind.tag} enumeration needs {states} joint states, budget is {max_states}"
        )

    f = model.table.reshape(-1)
    tag = kind.tag
    if tag in ("correlation1", "correlation2", "oracle1", "oracle2", "upper", "original"):
        fu = _blend_table(model, u)  # fu[a, b] = f(a_u # b_-u)
        right = fu - f[None, :]  # f(x_u # y_-u) - f(y), axes (x, y)
        if tag == "correlation1":
            t = f[:, None] * right
        elif tag == "correlation2":
            # left factor f(x) - f(z_u # x_-u) has axes (x, z)
            left = f[:, None] - fu.T
            t = left[:, None, :] * right[:, :, None]  # axes (x, y, z)
        elif tag == "oracle1":
            c = kind.center if kind.center is not None else model.mean()
            t = (f[:, None] - c) * right
        elif tag == "oracle2":
            c = kind.center if kind.center is not None else model.mean()
            t = (f[:, None] - c) * (fu - c)
        elif tag == "upper":
            diff = f[:, None] - fu.T  # f(x) - f(y_u # x_-u), axes (x, y)
            t = 0.5 * diff * diff
        else:  # original: the raw cross moment, expectation mu^2 + lower_u
            t = f[:, None] * fu
    else:  # generalized
        v = kind.v if kind.v is not None else u.complement()
        v2 = kind.v2 if kind.v2 is not None else u.complement()
        if not v.isdisjoint(u) or not v2.isdisjoint(u):
            raise ValueError(f"v={v} and v2={v2} must be disjoint from u={u}")
        fv = _blend_table(model, v)  # f(x_v # z_-v), axes (x, z)
        fu = _blend_table(model, u)  # f(x_u # y_-u), axes (x, y)
        fv2 = _blend_table(model, v2)  # f(y_v' # w_-v'), axes (y, w)
        left = f[:, None] - fv
        # axes (x, y, z, w)
        t = left[:, None, :, None] * (fu[:, :, None, None] - fv2[None, :, None, :])

    mean = _stable_mean(t)
    var = _stable_mean((t - mean) ** 2)
    return mean, var
