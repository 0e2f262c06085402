"""Self-check suite: exact identities on randomly drawn models.

For random tabulated models every estimator expectation is a finite sum,
so the suite can check, with no sampling error, that

* the ANOVA report satisfies its ordering, complement, and effect-sum
  identities,
* every unbiased estimator's enumerated expectation equals the closed
  index (the total index for the squared-difference kind), for every
  target set and every admissible blending pair (v, v'),
* the original estimator's cross moment enumerates to mu^2 + lower_u,
* the expanded Q factors equal the literal squared differences.

Any violation is reported on the ledger and fails the suite.
"""

from __future__ import annotations

import math

import numpy as np

from .core import IndexSet, blend
from .estimators import EstimatorKind
from .models import BudgetError, DiscreteModel, ProductModel, discrete_anova
from .theory import N_VECTORS, EnumerationBudget, enumerate_expectation, q_uv, q_v

REL_TOL = 1e-10
Q_TOL = 1e-12


def _rel_err(got: float, want: float) -> float:
    scale = max(abs(want), 1e-30)
    return abs(got - want) / scale


class _Ledger:
    def __init__(self, log) -> None:
        self.log = log or (lambda _msg: None)
        self.checks = 0
        self.failures = 0

    def check(self, ok: bool, label: str) -> None:
        self.checks += 1
        if not ok:
            self.failures += 1
            self.log(f"[FAIL] {label}")

    def close(self, label: str) -> None:
        status = "PASS" if self.failures == 0 else "FAIL"
        self.log(f"[{status}] {label}: {self.checks - self.failures}/{self.checks} checks")


def _check_anova_invariants(ledger: _Ledger, report, d: int, trial: int) -> None:
    empty = IndexSet.empty(d)
    full = IndexSet.full(d)
    ledger.check(report.sigma2_u[empty] == 0.0, f"trial {trial}: sigma2_empty = 0")
    ledger.check(report.lower_u[empty] == 0.0, f"trial {trial}: lower_empty = 0")
    total = math.fsum(report.sigma2_u[u] for u in full.subsets())
    ledger.check(
        _rel_err(total, report.sigma2) < REL_TOL, f"trial {trial}: effect variances sum to sigma2"
    )
    for u in full.subsets():
        lo, hi = report.lower_u[u], report.upper_u[u]
        ledger.check(
            -1e-12 <= lo <= hi + 1e-12 <= report.sigma2 + 1e-9,
            f"trial {trial}: 0 <= lower <= upper <= sigma2 at u={u}",
        )
        ledger.check(
            _rel_err(report.lower_u[u] + report.upper_u[u.complement()], report.sigma2) < REL_TOL,
            f"trial {trial}: complement identity at u={u}",
        )


def _check_enumerations(
    ledger: _Ledger,
    model: DiscreteModel,
    report,
    budget: EnumerationBudget,
    trial: int,
    corrupt: bool,
) -> None:
    d = model.dim
    mu = model.mean()
    for u in IndexSet.full(d).subsets():
        if len(u) == 0:
            continue
        lower, upper = report.lower_u[u], report.upper_u[u]
        plain_kinds = [
            ("correlation1", EstimatorKind.correlation1(), lower),
            ("correlation2", EstimatorKind.correlation2(), lower),
            ("oracle1", EstimatorKind.oracle1(mu), lower),
            ("oracle2", EstimatorKind.oracle2(mu), lower),
            ("upper", EstimatorKind.upper(), upper),
        ]
        for name, kind, want in plain_kinds:
            got, _ = enumerate_expectation(model, kind, u, budget)
            if corrupt and name == "correlation2":
                got += 1e-3  # test hook: a deliberately broken estimator
            ledger.check(_rel_err(got, want) < REL_TOL, f"trial {trial}: E[{name}] at u={u}")

        got, _ = enumerate_expectation(model, EstimatorKind.original(), u, budget)
        ledger.check(
            _rel_err(got, mu**2 + lower) < REL_TOL,
            f"trial {trial}: E[original cross moment] at u={u}",
        )

        comp = u.complement()
        for v in comp.subsets():
            for v2 in comp.subsets():
                got, _ = enumerate_expectation(
                    model, EstimatorKind.generalized(v, v2), u, budget
                )
                ledger.check(
                    _rel_err(got, lower) < REL_TOL,
                    f"trial {trial}: E[generalized v={v} v2={v2}] at u={u}",
                )


def _check_q_identities(ledger: _Ledger, rng: np.random.Generator, trial: int) -> None:
    d = int(rng.integers(2, 5))
    model = ProductModel(
        rng.uniform(0.5, 1.5, d),
        rng.uniform(0.1, 1.0, d),
        [("uniform", "tent")[int(b)] for b in rng.integers(0, 2, d)],
    )
    x, y, z, w = (rng.random((100, d)) for _ in range(4))
    u = IndexSet.from_indices([1], d)
    comp = u.complement()
    for v in comp.subsets():
        direct = (model.evaluate(x) - model.evaluate(blend(x, z, v))) ** 2
        expanded = q_v(model, x, z, v)
        ledger.check(
            float(np.max(np.abs(expanded - direct))) < Q_TOL * max(1.0, float(np.max(direct))),
            f"trial {trial}: Q_v equals the squared difference, v={v}",
        )
        right = (model.evaluate(blend(x, y, u)) - model.evaluate(blend(y, w, v))) ** 2
        expanded2 = q_uv(model, x, y, w, u, v)
        ledger.check(
            float(np.max(np.abs(expanded2 - right))) < Q_TOL * max(1.0, float(np.max(right))),
            f"trial {trial}: Q_uv' equals the squared difference, v'={v}",
        )


def verify_suite(
    levels: int = 3,
    dims: int = 2,
    trials: int = 5,
    seed: int = 0,
    max_states: int = EnumerationBudget().max_states,
    corrupt: bool = False,
    log=print,
) -> bool:
    """Run the exact-identity suite on random models; True iff all pass.

    Raises BudgetError up front when the requested grid would exceed the
    enumeration budget.
    """
    states = (levels**dims) ** max(N_VECTORS.values())
    if states > max_states:
        raise BudgetError(
            f"L={levels}, d={dims} needs {states} joint states, budget is {max_states}"
        )
    budget = EnumerationBudget(max_states)
    ledger = _Ledger(log)
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
        model = DiscreteModel(rng.random((levels,) * dims))
        report = discrete_anova(model)
        _check_anova_invariants(ledger, report, dims, trial)
        _check_enumerations(ledger, model, report, budget, trial, corrupt)
        _check_q_identities(ledger, rng, trial)
    ledger.close(f"verify L={levels} d={dims} trials={trials}")
    return ledger.failures == 0
