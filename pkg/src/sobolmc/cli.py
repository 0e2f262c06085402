"""Command-line front end.

Subcommands: ``estimate`` (one estimator, one target set), ``anova``
(exact mean, variance, and per-set indices), ``efficiency-table`` (the
replicated benchmark studies, CSV or JSON), and ``verify`` (the exact
identity suite on random models).

Exit codes: 0 success, 1 numeric/runtime failure, 2 usage error
(including enumeration-budget overflows).  With a fixed ``--seed`` every
command's output is bit-identical across runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from .core import DimensionError, IndexSet, RngSpec
from .estimators import EstimatorKind, run_estimator
from .experiments import (
    BUILTIN_STUDIES,
    config_from_json,
    csv_text,
    product6_ratio_note,
    resolve_workers,
    run_efficiency_experiment,
    write_csv,
)
from .models import (
    BUILTIN_MODELS,
    BudgetError,
    DiscreteModel,
    GFunction,
    Model,
    ProductModel,
    analytic_anova,
    builtin_model,
    g_as_product,
    model_from_json,
    product_set_indices,
)
from .verification import verify_suite

_ESTIMATOR_ALIASES = {
    "corr1": "correlation1",
    "corr2": "correlation2",
    "orcl1": "oracle1",
    "orcl2": "oracle2",
    "gen": "generalized",
    "upper": "upper",
    "original": "original",
}

MAX_ANOVA_LISTING_DIM = 12


class UsageError(Exception):
    """Bad arguments detected after parsing; exits with code 2."""


def _load_model(spec: str) -> Model:
    if spec in BUILTIN_MODELS:
        return builtin_model(spec)
    path = Path(spec)
    if not path.exists():
        raise UsageError(
            f"--model must be one of {BUILTIN_MODELS} or an existing JSON file, got {spec!r}"
        )
    try:
        return model_from_json(json.loads(path.read_text()))
    except (ValueError, DimensionError) as exc:
        raise UsageError(f"bad model file {spec}: {exc}") from exc


def _parse_set(text: str, dim: int, what: str = "--u") -> IndexSet:
    try:
        return IndexSet.parse(text, dim)
    except ValueError as exc:
        raise UsageError(f"{what}: {exc}") from exc


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _emit(records: list[dict], fmt: str, out: str | None) -> None:
    """Write records as a JSON list or a CSV table with a header row."""
    if fmt == "json":
        text = json.dumps(
            [{k: _jsonable(v) for k, v in rec.items()} for rec in records], indent=2
        )
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        keys = list(records[0].keys())
        writer.writerow(keys)
        for rec in records:
            writer.writerow(["" if rec[k] is None else rec[k] for k in keys])
        text = buf.getvalue().rstrip("\n")
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_estimate(args) -> int:
    model = _load_model(args.model)
    u = _parse_set(args.u, model.dim)
    tag = _ESTIMATOR_ALIASES[args.estimator]
    if tag == "oracle1":
        kind = EstimatorKind.oracle1(args.center)
    elif tag == "oracle2":
        kind = EstimatorKind.oracle2(args.center)
    elif tag == "generalized":
        v = _parse_set(args.v, model.dim, "--v") if args.v is not None else None
        v2 = _parse_set(args.v2, model.dim, "--v2") if args.v2 is not None else None
        try:
            kind = EstimatorKind.generalized(v, v2)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        kind = EstimatorKind(tag)

    try:
        report = run_estimator(model, kind, u, args.n, RngSpec(args.seed))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(
        [
            {
                "model": args.model,
                "estimator": args.estimator,
                "u": str(u),
                "n": report.n,
                "seed": args.seed,
                "estimate": report.estimate,
                "std_error": report.std_error,
                "term_variance": report.term_variance,
                "evals": report.evals,
                "biased": report.biased,
            }
        ],
        args.format,
        args.out,
    )
    return 0


def _anova_records(model: Model, model_name: str, only: IndexSet | None) -> list[dict]:
    if isinstance(model, (ProductModel, GFunction)):
        prod = g_as_product(model) if isinstance(model, GFunction) else model
        mu = model.mean()
        # lower index of the full set is the total variance
        sigma2 = product_set_indices(prod, IndexSet.full(model.dim))[1]
        sigma2_of = lambda u: product_set_indices(prod, u)  # noqa: E731
    elif isinstance(model, DiscreteModel):
        report = analytic_anova(model)
        mu = report.mu
        sigma2 = report.sigma2
        sigma2_of = lambda u: (report.sigma2_u[u], report.lower_u[u], report.upper_u[u])  # noqa: E731
    else:  # pragma: no cover - builtin families are exhaustive
        raise UsageError(f"no exact ANOVA for {type(model).__name__}")

    note_for = product6_ratio_note if model_name == "product6" else (lambda _u: "")
    sets: list[IndexSet]
    if only is not None:
        sets = [only]
    else:
        if model.dim > MAX_ANOVA_LISTING_DIM:
            raise UsageError(
                f"full listing limited to d <= {MAX_ANOVA_LISTING_DIM}; pass --u for one set"
            )
        sets = sorted(
            (u for u in IndexSet.full(model.dim).subsets() if len(u) > 0),
            key=lambda u: (len(u), u.bits),
        )
    records = []
    for u in sets:
        s2u, lower, upper = sigma2_of(u)
        records.append(
            {
                "u": str(u),
                "mu": mu,
                "sigma2": sigma2,
                "sigma2_u": s2u,
                "lower": lower,
                "upper": upper,
                "lower_rel": lower / sigma2,
                "note": note_for(u),
            }
        )
    return records


def _cmd_anova(args) -> int:
    model = _load_model(args.model)
    only = _parse_set(args.u, model.dim) if args.u is not None else None
    _emit(_anova_records(model, args.model, only), args.format, args.out)
    return 0


def _cmd_efficiency_table(args) -> int:
    if (args.benchmark is None) == (args.config is None):
        raise UsageError("pass exactly one of --benchmark or --config")
    workers = resolve_workers(args.threads)
    if args.benchmark is not None:
        study = BUILTIN_STUDIES[args.benchmark]
        table = study(
            n=args.n,
            replicates=args.replicates,
            seed=args.seed,
            center=args.center,
            workers=workers,
            include_original=args.include_original,
        )
    else:
        try:
            config = config_from_json(json.loads(Path(args.config).read_text()))
        except (OSError, ValueError, DimensionError) as exc:
            raise UsageError(f"bad experiment config {args.config}: {exc}") from exc
        if config.workers is None:
            config.workers = workers
        table = run_efficiency_experiment(config)

    if args.format == "json":
        text = json.dumps(table.as_dict(), indent=2)
    else:
        text = csv_text(table).rstrip("\n")
    if args.out:
        if args.format == "csv":
            write_csv(table, args.out)
        else:
            Path(args.out).write_text(text + "\n")
    else:
        print(text)
    for row in table.rows:
        if row.note:
            print(f"# note {row.u}: {row.note}", file=sys.stderr)
    return 0


def _cmd_verify(args) -> int:
    ok = verify_suite(
        levels=args.levels,
        dims=args.dims,
        trials=args.trials,
        seed=args.seed,
        max_states=args.max_states,
        corrupt=args.corrupt,
        log=print,
    )
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sobolmc",
        description="Monte Carlo Sobol' index estimation, exact oracles, and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="stream seed (default 0)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, help="write output to this path")

    p_est = sub.add_parser("estimate", help="run one estimator for one target set")
    add_common(p_est)
    p_est.add_argument("--model", required=True, help="builtin alias (g, product6) or JSON file")
    p_est.add_argument("--u", required=True, help='target coordinates, e.g. "1,3"')
    p_est.add_argument(
        "--estimator", choices=sorted(_ESTIMATOR_ALIASES), default="corr2"
    )
    p_est.add_argument("--n", type=int, default=100_000, help="samples (default 1e5)")
    p_est.add_argument("--center", type=float, default=None, help="oracle center (default: exact mean)")
    p_est.add_argument("--v", default=None, help="generalized: left blending set")
    p_est.add_argument("--v2", default=None, help="generalized: right blending set")
    p_est.set_defaults(func=_cmd_estimate)

    p_anova = sub.add_parser("anova", help="exact mean, variance, and Sobol' indices")
    add_common(p_anova)
    p_anova.add_argument("--model", required=True)
    p_anova.add_argument("--u", default=None, help="restrict to one set")
    p_anova.set_defaults(func=_cmd_anova)

    p_eff = sub.add_parser("efficiency-table", help="replicated efficiency benchmark")
    add_common(p_eff)
    p_eff.set_defaults(format="csv")
    p_eff.add_argument("--benchmark", choices=sorted(BUILTIN_STUDIES), default=None)
    p_eff.add_argument("--config", default=None, help="experiment config JSON file")
    p_eff.add_argument("--n", type=int, default=1_000_000)
    p_eff.add_argument("--replicates", type=int, default=10)
    p_eff.add_argument("--center", type=float, default=None)
    p_eff.add_argument("--include-original", action="store_true")
    p_eff.add_argument("--threads", type=int, default=None, help="replicate workers (or SOBOL_THREADS)")
    p_eff.set_defaults(func=_cmd_efficiency_table)

    p_ver = sub.add_parser("verify", help="exact identity suite on random models")
    p_ver.add_argument("--levels", type=int, default=3)
    p_ver.add_argument("--dims", type=int, default=2)
    p_ver.add_argument("--trials", type=int, default=5)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--max-states", type=int, default=10_000_000)
    p_ver.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
