"""Command-line front end.

Subcommands: ``simulate-size`` (empirical test-size curves from a config
file), ``moments`` (exact variance components for a model/constraint),
``diagnose`` (Berry-Esseen diagnostic report), ``test`` (run a test on a
data CSV), and ``selfcheck`` (exact-identity suite).

Exit codes: 0 success, 1 selfcheck failure, 2 invalid input or
configuration, 3 runtime degeneracy.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import __version__
from .constraints import ConstraintParseError, PolyConstraint, parse_constraint
from .experiments import (
    RedrawBudgetExceededError,
    SizeExperimentConfig,
    default_levels,
    run_diagnostics,
    run_size_experiment,
    write_metadata,
    write_size_csv,
)
from .models import CovModel, NotPositiveDefiniteError, equicorrelation_cov, one_factor_cov
from .moments import sigma_g_sq, sigma_h_sq, wishart_cov
from .selfcheck import run_selfcheck
from .ustats import (
    BudgetPlan,
    DegenerateSamplingError,
    DegenerateStudentizerError,
    SingularHypothesisError,
    icu_studentized,
    resolve_budget,
    wald_studentized,
)

EXIT_OK = 0
EXIT_SELFCHECK = 1
EXIT_INPUT = 2
EXIT_DEGENERATE = 3

class ConfigError(ValueError):
    """Config file or flag combination is invalid."""


_INPUT_ERRORS = (
    ConstraintParseError,
    NotPositiveDefiniteError,
    SingularHypothesisError,
    ValueError,
    FileNotFoundError,
    IsADirectoryError,
    configparser.Error,
)
_DEGENERATE_ERRORS = (
    DegenerateSamplingError,
    DegenerateStudentizerError,
    RedrawBudgetExceededError,
)


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_levels(text: str) -> np.ndarray:
    """Level grid tokens: bare values and inclusive ranges ``a:b:step``."""
    values: list[float] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            parts = token.split(":")
            if len(parts) != 3:
                raise ConfigError(f"range token must be a:b:step, got {token!r}")
            a, b, step = (float(x) for x in parts)
            count = int(round((b - a) / step))
            values.extend(np.round(a + step * np.arange(count + 1), 10).tolist())
        else:
            values.append(float(token))
    return np.array(sorted(set(values)))


def _model_from_section(section) -> CovModel:
    kind = section.get("kind")
    if kind == "one_factor":
        return one_factor_cov(_floats(section["loadings"]), _floats(section["uniqueness"]))
    if kind == "equicorrelation":
        return equicorrelation_cov(int(section["p"]), float(section["rho"]))
    if kind == "explicit":
        rows = [_floats(row) for row in section["matrix"].split(";")]
        return CovModel(np.array(rows))
    raise ConfigError(f"unknown model kind {kind!r}")


_SCHEMA = {
    "model": {"kind", "loadings", "uniqueness", "p", "rho", "matrix"},
    "constraint": {"formula"},
    "run": {"n", "budget", "replicates", "seed", "statistics", "levels",
            "sided", "threads"},
}


def _config_line(path: str, needle: str) -> str:
    """Locate the first line starting with ``needle`` for error messages."""
    try:
        with open(path) as handle:
            for number, line in enumerate(handle, start=1):
                if line.strip().lower().startswith(needle.lower()):
                    return f"{path}:{number}"
    except OSError:
        pass
    return path


def _load_config(path: str):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file {path!r} not found")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{_config_line(path, f'[{section}]')}: unknown section [{section}]"
            )
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"{_config_line(path, key)}: unknown key {key!r} in section [{section}]"
                )
    for required in ("model", "constraint", "run"):
        if required not in parser:
            raise ConfigError(f"{path}: missing section [{required}]")
    return parser


def _model_from_flags(args) -> CovModel:
    if args.model == "one_factor":
        if args.loadings is None or args.uniqueness is None:
            raise ConfigError("one_factor model needs --loadings and --uniqueness")
        return one_factor_cov(_floats(args.loadings), _floats(args.uniqueness))
    if args.model == "equicorrelation":
        if args.p is None or args.rho is None:
            raise ConfigError("equicorrelation model needs --p and --rho")
        return equicorrelation_cov(args.p, args.rho)
    if args.model == "explicit":
        if args.matrix is None:
            raise ConfigError("explicit model needs --matrix 'r11,r12;r21,r22;...'")
        return CovModel(np.array([_floats(row) for row in args.matrix.split(";")]))
    raise ConfigError(f"unknown model kind {args.model!r}")


def _add_model_flags(sub):
    sub.add_argument("--model", required=True,
                     choices=("one_factor", "equicorrelation", "explicit"))
    sub.add_argument("--loadings", help="comma-separated loading vector")
    sub.add_argument("--uniqueness", help="comma-separated uniqueness diagonal")
    sub.add_argument("--p", type=int, help="dimension (equicorrelation)")
    sub.add_argument("--rho", type=float, help="off-diagonal value (equicorrelation)")
    sub.add_argument("--matrix", help="explicit matrix, rows split by ';'")


def _sweep_paths(out: str, ns: list[int]) -> list[str]:
    if len(ns) == 1:
        return [out]
    root, ext = os.path.splitext(out)
    return [f"{root}_n{n}{ext or '.csv'}" for n in ns]


def cmd_simulate_size(args) -> int:
    parser = _load_config(args.config)
    model = _model_from_section(parser["model"])
    constraint = parse_constraint(parser["constraint"]["formula"], p=model.p)
    run = parser["run"]
    ns = [int(tok) for tok in run.get("n", "100").replace(",", " ").split()]
    budget = args.budget if args.budget is not None else run.get("budget", "x2")
    replicates = args.replicates if args.replicates is not None else run.getint("replicates", 1000)
    seed = args.seed if args.seed is not None else run.getint("seed", 0)
    sided = args.sided if args.sided is not None else run.get("sided", "two")
    threads = args.threads if args.threads is not None else run.getint("threads", 1)
    statistics = tuple(
        tok.strip() for tok in run.get("statistics", "icu_std, icu_stud").split(",")
    )
    levels = _parse_levels(run.get("levels", "")) if run.get("levels") else default_levels()
    out = args.out or "size_curves.csv"
    for n, path in zip(ns, _sweep_paths(out, ns)):
        config = SizeExperimentConfig(
            model=model, constraint=constraint, n=n, budget=budget,
            statistics=statistics, replicates=replicates, levels=levels,
            seed=seed, sided=sided, threads=threads,
        )
        curve = run_size_experiment(config)
        write_size_csv(curve, path)
        write_metadata(path + ".meta.txt", {
            "constraint": constraint.to_text(),
            "model_p": model.p,
            "n": n,
            "budget": resolve_budget(budget, n),
            "replicates": replicates,
            "seed": seed,
            "sided": sided,
            "statistics": " ".join(statistics),
            "levels": " ".join(f"{a:g}" for a in levels),
            "threads": threads,
            "redraw_total": curve.redraw_total,
            "excluded": " ".join(f"{k}:{v}" for k, v in curve.excluded.items()),
        })
        print(f"wrote {path} ({replicates} replicates, n={n})")
    return EXIT_OK


def cmd_moments(args) -> int:
    model = _model_from_flags(args)
    constraint = parse_constraint(args.constraint, p=model.p)
    sg2 = sigma_g_sq(constraint, model, verify=True)
    sh2 = sigma_h_sq(constraint, model)
    report = run_diagnostics(constraint, model, n=args.n, budget=args.budget,
                             mc_draws=args.mc_draws, seed=args.seed or 0)
    v_cond = float(np.linalg.cond(wishart_cov(model)))
    ratio = "inf" if sg2 == 0.0 else f"{np.sqrt(sh2 / sg2):.10g}"
    if report.singular:
        term2_se = float("inf")
    else:
        term2_se = 6.1 * report.g_abs3_se / (np.sqrt(args.n) * report.sigma_g**3)
    print("sigma_g_sq,sigma_h_sq,ratio,v_cond,be_term1,be_term2,be_term2_se_scaled")
    print(
        f"{sg2:.10g},{sh2:.10g},{ratio},{v_cond:.10g},"
        f"{report.bound_term1:.10g},{report.bound_term2:.10g},{term2_se:.4g}"
    )
    return EXIT_OK


def cmd_diagnose(args) -> int:
    model = _model_from_flags(args)
    constraint = parse_constraint(args.constraint, p=model.p)
    report = run_diagnostics(constraint, model, n=args.n, budget=args.budget,
                             mc_draws=args.mc_draws, seed=args.seed or 0)
    for key, value in vars(report).items():
        print(f"{key} = {value}")
    return EXIT_OK


def _read_data_csv(path: str) -> np.ndarray:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        rows = [row for row in reader if row]
    if len(rows) < 2:
        raise ValueError("data CSV needs a header row plus at least one data row")
    header = rows[0]
    try:
        [float(cell) for cell in header]
    except ValueError:
        pass
    else:
        raise ValueError("first row must be a header of column names, not numbers")
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValueError(f"line {i}: expected {width} cells, got {len(row)}")
        for j, cell in enumerate(row):
            if cell.strip() == "":
                raise ValueError(f"line {i}: missing value in column {header[j]!r}")
            data[i - 2, j] = float(cell)
    if not np.all(np.isfinite(data)):
        raise ValueError("data contains non-finite values")
    return data


def cmd_test(args) -> int:
    X = _read_data_csv(args.data)
    constraint = parse_constraint(args.constraint, p=X.shape[1])
    n = X.shape[0]
    if n < constraint.degree:
        raise ValueError(f"n={n} is below the constraint degree {constraint.degree}")
    if args.statistic == "icu":
        plan = BudgetPlan(n=n, m=constraint.degree,
                          budget=resolve_budget(args.budget, n), seed=args.seed or 0)
        outcome = icu_studentized(constraint, X, plan)
    else:
        outcome = wald_studentized(constraint, X)
    print(f"statistic = {outcome.statistic!r}")
    print(f"zscore = {outcome.zscore!r}")
    print(f"pvalue = {outcome.pvalue!r}")
    print(f"nhat = {outcome.nhat}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    results = run_selfcheck(perturb_kernel=args.perturb_kernel)
    failed = 0
    for item in results:
        status = "PASS" if item.passed else "FAIL"
        failed += not item.passed
        print(f"[{status}] {item.name}: {item.detail}")
    return EXIT_OK if failed == 0 else EXIT_SELFCHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covconstraint",
        description="Polynomial covariance-constraint tests via U-statistics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate-size", help="empirical test-size curves")
    sim.add_argument("--config", required=True, help="INI config file")
    sim.add_argument("--out", help="output CSV path (default size_curves.csv)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--budget", help="absolute N or xK multiple of n")
    sim.add_argument("--threads", type=int, help="0 = all cores")
    sim.add_argument("--sided", choices=("two", "right"))
    sim.set_defaults(func=cmd_simulate_size)

    mom = sub.add_parser("moments", help="exact variance components (CSV row)")
    _add_model_flags(mom)
    mom.add_argument("constraint", help="constraint text or tetrad:u,v,w,z")
    mom.add_argument("--n", type=int, default=100)
    mom.add_argument("--budget", default="x2")
    mom.add_argument("--mc-draws", type=int, default=200_000)
    mom.add_argument("--seed", type=int)
    mom.set_defaults(func=cmd_moments)

    diag = sub.add_parser("diagnose", help="Berry-Esseen diagnostic report")
    _add_model_flags(diag)
    diag.add_argument("constraint")
    diag.add_argument("--n", type=int, default=100)
    diag.add_argument("--budget", default="x2")
    diag.add_argument("--mc-draws", type=int, default=200_000)
    diag.add_argument("--seed", type=int)
    diag.set_defaults(func=cmd_diagnose)

    test = sub.add_parser("test", help="run a studentized test on a data CSV")
    test.add_argument("data", help="CSV with a header row and float cells")
    test.add_argument("constraint")
    test.add_argument("--statistic", choices=("icu", "wald"), default="icu")
    test.add_argument("--budget", default="x2")
    test.add_argument("--seed", type=int)
    test.set_defaults(func=cmd_test)

    check = sub.add_parser("selfcheck", help="run the exact-identity suite")
    check.add_argument("--perturb-kernel", action="store_true", help=argparse.SUPPRESS)
    check.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _DEGENERATE_ERRORS as exc:
        print(f"error (degenerate): {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
