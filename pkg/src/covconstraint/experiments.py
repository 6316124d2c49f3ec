"""Seeded Monte Carlo harness for empirical test-size curves and
normal-approximation diagnostics.

Every replicate derives its random streams from (master seed, purpose,
replicate index), so results are identical for any thread count or
execution order.  All statistics within a replicate share one data draw;
the two incomplete-statistic variants additionally share one Bernoulli
tuple selection.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field, replace
from math import comb, log, sqrt

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import __version__
from ._rng import derive, stream
from .constraints import PolyConstraint
from .models import CovModel, sample_gaussian
from .moments import BEDiagnostics, be_diagnostics, sigma_g_sq, sigma_h_sq
from .ustats import (
    BudgetPlan,
    DegenerateSamplingError,
    DegenerateStudentizerError,
    SingularHypothesisError,
    block_standardized,
    draw_incomplete,
    icu_standardized,
    icu_studentized,
    resolve_budget,
    wald_standardized,
    wald_studentized,
)

STATISTICS = ("wald_std", "wald_stud", "icu_std", "icu_stud", "block", "oracle_normal")
_INCOMPLETE = frozenset({"icu_std", "icu_stud"})


class RedrawBudgetExceededError(RuntimeError):
    """Bernoulli sampling kept selecting zero tuples past the redraw limit."""


def default_levels() -> np.ndarray:
    """Nominal level grid 0.01..0.20 by 0.01 plus 0.25..0.50 by 0.05."""
    return np.round(np.concatenate([
        np.arange(1, 21) / 100.0,
        np.arange(25, 51, 5) / 100.0,
    ]), 2)


@dataclass(frozen=True)
class SizeExperimentConfig:
    """Design of one empirical-size run.

    ``budget`` may be an integer N or an ``'xK'`` multiple of n; the
    ``oracle_normal`` statistic replaces the test z-score by an exact
    standard normal draw and exists to calibrate the harness itself.
    """

    model: CovModel
    constraint: PolyConstraint
    n: int
    budget: object = "x2"
    statistics: tuple = ("icu_std", "icu_stud")
    replicates: int = 1000
    levels: np.ndarray = field(default_factory=default_levels)
    seed: int = 0
    sided: str = "two"
    threads: int = 1
    redraw_limit: int = 100
    split_count: object = "auto"

    def __post_init__(self):
        object.__setattr__(self, "statistics", tuple(self.statistics))
        object.__setattr__(self, "levels", np.asarray(self.levels, dtype=float))
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        unknown = [s for s in self.statistics if s not in STATISTICS]
        if unknown:
            raise ValueError(f"unknown statistics {unknown}; choose from {STATISTICS}")
        if not self.statistics:
            raise ValueError("at least one statistic is required")
        levels = self.levels
        if levels.size == 0 or np.any(levels <= 0.0) or np.any(levels >= 1.0):
            raise ValueError("nominal levels must lie strictly in (0, 1)")
        if np.any(np.diff(levels) <= 0.0):
            raise ValueError("nominal level grid must be strictly increasing")
        if self.sided not in ("two", "right"):
            raise ValueError(f"sided must be 'two' or 'right', got {self.sided!r}")
        if self.n < self.constraint.degree:
            raise ValueError("n must be at least the constraint degree")
        if self.model.p != self.constraint.p:
            raise ValueError("model and constraint dimensions differ")


@dataclass(frozen=True)
class SizeCurve:
    """Empirical sizes per statistic over the nominal grid.

    ``zscores[stat]`` keeps the raw replicate z-scores (NaN where the
    outcome was undefined); ``excluded[stat]`` counts those NaNs and
    ``redraw_total`` counts zero-selection Bernoulli redraws.
    """

    levels: np.ndarray
    sided: str
    zscores: dict
    sizes: dict
    se: dict
    used: dict
    excluded: dict
    redraw_total: int


def _replicate(cfg: SizeExperimentConfig, rep: int) -> tuple[dict, int]:
    model, f = cfg.model, cfg.constraint
    needs_data = any(s != "oracle_normal" for s in cfg.statistics)
    X = None
    if needs_data:
        X = sample_gaussian(model, cfg.n, derive(cfg.seed, "data", rep))
    draw = None
    redraws = 0
    plan = None
    if _INCOMPLETE & set(cfg.statistics):
        for attempt in range(cfg.redraw_limit + 1):
            plan = BudgetPlan(cfg.n, f.degree, cfg.budget,
                              seed=derive(cfg.seed, "tuple-flips", rep, attempt))
            try:
                draw = draw_incomplete(f, X, plan)
                break
            except DegenerateSamplingError:
                redraws += 1
        else:
            raise RedrawBudgetExceededError(
                f"replicate {rep}: zero tuples selected {redraws} times in a row"
            )
    zs: dict[str, float] = {}
    for stat in cfg.statistics:
        try:
            if stat == "wald_std":
                zs[stat] = wald_standardized(f, model, X).zscore
            elif stat == "wald_stud":
                zs[stat] = wald_studentized(f, X).zscore
            elif stat == "icu_std":
                zs[stat] = icu_standardized(f, model, X, plan, draw=draw).zscore
            elif stat == "icu_stud":
                zs[stat] = icu_studentized(f, X, plan, draw=draw,
                                           split_count=cfg.split_count).zscore
            elif stat == "block":
                zs[stat] = block_standardized(f, model, X).zscore
            else:
                zs[stat] = float(stream(cfg.seed, "oracle", rep).standard_normal())
        except DegenerateStudentizerError:
            zs[stat] = float("nan")
    return zs, redraws


def run_size_experiment(config: SizeExperimentConfig) -> SizeCurve:
    """Empirical rejection rates over the nominal grid, one data draw per
    replicate shared across statistics.

    Requesting the exactly-standardized Wald statistic at a singular
    model is a configuration error; the kernel variance is checked to be
    strictly positive up front whenever exact normalizers are needed.
    """
    cfg = replace(config, budget=resolve_budget(config.budget, config.n))
    if "wald_std" in cfg.statistics and sigma_g_sq(cfg.constraint, cfg.model) <= 0.0:
        raise SingularHypothesisError(
            "the standardized Wald statistic was requested at a singular model "
            "(vanishing constraint gradient)"
        )
    if {"icu_std", "block"} & set(cfg.statistics):
        if sigma_h_sq(cfg.constraint, cfg.model) <= 0.0:
            raise RuntimeError("kernel variance is not strictly positive")
    reps = range(cfg.replicates)
    if cfg.threads == 1:
        results = [_replicate(cfg, rep) for rep in reps]
    else:
        n_jobs = -1 if cfg.threads == 0 else cfg.threads
        results = Parallel(n_jobs=n_jobs)(delayed(_replicate)(cfg, rep) for rep in reps)
    zscores = {
        stat: np.array([zs[stat] for zs, _ in results]) for stat in cfg.statistics
    }
    redraw_total = sum(redraws for _, redraws in results)
    return summarize_zscores(zscores, cfg.levels, cfg.sided, redraw_total)


def summarize_zscores(zscores: dict, levels, sided: str,
                      redraw_total: int = 0) -> SizeCurve:
    """Fold raw z-scores into a size curve; NaNs are tallied and excluded."""
    levels = np.asarray(levels, dtype=float)
    if sided == "two":
        cutoffs = stats.norm.ppf(1.0 - levels / 2.0)
    else:
        cutoffs = stats.norm.ppf(1.0 - levels)
    sizes, se, used, excluded = {}, {}, {}, {}
    for stat, z in zscores.items():
        defined = z[~np.isnan(z)]
        excluded[stat] = int(np.isnan(z).sum())
        used[stat] = int(defined.size)
        if defined.size == 0:
            sizes[stat] = np.full(levels.shape, np.nan)
            se[stat] = np.full(levels.shape, np.nan)
            continue
        magnitude = np.abs(defined) if sided == "two" else defined
        sizes[stat] = np.array([np.mean(magnitude > c) for c in cutoffs])
        se[stat] = np.sqrt(levels * (1.0 - levels) / defined.size)
    return SizeCurve(levels=levels, sided=sided, zscores=zscores, sizes=sizes,
                     se=se, used=used, excluded=excluded, redraw_total=redraw_total)


def ks_normality(zscores) -> float:
    """Kolmogorov-Smirnov sup-distance between the empirical CDF and Phi."""
    z = np.asarray(zscores, dtype=float)
    if z.ndim != 1 or z.size < 100:
        raise ValueError(f"need at least 100 z-scores, got {z.size}")
    if np.any(np.isnan(z)):
        raise ValueError("z-scores contain NaN")
    return float(stats.kstest(z, "norm").statistic)


@dataclass(frozen=True)
class DiagnosticReport(BEDiagnostics):
    """Berry-Esseen diagnostics extended with the incomplete-statistic
    design quantities: the rescaled variance ``m^2 sigma_g^2 + (n/N)
    sigma_h^2``, the sampling probability, and the polylog factor
    ``(log(2 n^m + 1))^{3m} / sqrt(n)`` that scales the incomplete
    statistic's normal-approximation error."""

    budget: int = 0
    p_sample: float = 0.0
    alpha_n: float = 0.0
    sigma_sq: float = 0.0
    log_factor: float = 0.0


def run_diagnostics(f: PolyConstraint, theta: CovModel, n: int, budget,
                    mc_draws: int = 200_000, seed: int = 0) -> DiagnosticReport:
    """Diagnostic record for testing ``f`` at ``theta`` with a given budget.

    Reports computable ingredients only; no bound with unspecified
    constants is evaluated.  A multiple-of-n budget exceeding the tuple
    count is clamped to it, and the report records the budget used.
    """
    base = be_diagnostics(f, theta, n, mc_draws=mc_draws, seed=seed)
    budget = resolve_budget(budget, n)
    plan = BudgetPlan(n=n, m=f.degree, budget=min(budget, comb(n, f.degree)))
    budget = plan.budget
    alpha = n / budget
    sigma_sq = f.degree**2 * base.sigma_g**2 + alpha * base.sigma_h**2
    log_factor = log(2.0 * float(n) ** f.degree + 1.0) ** (3 * f.degree) / sqrt(n)
    return DiagnosticReport(
        **vars(base), budget=budget, p_sample=plan.p_sample,
        alpha_n=alpha, sigma_sq=sigma_sq, log_factor=log_factor,
    )


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_size_csv(curve: SizeCurve, path: str):
    """One CSV row per (statistic, nominal level); atomic overwrite.

    Columns: statistic, alpha, empirical_size, se, replicates,
    degenerate_count (replicates excluded for an undefined outcome).
    """
    lines = ["statistic,alpha,empirical_size,se,replicates,degenerate_count"]
    for stat in curve.sizes:
        for alpha, size, se in zip(curve.levels, curve.sizes[stat], curve.se[stat]):
            lines.append(
                f"{stat},{alpha:.6g},{size:.10g},{se:.10g},"
                f"{curve.used[stat]},{curve.excluded[stat]}"
            )
    _atomic_write(path, "\n".join(lines) + "\n")


def write_metadata(path: str, entries: dict):
    """Sidecar run description: one ``key = value`` line per entry,
    always including the library version."""
    entries = {"covconstraint_version": __version__, **entries}
    lines = [f"{key} = {value}" for key, value in entries.items()]
    _atomic_write(path, "\n".join(lines) + "\n")
