"""Experiment orchestration, log-log slope fits, CSV/SVG reports and the CLI.

Every trial draws its noise from a seed derived by hashing
``(master_seed, n, trial)``, so results do not depend on execution order.
Trials run sequentially and are reduced in ``(n, estimator)`` order.
"""
from __future__ import annotations

import argparse
import enum
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .designs import (
    NoiseModel,
    Provenance,
    build_corollary_design,
    build_dalalyan_design,
    build_simulation_design,
    build_theorem1_design,
    build_theorem2_design,
    certify,
    dalalyan_theta_star,
    design_header,
    load_design,
    make_instance,
    save_design,
    simulation_theta_star,
    theorem_theta_star,
)
from .landscape import catalog_instance, catalog_to_csv, compute_lemma1_bound
from .local_descent import DescentConfig, descend, trajectory_to_csv
from .penalties import SeparablePenalty
from .solvers import (
    LambdaGrid,
    SelectionCriterion,
    lambda_nonconvex,
    lambda_prop1,
    select_lambda,
    solutions_to_csv,
    solve_l0,
    solve_lasso_path,
    solve_penalized,
)

__all__ = [
    "Experiment",
    "ExperimentConfig",
    "TrialRecord",
    "ReportRow",
    "ExperimentReport",
    "trial_seed",
    "fit_loglog_slope",
    "aggregate",
    "tune_nonconvex_c",
    "run_scaling_experiment",
    "run_dalalyan_experiment",
    "run_descent_study",
    "run_landscape_diagnostic",
    "run_experiment",
    "emit_report",
    "parse_report_csv",
    "main",
]

DEFAULT_C_GRID = tuple(0.1 * math.sqrt(2.0) ** k for k in range(13))
DEFAULT_DESCENT_LAMBDAS = (0.0, 0.01, 0.1, 0.3, 1.0, 3.0)
DEFAULT_LANDSCAPE_LAMBDAS = tuple(np.logspace(-3, 2, 40).tolist())


class Experiment(enum.Enum):
    SCALING = "scaling"
    DALALYAN = "dalalyan"
    LANDSCAPE = "landscape"
    DESCENT = "descent"


_ALLOWED = {
    Experiment.SCALING: ("l0", "lasso", "scad", "mcp"),
    Experiment.DALALYAN: ("rwlasso", "lasso"),
    Experiment.LANDSCAPE: ("scad", "mcp", "lasso"),
    Experiment.DESCENT: ("scad", "mcp", "lasso"),
}
_DEFAULT_N = {
    Experiment.SCALING: (16, 32, 64, 128, 256, 512, 1024),
    Experiment.DALALYAN: (8, 16, 32, 64, 128, 256, 512),
    Experiment.LANDSCAPE: (16,),
    Experiment.DESCENT: (16, 64, 256),
}
_DEFAULT_EST = {
    Experiment.SCALING: ("l0", "lasso", "scad", "mcp"),
    Experiment.DALALYAN: ("rwlasso", "lasso"),
    Experiment.LANDSCAPE: ("scad",),
    Experiment.DESCENT: ("scad",),
}


@dataclass
class ExperimentConfig:
    """Settings for one experiment; field names match the JSON config schema.

    ``lasso_selection`` is ``oracle`` (smallest prediction error on the path)
    or ``fixed`` (``4 sigma sqrt(log d / n)``).  ``nonconvex_selection`` is
    ``tuned`` (``C`` chosen from ``c_grid`` on pilot draws disjoint from the
    reported trials) or ``fixed`` (``C = nonconvex_c``); SCAD and MCP then run
    at ``C sqrt(log n / n)``.  ``lambda_grid`` applies to the descent and
    landscape experiments; ``R`` defaults to 1 for descent and ``8 sigma /
    sqrt(n)`` for landscape runs.
    """

    experiment: Experiment = Experiment.SCALING
    n_values: tuple = ()
    trials: int = 100
    estimators: tuple = ()
    master_seed: int = 0
    sigma: float = 1.0
    csv_path: str | None = None
    svg_path: str | None = None
    lasso_selection: str = "oracle"
    nonconvex_selection: str = "tuned"
    nonconvex_c: float = 0.1
    c_grid: tuple = DEFAULT_C_GRID
    pilot_trials: int = 10
    path_count: int = 100
    theta_positions: tuple | None = None
    lambda_grid: tuple | None = None
    R: float | None = None

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        if not self.n_values:
            self.n_values = _DEFAULT_N[self.experiment]
        if not self.estimators:
            self.estimators = _DEFAULT_EST[self.experiment]
        self.n_values = tuple(int(n) for n in self.n_values)
        self.estimators = tuple(str(e) for e in self.estimators)
        self.c_grid = tuple(float(c) for c in self.c_grid)
        if self.lambda_grid is not None:
            self.lambda_grid = tuple(float(x) for x in self.lambda_grid)
        if self.theta_positions is not None:
            self.theta_positions = tuple(int(x) for x in self.theta_positions)
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if list(self.n_values) != sorted(set(self.n_values)):
            raise ValueError("n_values must be strictly ascending")
        if any(n < 4 or n % 2 for n in self.n_values):
            raise ValueError("n_values must be even integers of at least 4")
        bad = [e for e in self.estimators if e not in _ALLOWED[self.experiment]]
        if bad or len(set(self.estimators)) != len(self.estimators):
            raise ValueError(f"estimators for {self.experiment.value} must be distinct members "
                             f"of {_ALLOWED[self.experiment]}, got {self.estimators}")
        if self.lasso_selection not in ("oracle", "fixed"):
            raise ValueError("lasso_selection must be 'oracle' or 'fixed'")
        if self.nonconvex_selection not in ("tuned", "fixed"):
            raise ValueError("nonconvex_selection must be 'tuned' or 'fixed'")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.pilot_trials < 1 or self.path_count < 1 or not self.c_grid:
            raise ValueError("pilot_trials, path_count and c_grid must be nonempty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["experiment"] = self.experiment.value
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ValueError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)


@dataclass
class TrialRecord:
    n: int
    trial: int
    seed: int
    estimator: str
    error: float
    failed: bool = False
    is_zero: bool = False
    extras: dict = field(default_factory=dict)


@dataclass
class ReportRow:
    n: int
    estimator: str
    mean_error: float
    std_error: float
    trials: int


@dataclass
class ExperimentReport:
    """Per-(n, estimator) means, fitted slopes and failure counts.

    ``std_error`` is the standard error of the mean (sample standard deviation
    with ``ddof=1`` over ``sqrt(trials)``); ``trials`` counts the successful
    trials entering the mean.  ``slopes`` maps an estimator to the decay
    exponent and its standard error, present only with at least 3 n-values.
    """

    rows: list
    slopes: dict
    failures: list = field(default_factory=list)
    records: list = field(default_factory=list, compare=False, repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def row(self, n: int, estimator: str) -> ReportRow:
        for r in self.rows:
            if r.n == n and r.estimator == estimator:
                return r
        raise KeyError((n, estimator))

    def trial_records(self, n: int | None = None, estimator: str | None = None) -> list:
        return [r for r in self.records
                if (n is None or r.n == n) and (estimator is None or r.estimator == estimator)]


# ---------------------------------------------------------------------------
# seeds, aggregation and slopes
# ---------------------------------------------------------------------------

def trial_seed(master_seed: int, n: int, trial: int, tag: str = "trial") -> int:
    """63-bit seed from a BLAKE2b hash of ``(tag, master_seed, n, trial)``."""
    msg = f"{tag}:{int(master_seed)}:{int(n)}:{int(trial)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little") >> 1


def fit_loglog_slope(points) -> tuple[float, float]:
    """Decay exponent ``s`` in ``error ~ n^(-s)`` with its OLS standard error.

    Parameters
    ----------
    points : sequence of (n, mean_error)
        At least 3 points with positive ``n`` and error.
    """
    pts = [(float(n), float(e)) for n, e in points]
    if len(pts) < 3:
        raise ValueError("at least 3 points are needed for a slope")
    if any(not (n > 0 and e > 0 and math.isfinite(e)) for n, e in pts):
        raise ValueError("n and errors must be positive and finite")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    fit = stats.linregress(x, y)
    return float(-fit.slope), float(fit.stderr)


def aggregate(records, estimators, n_values) -> ExperimentReport:
    """Reduce trial records to rows, slopes and failure counts in a fixed order."""
    rows, failures, slopes = [], [], {}
    for n in n_values:
        for est in estimators:
            sel = [r for r in records if r.n == n and r.estimator == est]
            ok = np.array([r.error for r in sel if not r.failed], dtype=float)
            k = ok.size
            mean = float(np.mean(ok)) if k else math.nan
            se = float(np.std(ok, ddof=1) / math.sqrt(k)) if k >= 2 else math.nan
            rows.append(ReportRow(int(n), est, mean, se, int(k)))
            failures.append((int(n), est, len(sel) - k))
    if len(n_values) >= 3:
        for est in estimators:
            pts = [(r.n, r.mean_error) for r in rows if r.estimator == est]
            try:
                slopes[est] = fit_loglog_slope(pts)
            except ValueError:
                pass
    return ExperimentReport(rows, slopes, failures, list(records))


def _penalty(name: str) -> SeparablePenalty:
    return {"scad": SeparablePenalty.scad, "mcp": SeparablePenalty.mcp,
            "lasso": SeparablePenalty.l1}[name]()


def _safe(fn, n, trial, seed, est):
    try:
        rec = fn()
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return TrialRecord(n, trial, seed, est, math.nan, True, False, {"error": repr(exc)})
    if not math.isfinite(rec.error):
        rec.failed = True
    return rec


def _finish_report(cfg: ExperimentConfig, records, meta) -> ExperimentReport:
    rep = aggregate(records, cfg.estimators, cfg.n_values)
    rep.meta.update(meta)
    rep.meta["config"] = cfg.to_dict()
    if cfg.csv_path:
        emit_report(rep, "csv", cfg.csv_path)
    if cfg.svg_path:
        emit_report(rep, "svg", cfg.svg_path)
    return rep


# ---------------------------------------------------------------------------
# scaling simulation
# ---------------------------------------------------------------------------

def _simulation_instance(n, sigma, seed):
    D = build_simulation_design(n)
    return make_instance(D, simulation_theta_star(D.d), sigma, seed=seed)


def tune_nonconvex_c(penalty: SeparablePenalty, n_values, sigma: float = 1.0,
                     c_grid=DEFAULT_C_GRID, pilot_trials: int = 10, master_seed: int = 0):
    """Pick ``C`` for ``lam = C sqrt(log n / n)`` on pilot draws.

    The score of ``C`` is the average over ``n`` of the log mean prediction
    error; the smallest minimizing ``C`` wins.  Pilot seeds use their own hash
    tag and are disjoint from trial seeds.

    Returns
    -------
    (float, dict)
        The chosen ``C`` and the score of every grid value.
    """
    scores = {float(C): 0.0 for C in c_grid}
    for n in n_values:
        insts = [_simulation_instance(n, sigma, trial_seed(master_seed, n, t, "pilot"))
                 for t in range(pilot_trials)]
        for C in scores:
            lam = lambda_nonconvex(n, C)
            errs = [solve_penalized(i.X, i.y, penalty, lam, theta_star=i.theta_star).prediction_error
                    for i in insts]
            scores[C] += math.log(max(float(np.mean(errs)), 1e-300)) / len(n_values)
    best = min(scores, key=lambda c: (scores[c], c))
    return best, scores


def _scaling_trial(est, inst, cfg, C, n, trial, seed):
    X, y, ts = inst.X, inst.y, inst.theta_star
    extras = {}
    if est == "l0":
        sol = solve_l0(X, y, 2, theta_star=ts)
    elif est == "lasso":
        path = solve_lasso_path(X, y, LambdaGrid.from_data(X, y, cfg.path_count), theta_star=ts)
        if cfg.lasso_selection == "oracle":
            sol = select_lambda(path, SelectionCriterion.ORACLE)
        else:
            sol = select_lambda(path, SelectionCriterion.FIXED,
                                lambda_prop1(cfg.sigma, inst.n, inst.d))
    else:
        sol = solve_penalized(X, y, _penalty(est), lambda_nonconvex(inst.n, C[est]), theta_star=ts)
        extras["C"] = C[est]
    extras.update(lam=sol.lam, converged=sol.converged)
    return TrialRecord(n, trial, seed, est, float(sol.prediction_error), False, sol.is_zero, extras)


def run_scaling_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Block-design simulation with a 2-sparse ``theta* = (0.5, 0.5, 0, ...)``.

    Per trial the design is ``build_simulation_design(n)`` with Gaussian noise;
    ``l0`` uses ``k = 2``, the Lasso runs a ``path_count``-point path and SCAD
    (a = 3.7) and MCP (b = 2.7) run proximal gradient from zero.
    """
    cfg = config
    if cfg.experiment is not Experiment.SCALING:
        raise ValueError("config is not a scaling experiment")
    C, meta = {}, {}
    for est in ("scad", "mcp"):
        if est in cfg.estimators:
            if cfg.nonconvex_selection == "tuned":
                C[est], scores = tune_nonconvex_c(_penalty(est), cfg.n_values, cfg.sigma,
                                                  cfg.c_grid, cfg.pilot_trials, cfg.master_seed)
                meta[f"{est}_c_scores"] = scores
            else:
                C[est] = cfg.nonconvex_c
            meta[f"{est}_C"] = C[est]
    records = []
    for n in cfg.n_values:
        for t in range(cfg.trials):
            seed = trial_seed(cfg.master_seed, n, t)
            inst = _simulation_instance(n, cfg.sigma, seed)
            for est in cfg.estimators:
                records.append(_safe(lambda: _scaling_trial(est, inst, cfg, C, n, t, seed),
                                     n, t, seed, est))
    return _finish_report(cfg, records, meta)


# ---------------------------------------------------------------------------
# reweighted Lasso counter-example
# ---------------------------------------------------------------------------

def _dalalyan_trial(est, inst, cfg, n, trial, seed):
    X, y, ts = inst.X, inst.y, inst.theta_star
    m = inst.design.params["m"]
    weights = None
    if est == "rwlasso":
        weights = np.ones(inst.d)
        weights[[0, m]] = 0.0
    grid = LambdaGrid.from_data(X, y, cfg.path_count, weights=weights)
    if est == "rwlasso":
        path = solve_lasso_path(X, y, grid, theta_star=ts, weights=weights, estimator=est)
    else:
        # the all-ones first row couples every column; coordinate descent
        # crawls on it, so the unweighted path uses warm-started proximal gradient
        path, theta = [], np.zeros(inst.d)
        for lam in grid:
            s = solve_penalized(X, y, SeparablePenalty.l1(), lam, init=theta, theta_star=ts,
                                max_iters=200_000, estimator="lasso")
            theta = s.theta_hat
            path.append(s)
    sol = select_lambda(path, SelectionCriterion.ORACLE)
    fit = float(np.max(np.abs(X[:2] @ sol.theta_hat - y[:2])))
    return TrialRecord(n, trial, seed, est, float(sol.prediction_error), False, sol.is_zero,
                       {"lam": sol.lam, "exact_fit_residual": fit, "converged": sol.converged})


def run_dalalyan_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Reweighted Lasso (zero weight on coordinates 1 and m+1) versus the Lasso.

    The design is ``build_dalalyan_design(n)`` with Rademacher noise; both
    estimators use oracle selection over a ``path_count``-point path.
    ``extras['exact_fit_residual']`` is ``max |(X theta_hat - y)_{1:2}|``.
    """
    cfg = config
    if cfg.experiment is not Experiment.DALALYAN:
        raise ValueError("config is not a dalalyan experiment")
    records = []
    for n in cfg.n_values:
        D = build_dalalyan_design(n)
        ts = dalalyan_theta_star(D, cfg.theta_positions)
        for t in range(cfg.trials):
            seed = trial_seed(cfg.master_seed, n, t)
            inst = make_instance(D, ts, cfg.sigma, NoiseModel.RADEMACHER, seed=seed)
            for est in cfg.estimators:
                records.append(_safe(lambda: _dalalyan_trial(est, inst, cfg, n, t, seed),
                                     n, t, seed, est))
    return _finish_report(cfg, records, {})


# ---------------------------------------------------------------------------
# local descent and landscape studies
# ---------------------------------------------------------------------------

def _descent_trial(est, inst, cfg, lams, n, trial, seed):
    p = _penalty(est)
    errs, terminated, steps = [], True, 0
    for j, lam in enumerate(lams):
        dc = DescentConfig.for_design(inst.design, p, lam,
                                      seed=trial_seed(cfg.master_seed, n, trial, f"init{j}"))
        tr = descend(inst, p, dc, keep_iterates=False)
        terminated &= tr.terminated
        steps = max(steps, tr.steps)
        errs.append(inst.prediction_error(tr.final))
    k = int(np.argmin(errs))
    return TrialRecord(n, trial, seed, est, float(errs[k]), False, False,
                       {"terminated": terminated, "best_lambda": lams[k], "max_steps": steps,
                        "errors": errs})


def run_descent_study(config: ExperimentConfig) -> ExperimentReport:
    """Local descent on Theorem-2 designs; the error is the minimum over ``lambda_grid``.

    ``extras['terminated']`` records whether every run stopped at an interior
    point of its ball within ``max_steps``.
    """
    cfg = config
    if cfg.experiment is not Experiment.DESCENT:
        raise ValueError("config is not a descent experiment")
    lams = list(cfg.lambda_grid or DEFAULT_DESCENT_LAMBDAS)
    R = cfg.R if cfg.R is not None else 1.0
    records = []
    for n in cfg.n_values:
        D = build_theorem2_design(n, n, cfg.sigma, R)
        for t in range(cfg.trials):
            seed = trial_seed(cfg.master_seed, n, t)
            inst = make_instance(D, theorem_theta_star(D), cfg.sigma, seed=seed)
            for est in cfg.estimators:
                records.append(_safe(lambda: _descent_trial(est, inst, cfg, lams, n, t, seed),
                                     n, t, seed, est))
    return _finish_report(cfg, records, {"lambda_grid": lams})


def _landscape_trial(est, inst, cfg, lams, n, trial, seed):
    p = _penalty(est)
    worst, bounds = [], []
    for lam in lams:
        worst.append(catalog_instance(inst, p, lam).worst_error())
        bounds.append(compute_lemma1_bound(inst, p, lam).total)
    gap = float(np.min(np.array(worst) - np.array(bounds)))
    return TrialRecord(n, trial, seed, est, float(min(worst)), False, False,
                       {"worst": worst, "bound": bounds, "min_gap": gap})


def run_landscape_diagnostic(config: ExperimentConfig) -> ExperimentReport:
    """Worst local minimum versus the bad-minimum bound terms T1 + T2 on Theorem-1 designs.

    The reported error is the minimum over ``lambda_grid`` of the worst local
    minimum; ``extras['min_gap']`` is the smallest ``worst - (T1 + T2)``.
    """
    cfg = config
    if cfg.experiment is not Experiment.LANDSCAPE:
        raise ValueError("config is not a landscape experiment")
    lams = list(cfg.lambda_grid or DEFAULT_LANDSCAPE_LAMBDAS)
    records = []
    for n in cfg.n_values:
        R = cfg.R if cfg.R is not None else 8 * cfg.sigma / math.sqrt(n)
        D = build_theorem1_design(n, n, cfg.sigma, R)
        for t in range(cfg.trials):
            seed = trial_seed(cfg.master_seed, n, t)
            inst = make_instance(D, theorem_theta_star(D), cfg.sigma, seed=seed)
            for est in cfg.estimators:
                records.append(_safe(lambda: _landscape_trial(est, inst, cfg, lams, n, t, seed),
                                     n, t, seed, est))
    return _finish_report(cfg, records, {"lambda_grid": lams})


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    return {Experiment.SCALING: run_scaling_experiment,
            Experiment.DALALYAN: run_dalalyan_experiment,
            Experiment.DESCENT: run_descent_study,
            Experiment.LANDSCAPE: run_landscape_diagnostic}[config.experiment](config)


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

def _g(x: float) -> str:
    return f"{x:.17g}"


def _csv_text(rep: ExperimentReport) -> str:
    buf = io.StringIO()
    buf.write("n,estimator,mean_error,std_error,trials\n")
    for r in rep.rows:
        buf.write(f"{r.n},{r.estimator},{_g(r.mean_error)},{_g(r.std_error)},{r.trials}\n")
    buf.write("\nestimator,slope,slope_stderr\n")
    for est, (s, se) in rep.slopes.items():
        buf.write(f"{est},{_g(s)},{_g(se)}\n")
    buf.write("\nn,estimator,failed\n")
    for n, est, k in rep.failures:
        buf.write(f"{n},{est},{k}\n")
    return buf.getvalue()


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_text(rep: ExperimentReport) -> str:
    W, H, ml, mr, mt, mb = 640, 440, 80, 150, 30, 60
    pts = [(r.n, r.mean_error) for r in rep.rows if r.mean_error > 0 and math.isfinite(r.mean_error)]
    if not pts:
        raise ValueError("no positive mean errors to plot")
    lx = [math.log10(n) for n, _ in pts]
    ly = [math.log10(e) for _, e in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = math.floor(min(ly)), math.ceil(max(ly))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y1 = y0 + 1

    def X(v):
        return ml + (v - x0) / (x1 - x0) * (W - ml - mr)

    def Y(v):
        return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>']
    for n in sorted({n for n, _ in pts}):
        x = X(math.log10(n))
        out.append(f'<line x1="{x:.2f}" y1="{H - mb}" x2="{x:.2f}" y2="{H - mb + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{H - mb + 18}" text-anchor="middle">{n}</text>')
    for k in range(y0, y1 + 1):
        y = Y(k)
        out.append(f'<line x1="{ml - 5}" y1="{y:.2f}" x2="{ml}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{y + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="{(ml + W - mr) / 2:.2f}" y="{H - 15}" text-anchor="middle">'
               f'sample size n (log scale)</text>')
    out.append(f'<text x="20" y="{(mt + H - mb) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {(mt + H - mb) / 2:.2f})">'
               f'mean prediction error (log scale)</text>')
    ests = list(dict.fromkeys(r.estimator for r in rep.rows))
    for i, est in enumerate(ests):
        col = _PALETTE[i % len(_PALETTE)]
        coords = [(X(math.log10(r.n)), Y(math.log10(r.mean_error))) for r in rep.rows
                  if r.estimator == est and r.mean_error > 0 and math.isfinite(r.mean_error)]
        if not coords:
            continue
        poly = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="2" points="{poly}"/>')
        for x, y in coords:
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{col}"/>')
        ly_ = mt + 20 * i + 10
        label = est
        if est in rep.slopes:
            label += f" (slope {rep.slopes[est][0]:.2f})"
        out.append(f'<line x1="{W - mr + 10}" y1="{ly_}" x2="{W - mr + 30}" y2="{ly_}" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{W - mr + 35}" y="{ly_ + 4}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: ExperimentReport, format: str = "csv", path=None) -> str:
    """Render ``report`` as CSV or SVG text and optionally write it to ``path``.

    The CSV holds the row table, a blank line, an ``estimator,slope,slope_stderr``
    block, a blank line and an ``n,estimator,failed`` block.  Floats use 17
    significant digits so the numbers round-trip exactly.
    """
    if not report.rows:
        raise ValueError("report has no rows")
    fmt = format.lower()
    if fmt == "csv":
        text = _csv_text(report)
    elif fmt == "svg":
        text = _svg_text(report)
    else:
        raise ValueError("format must be 'csv' or 'svg'")
    if path is not None:
        p = Path(path)
        try:
            p.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write report to {p}: {exc}") from exc
    return text


def parse_report_csv(source) -> ExperimentReport:
    """Inverse of the CSV form of :func:`emit_report`; ``source`` is text or a path."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        source = Path(source).read_text(encoding="utf-8")
    blocks = [b.strip().splitlines() for b in source.strip().split("\n\n")]
    rows, slopes, failures = [], {}, []
    for blk in blocks:
        head, body = blk[0], [line.split(",") for line in blk[1:]]
        if head == "n,estimator,mean_error,std_error,trials":
            rows = [ReportRow(int(a), b, float(c), float(d), int(e)) for a, b, c, d, e in body]
        elif head == "estimator,slope,slope_stderr":
            slopes = {a: (float(b), float(c)) for a, b, c in body}
        elif head == "n,estimator,failed":
            failures = [(int(a), b, int(c)) for a, b, c in body]
        else:
            raise ValueError(f"unrecognized report block header {head!r}")
    return ExperimentReport(rows, slopes, failures)


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slowrate", description="Sparse-regression lower-bound experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def design_args(q):
        q.add_argument("--provenance", choices=[v.value for v in Provenance if v.value != "custom"],
                       default="simulation")
        q.add_argument("--n", type=int, default=16)
        q.add_argument("--d", type=int, default=None)
        q.add_argument("--sigma", type=float, default=1.0)
        q.add_argument("--R", type=float, default=1.0)
        q.add_argument("--k", type=int, default=2)
        q.add_argument("--gamma", type=float, default=0.25)

    d = sub.add_parser("design", help="build or certify a design")
    dsub = d.add_subparsers(dest="action", parser_class=_Parser)
    b = dsub.add_parser("build", help="build a design and write it as CSV plus a JSON header")
    design_args(b)
    b.add_argument("--out", default=None)
    c = dsub.add_parser("certify", help="column normalization and RE lower bound")
    design_args(c)
    c.add_argument("--design", default=None, help="certify a saved design instead of building")

    s = sub.add_parser("solve", help="fit one estimator on a seeded instance")
    s.add_argument("--estimator", choices=["l0", "lasso", "scad", "mcp", "rwlasso"], default="lasso")
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--lam", type=float, default=None)
    s.add_argument("--C", type=float, default=0.1)
    s.add_argument("--out", default=None)

    ls = sub.add_parser("landscape", help="catalog block local minima on a Theorem-1 instance")
    ls.add_argument("--n", type=int, default=16)
    ls.add_argument("--seed", type=int, default=0)
    ls.add_argument("--sigma", type=float, default=1.0)
    ls.add_argument("--R", type=float, default=None)
    ls.add_argument("--lam", type=_float_list, default=[0.1])
    ls.add_argument("--penalty", choices=["scad", "mcp", "lasso"], default="scad")
    ls.add_argument("--out", default=None)

    de = sub.add_parser("descend", help="run local descent on a Theorem-2 instance")
    de.add_argument("--n", type=int, default=16)
    de.add_argument("--seed", type=int, default=0)
    de.add_argument("--sigma", type=float, default=1.0)
    de.add_argument("--R", type=float, default=1.0)
    de.add_argument("--lam", type=float, default=0.1)
    de.add_argument("--penalty", choices=["scad", "mcp", "lasso"], default="scad")
    de.add_argument("--out", default=None)

    e = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    e.add_argument("kind", choices=[v.value for v in Experiment])
    e.add_argument("--n", type=_int_list, default=None)
    e.add_argument("--trials", type=int, default=None)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--estimators", type=_str_list, default=None)
    e.add_argument("--out", default=None)
    e.add_argument("--svg", default=None)
    e.add_argument("--config", default=None)
    return p


def _design_from_args(a):
    kind = Provenance(a.provenance)
    d = a.d if a.d is not None else a.n
    if kind is Provenance.THEOREM1:
        return build_theorem1_design(a.n, d, a.sigma, a.R)
    if kind is Provenance.THEOREM2:
        return build_theorem2_design(a.n, d, a.sigma, a.R)
    if kind is Provenance.SIMULATION:
        return build_simulation_design(a.n)
    if kind is Provenance.COROLLARY1:
        return build_corollary_design(a.n, a.k, a.sigma, a.R, a.gamma)
    return build_dalalyan_design(a.n)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _cmd_design(a):
    if a.action is None:
        raise _UsageError("design needs an action: build or certify")
    if a.action == "certify" and a.design:
        D = load_design(a.design)
    else:
        D = _design_from_args(a)
    cert = certify(D).as_dict()
    if a.action == "build":
        out = {"design": design_header(D), "certificate": cert}
        if a.out:
            paths = save_design(D, a.out)
            out["files"] = [str(x) for x in paths]
        _emit(out)
    else:
        _emit(cert)


def _cmd_solve(a):
    if a.estimator == "rwlasso":
        D = build_dalalyan_design(a.n)
        inst = make_instance(D, dalalyan_theta_star(D), a.sigma, NoiseModel.RADEMACHER, seed=a.seed)
    else:
        inst = _simulation_instance(a.n, a.sigma, a.seed)
    X, y, ts = inst.X, inst.y, inst.theta_star
    if a.estimator == "l0":
        sol = solve_l0(X, y, 2, theta_star=ts)
    elif a.estimator in ("lasso", "rwlasso"):
        w = None
        if a.estimator == "rwlasso":
            w = np.ones(inst.d)
            w[[0, inst.design.params["m"]]] = 0.0
        grid = LambdaGrid(np.array([a.lam])) if a.lam is not None else LambdaGrid.from_data(X, y, weights=w)
        path = solve_lasso_path(X, y, grid, theta_star=ts, weights=w, estimator=a.estimator)
        sol = select_lambda(path)
    else:
        lam = a.lam if a.lam is not None else lambda_nonconvex(inst.n, a.C)
        sol = solve_penalized(X, y, _penalty(a.estimator), lam, theta_star=ts)
    if a.out:
        solutions_to_csv([sol], a.out)
    _emit({"estimator": a.estimator, "lambda": sol.lam, "prediction_error": sol.prediction_error,
           "objective": sol.objective_value, "converged": sol.converged, "is_zero": sol.is_zero,
           "support": np.flatnonzero(sol.theta_hat).tolist()})


def _cmd_landscape(a):
    R = a.R if a.R is not None else 8 * a.sigma / math.sqrt(a.n)
    D = build_theorem1_design(a.n, a.n, a.sigma, R)
    inst = make_instance(D, theorem_theta_star(D), a.sigma, seed=a.seed)
    p = _penalty(a.penalty)
    out = []
    for lam in a.lam:
        cat = catalog_instance(inst, p, lam)
        b = compute_lemma1_bound(inst, p, lam)
        out.append({"lambda": lam, "worst_local_min_error": cat.worst_error(),
                    "best_local_min_error": cat.best_error(), "T1": b.T1, "T2": b.T2,
                    "minima_per_block": [len(x) for x in cat.blocks]})
        if a.out:
            path = Path(a.out)
            if len(a.lam) > 1:
                path = path.with_name(f"{path.stem}_lam{lam:g}{path.suffix}")
            catalog_to_csv(cat, path)
    _emit(out)


def _cmd_descend(a):
    D = build_theorem2_design(a.n, a.n, a.sigma, a.R)
    inst = make_instance(D, theorem_theta_star(D), a.sigma, seed=a.seed)
    p = _penalty(a.penalty)
    tr = descend(inst, p, DescentConfig.for_design(D, p, a.lam, seed=a.seed))
    if a.out:
        trajectory_to_csv(tr, a.out)
    _emit({"steps": tr.steps, "terminated": tr.terminated, "eta": tr.eta,
           "final_objective": float(tr.objectives[-1]),
           "prediction_error": inst.prediction_error(tr.final)})


def _cmd_experiment(a):
    base = {}
    if a.config:
        try:
            file_cfg = ExperimentConfig.from_json(a.config)
        except (ValueError, TypeError) as exc:
            raise _UsageError(f"invalid config {a.config}: {exc}")
        if "experiment" in json.loads(Path(a.config).read_text()) \
                and file_cfg.experiment.value != a.kind:
            raise _UsageError(f"config file describes a different experiment than {a.kind!r}")
        base = file_cfg.to_dict()
    base["experiment"] = a.kind
    for key, val in (("n_values", a.n), ("trials", a.trials), ("master_seed", a.seed),
                     ("estimators", a.estimators), ("csv_path", a.out), ("svg_path", a.svg)):
        if val is not None:
            base[key] = val
    try:
        cfg = ExperimentConfig.from_dict(base)
    except (ValueError, TypeError) as exc:
        raise _UsageError(str(exc))
    rep = run_experiment(cfg)
    sys.stdout.write(_csv_text(rep))
    for key in ("scad_C", "mcp_C"):
        if key in rep.meta:
            print(f"# tuned {key} = {rep.meta[key]:.6g}")


def main(argv=None) -> int:
    """Command-line entry point; returns 0 on success, 1 on usage errors, 2 on failures."""
    parser = _build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command is None:
            raise _UsageError(parser.format_usage().rstrip() + "\nslowrate: error: a subcommand is required")
        handler = {"design": _cmd_design, "solve": _cmd_solve, "landscape": _cmd_landscape,
                   "descend": _cmd_descend, "experiment": _cmd_experiment}[a.command]
        handler(a)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1
    except Exception as exc:
        print(f"slowrate: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
