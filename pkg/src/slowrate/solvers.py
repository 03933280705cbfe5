"""M-estimators for sparse linear regression.

All objectives are in the canonical form ``(1/n)||y - X theta||^2 + lam * rho(theta)``.
The reweighted Lasso takes its lambda in the un-normalized convention
``||y - X theta||^2 + lam * sum_j alpha_j |theta_j|`` and divides it by ``n``.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.optimize import brentq

from .penalties import SeparablePenalty

__all__ = [
    "IntractableEnumerationError",
    "EstimatorSolution",
    "LambdaGrid",
    "SelectionCriterion",
    "solve_l0",
    "solve_lasso",
    "solve_lasso_path",
    "solve_penalized",
    "solve_reweighted_lasso",
    "solve_sqrt_lasso",
    "select_lambda",
    "lambda_max",
    "lambda_prop1",
    "lambda_prop2",
    "lambda_nonconvex",
    "lasso_kkt_residual",
    "solutions_to_csv",
]

PINV_RCOND = 1e-10


class IntractableEnumerationError(RuntimeError):
    """The number of supports to enumerate exceeds the configured cap."""


@dataclass
class EstimatorSolution:
    """A fitted vector with solver metadata.

    ``objective_value`` is ``(1/n)||y - X theta||^2 + lam * penalty(theta)``;
    for the square-root Lasso it is ``||y - X theta|| / sqrt(n) + lam ||theta||_1``.
    """

    theta_hat: np.ndarray
    lam: float
    objective_value: float
    iterations: int
    converged: bool
    prediction_error: float | None = None
    estimator: str = ""
    penalty: SeparablePenalty | None = None
    extras: dict = field(default_factory=dict)

    def recompute_objective(self, X, y) -> float:
        n = X.shape[0]
        r = y - X @ self.theta_hat
        if self.estimator == "sqrt_lasso":
            return float(np.linalg.norm(r) / math.sqrt(n) + self.lam * np.abs(self.theta_hat).sum())
        pen = 0.0 if self.penalty is None else self.penalty.total(self.theta_hat, self.lam)
        return float(r @ r) / n + pen

    @property
    def is_zero(self) -> bool:
        return not np.any(self.theta_hat)

    def csv_row(self) -> dict:
        return dict(estimator=self.estimator, **{"lambda": self.lam},
                    prediction_error=self.prediction_error, objective=self.objective_value,
                    iterations=self.iterations, converged=self.converged)


def _finish(X, y, theta, lam, iters, converged, estimator, penalty, theta_star, **extras):
    n = X.shape[0]
    r = y - X @ theta
    obj = float(r @ r) / n + (0.0 if penalty is None else penalty.total(theta, lam))
    err = None
    if theta_star is not None:
        e = X @ (theta - theta_star)
        err = float(e @ e) / n
    return EstimatorSolution(theta, float(lam), obj, int(iters), bool(converged), err,
                             estimator, penalty, extras)


# ---------------------------------------------------------------------------
# l0
# ---------------------------------------------------------------------------

def _pair_reductions(G, b, I, J, rcond):
    """Decrease in ||y - X_S theta||^2 from least squares on each pair ``S = (I, J)``.

    Uses the 2x2 Gram blocks; eigenvalues below ``rcond^2 * largest`` are
    dropped, matching a pseudoinverse with singular-value cutoff ``rcond``.
    """
    a = G[I, I]
    c = G[I, J]
    e = G[J, J]
    b1 = b[I]
    b2 = b[J]
    half = 0.5 * (a - e)
    rad = np.hypot(half, c)
    l1 = 0.5 * (a + e) + rad
    det = a * e - c * c
    with np.errstate(divide="ignore", invalid="ignore"):
        l2 = np.where(l1 > 0, det / l1, 0.0)
        thr = rcond * rcond * l1
        full = (b1 * b1 * e - 2 * c * b1 * b2 + b2 * b2 * a) / det
        # leading eigenvector, built from whichever column of (G - l2 I) is larger
        v1x = np.where(a - l2 >= e - l2, a - l2, c)
        v1y = np.where(a - l2 >= e - l2, c, e - l2)
        nv = np.hypot(v1x, v1y)
        proj = (v1x * b1 + v1y * b2) / np.where(nv > 0, nv, 1.0)
        rank1 = np.where(nv > 0, proj * proj / np.where(l1 > 0, l1, 1.0), 0.0)
    red = np.where(l2 > thr, full, np.where(l1 > 0, rank1, 0.0))
    return np.where(np.isfinite(red), red, 0.0)


def _lstsq_pinv(XS, y, rcond=PINV_RCOND):
    if XS.shape[1] == 0:
        return np.zeros(0)
    return np.linalg.pinv(XS, rcond=rcond) @ y


def solve_l0(X, y, k: int, cap: float = 1e7, theta_star=None,
             rcond: float = PINV_RCOND) -> EstimatorSolution:
    """Exact least squares over all supports of size at most ``k``.

    Ties (within ``1e-12`` relative residual) go to the lexicographically
    smallest support.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if not 0 <= k <= min(n, d):
        raise ValueError(f"k must lie in [0, min(n, d)] = [0, {min(n, d)}], got {k}")
    total = sum(math.comb(d, s) for s in range(k + 1))
    if total > cap:
        raise IntractableEnumerationError(
            f"enumerating {total} supports exceeds the cap {cap:g}")
    yy = float(y @ y)
    tol = 1e-12 * max(yy, 1e-300)
    best_rss, best_S = yy, ()

    if k <= 2:
        G = X.T @ X
        b = X.T @ y
        diag = np.diag(G)
        cand = []
        if k >= 1:
            with np.errstate(divide="ignore", invalid="ignore"):
                red1 = np.where(diag > 0, b * b / np.where(diag > 0, diag, 1.0), 0.0)
            cand.append((yy - red1, [(j,) for j in range(d)]))
        if k == 2:
            I, J = np.triu_indices(d, 1)
            rss2 = yy - _pair_reductions(G, b, I, J, rcond)
            cand.append((rss2, (I, J)))
        # pick the smallest residual; supports of size 1 sort before pairs sharing the prefix
        best = yy
        for rss, _ in cand:
            best = min(best, float(rss.min()))
        ties = []
        if yy <= best + tol:
            ties.append(())
        for rss, sup in cand:
            idx = np.flatnonzero(rss <= best + tol)
            if isinstance(sup, tuple):
                ties.extend((int(sup[0][i]), int(sup[1][i])) for i in idx)
            else:
                ties.extend(sup[i] for i in idx)
        best_S = min(ties)
    else:
        for s in range(1, k + 1):
            for S in itertools.combinations(range(d), s):
                XS = X[:, S]
                r = y - XS @ _lstsq_pinv(XS, y, rcond)
                rss = float(r @ r)
                if rss < best_rss - tol or (abs(rss - best_rss) <= tol and S < best_S):
                    best_rss, best_S = rss, S

    theta = np.zeros(d)
    S = list(best_S)
    theta[S] = _lstsq_pinv(X[:, S], y, rcond)
    return _finish(X, y, theta, 0.0, total, True, "l0", None, theta_star,
                   support=tuple(best_S))


# ---------------------------------------------------------------------------
# Lasso by coordinate descent
# ---------------------------------------------------------------------------

@njit(cache=True)
def _kkt_max(indptr, indices, data, n, theta, r, lam, w, unpen_mask):
    worst = 0.0
    for j in range(theta.shape[0]):
        g = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            g += data[p] * r[indices[p]]
        g *= -2.0 / n
        if unpen_mask[j]:
            v = abs(g)
        elif theta[j] > 0:
            v = abs(g + lam * w[j])
        elif theta[j] < 0:
            v = abs(g - lam * w[j])
        else:
            v = max(0.0, abs(g) - lam * w[j])
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _cd(indptr, indices, data, colsq, n, theta, r, lam, w, pen_idx, unpen_mask, max_sweeps, tol):
    kkt = np.inf
    for sweep in range(max_sweeps):
        for jj in range(pen_idx.shape[0]):
            j = pen_idx[jj]
            cs = colsq[j]
            if cs == 0.0:
                theta[j] = 0.0
                continue
            g = 0.0
            for p in range(indptr[j], indptr[j + 1]):
                g += data[p] * r[indices[p]]
            z = theta[j] + g / cs
            thr = lam * w[j] * n / (2.0 * cs)
            if z > thr:
                new = z - thr
            elif z < -thr:
                new = z + thr
            else:
                new = 0.0
            delta = new - theta[j]
            if delta != 0.0:
                for p in range(indptr[j], indptr[j + 1]):
                    r[indices[p]] -= data[p] * delta
                theta[j] = new
        kkt = _kkt_max(indptr, indices, data, n, theta, r, lam, w, unpen_mask)
        if kkt <= tol:
            return sweep + 1, kkt
    return max_sweeps, kkt


def _csc(X):
    csc = sp.csc_matrix(X)
    csc.sort_indices()
    colsq = np.asarray(csc.multiply(csc).sum(axis=0)).ravel()
    return (csc.indptr.astype(np.int64), csc.indices.astype(np.int64),
            csc.data.astype(float), colsq)


class _CDProblem:
    """Compressed-column data shared across the lambdas of a path.

    Zero-weight coordinates ``U`` are profiled out exactly: coordinate descent
    runs on ``P X`` and ``P y`` with ``P`` the projector onto the orthogonal
    complement of ``span(X_U)``, and ``theta_U = X_U^+ (y - X_P theta_P)`` is
    recovered after every solve.  This is the exact minimization over the
    unpenalized block for each value of the penalized ones.
    """

    def __init__(self, X, y, weights=None):
        X = np.asarray(X, dtype=float)
        self.X = X
        self.y = np.asarray(y, dtype=float)
        self.n, self.d = X.shape
        w = np.ones(self.d) if weights is None else np.asarray(weights, dtype=float).copy()
        if w.shape != (self.d,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite nonnegative d-vector")
        self.w = w
        self.unpen_mask = w == 0
        self.U = np.flatnonzero(self.unpen_mask)
        self.pen_idx = np.flatnonzero(~self.unpen_mask).astype(np.int64)
        self.orig = _csc(X)
        if self.U.size:
            XU = X[:, self.U]
            self.XU_pinv = np.linalg.pinv(XU, rcond=PINV_RCOND)
            Xw = X - XU @ (self.XU_pinv @ X)
            # rounding leaves ~1e-17 entries where the projection is exact; drop them
            Xw[np.abs(Xw) <= 1e-13 * max(np.abs(X).max(), 1e-300)] = 0.0
            Xw[:, self.U] = 0.0
            self.yw = self.y - XU @ (self.XU_pinv @ self.y)
            self.work = _csc(Xw)
        else:
            self.XU_pinv = None
            self.yw = self.y
            self.work = self.orig

    def complete(self, theta):
        """Set the unpenalized block to its exact least-squares value."""
        if self.U.size:
            theta[self.U] = 0.0
            theta[self.U] = self.XU_pinv @ (self.y - self.X @ theta)
        return theta

    def base_residual(self):
        """Residual after fitting only the unpenalized coordinates."""
        theta = self.complete(np.zeros(self.d))
        return theta, self.y - self.X @ theta

    def lambda_max(self):
        _, r = self.base_residual()
        g = 2.0 * np.abs(self.X.T @ r) / self.n
        pen = self.pen_idx
        if pen.size == 0:
            return 0.0
        return float(np.max(g[pen] / self.w[pen]))

    def kkt(self, theta, lam):
        r = self.y - self.X @ theta
        ip, ix, dt, _ = self.orig
        return _kkt_max(ip, ix, dt, float(self.n), theta, r, float(lam), self.w, self.unpen_mask)

    def solve(self, lam, theta, max_sweeps, tol):
        theta = np.array(theta, dtype=float)
        theta[self.U] = 0.0
        ip, ix, dt, cs = self.work
        total = 0
        kkt = np.inf
        for _ in range(5):
            r = self.yw - (sp.csc_matrix((dt, ix, ip), shape=(self.n, self.d)) @ theta)
            it, _ = _cd(ip, ix, dt, cs, float(self.n), theta, r, float(lam), self.w,
                        self.pen_idx, self.unpen_mask, int(max_sweeps - total), float(tol))
            total += it
            full = self.complete(theta.copy())
            # recheck on the original problem with a fresh residual
            kkt = self.kkt(full, lam)
            if kkt <= tol or total >= max_sweeps:
                break
        return self.complete(theta), total, kkt


def lasso_kkt_residual(X, y, theta, lam, weights=None) -> float:
    """Largest violation of the weighted Lasso optimality conditions."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    w = np.ones(d) if weights is None else np.asarray(weights, dtype=float)
    g = 2.0 / n * (X.T @ (X @ theta - y))
    unpen = w == 0
    v = np.where(theta != 0, np.abs(g + lam * w * np.sign(theta)),
                 np.maximum(0.0, np.abs(g) - lam * w))
    v = np.where(unpen, np.abs(g), v)
    return float(v.max()) if d else 0.0


@dataclass(frozen=True)
class LambdaGrid:
    """Strictly decreasing positive regularization values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("grid needs at least one value")
        if np.any(v <= 0) or np.any(np.diff(v) >= 0):
            raise ValueError("grid values must be positive and strictly decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return self.count

    @classmethod
    def geometric(cls, hi: float, count: int = 100, ratio: float = 1e-4):
        if count == 1:
            return cls(np.array([hi]))
        return cls(np.geomspace(hi, hi * ratio, count))

    @classmethod
    def from_data(cls, X, y, count: int = 100, ratio: float = 1e-4, weights=None):
        """Log-spaced from ``lambda_max`` down to ``ratio * lambda_max``."""
        lm = lambda_max(X, y, weights)
        if not lm > 0:
            raise ValueError("lambda_max is zero; the zero vector is optimal for every lambda")
        return cls.geometric(lm, count, ratio)


def lambda_max(X, y, weights=None) -> float:
    """Smallest lambda at which all penalized coordinates vanish."""
    return _CDProblem(X, y, weights).lambda_max()


def solve_lasso(X, y, lam: float, weights=None, init=None, theta_star=None,
                max_sweeps: int = 100_000, tol: float = 1e-9) -> EstimatorSolution:
    """Weighted Lasso at a single lambda (canonical scaling)."""
    prob = _CDProblem(X, y, weights)
    return _solve_one(prob, lam, init, theta_star, max_sweeps, tol)


def _solve_one(prob, lam, init, theta_star, max_sweeps, tol, estimator="lasso"):
    theta0 = np.zeros(prob.d) if init is None else np.asarray(init, dtype=float)
    theta, it, kkt = prob.solve(lam, theta0, max_sweeps, tol)
    pen = SeparablePenalty.l1() if np.all(prob.w == 1) else SeparablePenalty.weighted_l1(prob.w)
    return _finish(prob.X, prob.y, theta, lam, it, kkt <= tol, estimator, pen, theta_star,
                   kkt=kkt)


def solve_lasso_path(X, y, grid: LambdaGrid | None = None, theta_star=None, weights=None,
                     max_sweeps: int = 100_000, tol: float = 1e-9,
                     estimator: str = "lasso") -> list[EstimatorSolution]:
    """Cyclic coordinate descent down ``grid`` with warm starts."""
    prob = _CDProblem(X, y, weights)
    if grid is None:
        grid = LambdaGrid.geometric(prob.lambda_max())
    theta, _ = prob.base_residual()
    out = []
    for lam in grid:
        sol = _solve_one(prob, lam, theta, theta_star, max_sweeps, tol, estimator)
        theta = sol.theta_hat
        out.append(sol)
    return out


# ---------------------------------------------------------------------------
# reweighted and square-root Lasso
# ---------------------------------------------------------------------------

def solve_reweighted_lasso(X, y, weights, lam: float, theta_star=None, init=None,
                           max_sweeps: int = 100_000, tol: float = 1e-9) -> EstimatorSolution:
    """Minimize ``||y - X theta||^2 + lam sum_j alpha_j |theta_j|``.

    Internally the problem is solved in canonical form with ``lam / n``; the
    returned ``lam`` is that canonical value and ``extras['lambda_input']``
    keeps the original.  Zero-weight coordinates are refit exactly by least
    squares at the end of every sweep.
    """
    n = np.asarray(X).shape[0]
    prob = _CDProblem(X, y, weights)
    sol = _solve_one(prob, lam / n, init, theta_star, max_sweeps, tol, "rwlasso")
    sol.extras["lambda_input"] = float(lam)
    return sol


def solve_sqrt_lasso(X, y, grid, theta_star=None, max_sweeps: int = 100_000,
                     tol: float = 1e-10) -> list[EstimatorSolution]:
    """Square-root Lasso ``||y - X theta|| / sqrt(n) + lam ||theta||_1`` along ``grid``.

    Each point is the Lasso solution at the matching Lasso parameter
    ``lam_L = 2 lam ||y - X theta(lam_L)|| / sqrt(n)``, found by root finding on
    the Lasso path.  ``extras`` records ``lambda_lasso`` and ``l1_norm``.
    ``grid`` may contain zero, which yields a least-squares point.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    prob = _CDProblem(X, y)
    lmax = prob.lambda_max()
    rn = math.sqrt(n)
    warm = np.zeros(prob.d)
    cache = {}

    def lasso_at(lam_l):
        nonlocal warm
        if lam_l not in cache:
            theta, it, kkt = prob.solve(lam_l, warm, max_sweeps, tol)
            warm = theta
            cache[lam_l] = (theta, it, kkt)
        return cache[lam_l]

    out = []
    for lam_s in np.asarray(list(grid), dtype=float):
        if lam_s < 0:
            raise ValueError("square-root Lasso parameters must be nonnegative")
        g_top = lmax * rn - 2 * lam_s * np.linalg.norm(y)
        if lmax == 0 or g_top <= 0:
            theta, it, kkt, lam_l = np.zeros(prob.d), 0, 0.0, lmax
        elif lam_s == 0:
            lam_l = 0.0
            theta, it, kkt = lasso_at(0.0)
        else:
            def g(log_l):
                lam_l = math.exp(log_l)
                theta, _, _ = lasso_at(lam_l)
                return lam_l * rn - 2 * lam_s * np.linalg.norm(y - X @ theta)

            lo = math.log(lmax) - 40.0
            if g(lo) >= 0:
                lam_l = math.exp(lo)
            else:
                lam_l = math.exp(brentq(g, lo, math.log(lmax), xtol=1e-13, rtol=1e-14))
            theta, it, kkt = lasso_at(lam_l)
        r = y - X @ theta
        obj = float(np.linalg.norm(r) / rn + lam_s * np.abs(theta).sum())
        err = None
        if theta_star is not None:
            e = X @ (theta - theta_star)
            err = float(e @ e) / n
        out.append(EstimatorSolution(theta.copy(), float(lam_s), obj, int(it), kkt <= tol, err,
                                     "sqrt_lasso", SeparablePenalty.l1(),
                                     dict(lambda_lasso=float(lam_l),
                                          l1_norm=float(np.abs(theta).sum()))))
    return out


# ---------------------------------------------------------------------------
# proximal gradient for family-F penalties
# ---------------------------------------------------------------------------

class _Operator:
    """Matrix-vector products, switching to CSR when the design is sparse."""

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        self.n, self.d = X.shape
        nnz = np.count_nonzero(X)
        if nnz < 0.1 * X.size:
            self.M = sp.csr_matrix(X)
            self.MT = self.M.T.tocsr()
        else:
            self.M = X
            self.MT = X.T

    def mv(self, v):
        return self.M @ v

    def rmv(self, v):
        return self.MT @ v


def _gist(op, y, p, lam, theta0, max_iters, window=5, sigma_ls=1e-5, eta=2.0,
          t_min=1e-30, t_max=1e30):
    n = op.n
    x = np.array(theta0, dtype=float)
    r = op.mv(x) - y
    F = float(r @ r) / n + p.total(x, lam)
    grad = 2.0 / n * op.rmv(r)
    F0 = max(F, 1e-300)
    hist = [F]
    trace = [F]
    t = 1.0
    converged = False
    failed = False
    it = 0
    for it in range(1, max_iters + 1):
        ref = max(hist[-window:])
        t = min(max(t, t_min), t_max)
        while True:
            xn = p.prox(x - grad / t, 1.0 / t, lam)
            rn = op.mv(xn) - y
            Fn = float(rn @ rn) / n + p.total(xn, lam)
            dx = xn - x
            dd = float(dx @ dx)
            if Fn <= ref - 0.5 * sigma_ls * t * dd or t >= t_max:
                break
            t *= eta
        if not np.isfinite(Fn) or Fn > 1e12 * F0:
            failed = True
            break
        gn = 2.0 / n * op.rmv(rn)
        step = math.sqrt(dd)
        x_norm = float(np.linalg.norm(x))
        dg = gn - grad
        x, r, grad, F = xn, rn, gn, Fn
        hist.append(F)
        trace.append(F)
        if step <= 1e-9 * (1.0 + x_norm):
            converged = True
            break
        t = float(dx @ dg) / dd if dd > 0 else 1.0
    return x, F, it, converged and not failed, failed, trace


def solve_penalized(X, y, p: SeparablePenalty, lam: float, init=None, theta_star=None,
                    max_iters: int = 20_000, multistart: bool = False, seed: int = 0,
                    estimator: str | None = None) -> EstimatorSolution:
    """Proximal gradient with Barzilai-Borwein steps and a nonmonotone line search.

    Returns a stationary point of ``(1/n)||y - X theta||^2 + lam * rho_lam(theta)``.
    With ``multistart`` the run is repeated from zero, the least-squares point
    and eight seeded Gaussian draws and the lowest objective is kept.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    op = _Operator(X)
    d = X.shape[1]
    starts = [np.zeros(d) if init is None else np.asarray(init, dtype=float)]
    if multistart:
        rng = np.random.default_rng(seed)
        starts.append(np.linalg.lstsq(X, y, rcond=None)[0])
        scale = max(float(np.abs(starts[-1]).max()), 1.0)
        starts.extend(scale * rng.standard_normal(d) for _ in range(8))
    best = None
    for s in starts:
        res = _gist(op, y, p, float(lam), s, max_iters)
        if best is None or res[1] < best[1]:
            best = res
    x, F, it, conv, failed, trace = best
    name = estimator or p.kind.value
    return _finish(X, y, x, lam, it, conv, name, p, theta_star, failed=failed, trace=trace)


# ---------------------------------------------------------------------------
# lambda selection
# ---------------------------------------------------------------------------

class SelectionCriterion(enum.Enum):
    ORACLE = "oracle"
    FIXED = "fixed"


def lambda_prop1(sigma: float, n: int, d: int) -> float:
    return 4.0 * sigma * math.sqrt(math.log(d) / n)


def lambda_prop2(sigma: float, n: int, d: int) -> float:
    return 4.0 * sigma * math.sqrt(2.0 * math.log(d) / n)


def lambda_nonconvex(n: int, C: float = 0.1) -> float:
    """``C sqrt(log n / n)``; ``C = 0.1`` is the value reported for the GIST solver."""
    return C * math.sqrt(math.log(n) / n)


def select_lambda(path, criterion=SelectionCriterion.ORACLE, target: float | None = None
                  ) -> EstimatorSolution:
    """Pick one solution from a path.

    ``ORACLE`` minimizes the prediction error (first minimizer on ties).
    ``FIXED`` returns the solution whose lambda is nearest to ``target`` on a
    log scale.
    """
    path = list(path)
    if not path:
        raise ValueError("empty path")
    criterion = SelectionCriterion(criterion)
    if criterion is SelectionCriterion.ORACLE:
        if any(s.prediction_error is None for s in path):
            raise ValueError("oracle selection requires prediction errors (theta* known)")
        return min(path, key=lambda s: s.prediction_error)
    if target is None or target <= 0:
        raise ValueError("fixed selection needs a positive target lambda")
    lt = math.log(target)
    return min(path, key=lambda s: abs(math.log(s.lam) - lt) if s.lam > 0 else math.inf)


def solutions_to_csv(solutions, path) -> None:
    """Rows of ``estimator, lambda, prediction_error, objective, iterations, converged``."""
    cols = ["estimator", "lambda", "prediction_error", "objective", "iterations", "converged"]

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return f"{v:.17g}"
        return "" if v is None else str(v)

    try:
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for s in solutions:
                row = s.csv_row()
                fh.write(",".join(fmt(row[c]) for c in cols) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write solutions to {path}: {exc}") from exc
