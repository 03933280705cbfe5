"""Local-minimum landscape of block-diagonal lower-bound designs.

On a block design the penalized least-squares loss separates into independent
two-dimensional problems, one per 2x2 block.  This module evaluates the
quantities entering the existence bound for bad local minima, and enumerates
the local minima of each 2-D block loss by a dense grid scan followed by
proximal-gradient refinement.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .designs import DesignMatrix, Provenance, RegressionInstance
from .penalties import SeparablePenalty, _knot_scaled, _prox

__all__ = [
    "BlockQuantities",
    "Lemma1Bound",
    "BlockLoss",
    "BlockMinimum",
    "LocalMinimaCatalog",
    "block_decompose_error",
    "block_quantities",
    "compute_lemma1_bound",
    "block_loss",
    "enumerate_block_minima",
    "grid_candidates",
    "grid_candidates_bruteforce",
    "catalog_instance",
    "worst_local_min_error",
    "worst_local_min_errors",
    "band_frequency",
    "catalog_to_csv",
]

REFINE_TOL = 1e-10
MAX_CANDIDATES = 100_000


# ---------------------------------------------------------------------------
# error decomposition and bound quantities
# ---------------------------------------------------------------------------

def _require_block(design: DesignMatrix):
    if not isinstance(design, DesignMatrix) or not design.is_block:
        raise ValueError("a Theorem-1, Theorem-2 or simulation design is required")


def block_decompose_error(design: DesignMatrix, theta, theta_star) -> np.ndarray:
    """Per-block shares of ``(1/n)||X(theta - theta*)||^2``.

    Block ``i`` contributes ``(n_core/n) ||A (theta - theta*)_{2i:2i+2}||^2``;
    the factor is 1 for even ``n``.  Zero columns contribute nothing.
    """
    _require_block(design)
    delta = np.asarray(theta, dtype=float) - np.asarray(theta_star, dtype=float)
    if delta.size != design.d:
        raise ValueError("theta has the wrong dimension")
    m = design.block_count
    A = design.unit_block()
    pairs = delta[: 2 * m].reshape(m, 2)
    r = pairs @ A.T
    scale = design.params["n_core"] / design.n
    return scale * np.sum(r * r, axis=1)


@dataclass
class BlockQuantities:
    """Per-block constants of the lower-bound argument at one ``lam``.

    ``lam_gamma[i]`` is ``lam * gamma_i``; in ``theorem1`` mode ``gamma_i`` is
    the smaller of the two coordinate penalties at ``B``, in ``theorem2`` mode
    the smaller of their derivative suprema over ``(0, B]``.  ``a[i]`` is
    ``(cos a, sin a)`` when the first coordinate attains ``gamma_i`` and
    ``(-cos a, sin a)`` otherwise; ``w_prime[i] = <a_i, w_i> / sqrt(n)``.
    """

    mode: str
    lam: float
    B: float
    gamma: np.ndarray
    lam_gamma: np.ndarray
    a: np.ndarray
    w_prime: np.ndarray

    @property
    def gamma_1(self) -> float:
        return float(self.gamma.max())

    @property
    def lam_gamma_1(self) -> float:
        return float(self.lam_gamma.max())


def _coordinate_constants(p: SeparablePenalty, lam: float, B: float, j: int, mode: str):
    # (gamma, lam * gamma) for coordinate j
    if mode == "theorem1":
        lg = float(p.values(np.array([B]), lam, coords=[j])[0])
        g = lg / lam if lam > 0 else float(p.values(np.array([B]), 1.0, coords=[j])[0])
        return g, lg
    u = B * np.concatenate([[1e-12], np.linspace(0.0, 1.0, 4097)[1:]])
    lam_eff = lam if lam > 0 else 1.0
    sup = float(np.max(p.gradient(u, lam_eff, coords=np.full(u.size, j))))
    return sup / lam_eff, (sup if lam > 0 else 0.0)


def block_quantities(instance: RegressionInstance, penalty: SeparablePenalty, lam: float,
                     mode: str = "theorem1") -> BlockQuantities:
    """Evaluate ``gamma_i``, ``a_i`` and ``w'_i`` for every block.

    ``B = 4 sigma / sqrt(n)`` in ``theorem1`` mode and ``sigma / (4 sqrt(n))``
    in ``theorem2`` mode (``n`` the number of block rows).
    """
    D = instance.design
    _require_block(D)
    if mode not in ("theorem1", "theorem2"):
        raise ValueError("mode must be 'theorem1' or 'theorem2'")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    core = D.params.get("n_core", D.n)
    sigma = instance.sigma
    B = 4 * sigma / math.sqrt(core) if mode == "theorem1" else sigma / (4 * math.sqrt(core))
    m = D.block_count
    gam = np.empty(m)
    lgam = np.empty(m)
    a = np.empty((m, 2))
    c, s = math.cos(D.alpha), math.sin(D.alpha)
    for i in range(m):
        g1, l1 = _coordinate_constants(penalty, lam, B, 2 * i, mode)
        g2, l2 = _coordinate_constants(penalty, lam, B, 2 * i + 1, mode)
        if g1 <= g2:
            gam[i], lgam[i], a[i] = g1, l1, (c, s)
        else:
            gam[i], lgam[i], a[i] = g2, l2, (-c, s)
    w = np.asarray(instance.w, dtype=float)[: 2 * m].reshape(m, 2)
    wp = np.sum(a * w, axis=1) / math.sqrt(core)
    return BlockQuantities(mode, float(lam), B, gam, lgam, a, wp)


@dataclass
class Lemma1Bound:
    """The two terms of the bad-local-minimum bound at one ``lam``."""

    T1: float
    T2: float
    band_count: int
    quantities: BlockQuantities

    @property
    def total(self) -> float:
        return self.T1 + self.T2


def compute_lemma1_bound(instance: RegressionInstance, penalty: SeparablePenalty,
                         lam: float) -> Lemma1Bound:
    """``T1`` and ``T2`` from the realized noise on a Theorem-1 instance.

    ``T1 = 1[lam g1 > 4B(sin^2(a) R + ||w_{1:2}||/sqrt(n))] sin^2(a) (R - 2B)_+^2``
    and ``T2 = sum_{i>=2} 1[B/2 <= w'_i <= B] (B^2/4 - lam g1)``, where
    ``g1 = max_i gamma_i``.  Summands of ``T2`` are not clipped at zero.
    """
    D = instance.design
    if D.provenance is not Provenance.THEOREM1:
        raise ValueError("the bound is defined for Theorem-1 designs")
    R = D.params["R"]
    expect = np.zeros(D.d)
    expect[:2] = R / 2
    if not np.allclose(instance.theta_star, expect, rtol=0, atol=1e-15 * max(1.0, R)):
        raise ValueError("theta* must be (R/2, R/2, 0, ..., 0)")
    q = block_quantities(instance, penalty, lam, "theorem1")
    core = D.params["n_core"]
    B = q.B
    s2 = math.sin(D.alpha) ** 2
    w12 = float(np.linalg.norm(instance.w[:2])) / math.sqrt(core)
    lg1 = q.lam_gamma_1
    T1 = s2 * max(R - 2 * B, 0.0) ** 2 if lg1 > 4 * B * (s2 * R + w12) else 0.0
    band = (q.w_prime[1:] >= B / 2) & (q.w_prime[1:] <= B)
    count = int(band.sum())
    T2 = count * (B * B / 4 - lg1)
    return Lemma1Bound(float(T1), float(T2), count, q)


def band_frequency(design: DesignMatrix, penalty: SeparablePenalty, lam: float, trials: int,
                   sigma: float = 1.0, seed=None) -> dict:
    """Monte-Carlo frequency of ``B/2 <= w'_i <= B`` over blocks ``i >= 2``.

    Each trial draws Gaussian noise on a Theorem-1 ``design`` and forms
    ``w'_i = <a_i, w_i> / sqrt(n)`` with the directions of
    :func:`block_quantities`.  Blocks use disjoint noise coordinates, so the
    ``trials * (m - 1)`` samples are independent.  Returns the pooled
    frequency, the closed-form ``P[B/2 <= N(0, sigma^2/n) <= B] = P[2 <= Z <= 4]``,
    the Monte-Carlo standard error and the sample count.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if design.provenance is not Provenance.THEOREM1:
        raise ValueError("a Theorem-1 design is required")
    theta = np.zeros(design.d)
    theta[:2] = design.params["R"] / 2
    rng = np.random.default_rng(seed)
    q = block_quantities(RegressionInstance(design, theta, np.zeros(design.n), design.entries @ theta,
                                            sigma, 2, design.params["R"], None),
                         penalty, lam, "theorem1")
    m = design.block_count
    core = design.params["n_core"]
    w = sigma * rng.standard_normal((trials, design.n))
    wp = np.einsum("tmk,mk->tm", w[:, : 2 * m].reshape(trials, m, 2), q.a) / math.sqrt(core)
    wp = wp[:, 1:]
    B = q.B
    freq = float(np.mean((wp >= B / 2) & (wp <= B)))
    p = float(stats.norm.cdf(4.0) - stats.norm.cdf(2.0))
    N = wp.size
    return {"frequency": freq, "probability": p, "std_error": math.sqrt(p * (1 - p) / N),
            "samples": N}


# ---------------------------------------------------------------------------
# 2-D block losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockLoss:
    """``l(u) = u'Qu - 2h'u + c + lam (rho_j1(u1) + rho_j2(u2))`` on one block.

    ``contribution(u) = scale * ||A(u - u_star)||^2`` is the block's share of the
    prediction error.  ``R`` sets the default search box and resolution.
    """

    Q: np.ndarray
    h: np.ndarray
    c: float
    penalty: SeparablePenalty
    lam: float
    coords: tuple = (0, 1)
    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    u_star: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scale: float = 1.0
    R: float = 1.0

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.shape != (2, 2) or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(Q)[0] <= 0:
            raise ValueError("Q must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))

    def _w(self):
        return np.array([self.penalty.weight(j) if self.penalty.weights is not None else 1.0
                         for j in self.coords])

    def value(self, u) -> float:
        u = np.asarray(u, dtype=float)
        pen = self.penalty.values(u, self.lam, coords=list(self.coords)).sum()
        return float(u @ self.Q @ u - 2 * self.h @ u + self.c + pen)

    def contribution(self, u) -> float:
        r = self.A @ (np.asarray(u, dtype=float) - self.u_star)
        return float(self.scale * (r @ r))

    @property
    def least_squares(self) -> np.ndarray:
        return np.linalg.solve(self.Q, self.h)

    def default_bounds(self) -> np.ndarray:
        """``[-2R, 2R]^2`` joined with a box holding every local minimum.

        For penalties nondecreasing in ``|t|`` shrinking a point toward the
        origin never raises the penalty, so a local minimum satisfies
        ``u'Qu <= h'u``: an ellipse centred at half the least-squares point.
        """
        ls = self.least_squares
        half = 0.5 * np.sqrt(np.diag(np.linalg.inv(self.Q)) * float(self.h @ ls))
        lo = np.minimum(-2 * self.R, ls / 2 - half)
        hi = np.maximum(2 * self.R, ls / 2 + half)
        return np.column_stack([lo, hi])


def block_loss(instance: RegressionInstance, i: int, penalty: SeparablePenalty,
               lam: float) -> BlockLoss:
    """Block ``i`` (0-based) of ``(1/n)||y - X theta||^2 + lam rho(theta)``."""
    D = instance.design
    _require_block(D)
    if not 0 <= i < D.block_count:
        raise ValueError("block index out of range")
    s = slice(2 * i, 2 * i + 2)
    Xb = D.entries[s, s]
    yb = np.asarray(instance.y, dtype=float)[s]
    n = D.n
    r = instance.R if instance.R else D.params.get("R", 1.0)
    return BlockLoss(Xb.T @ Xb / n, Xb.T @ yb / n, float(yb @ yb) / n, penalty, float(lam),
                     (2 * i, 2 * i + 1), D.unit_block(),
                     np.asarray(instance.theta_star, dtype=float)[s],
                     D.params["n_core"] / n, float(r))


# ---------------------------------------------------------------------------
# grid scan
# ---------------------------------------------------------------------------

def _axis(lo: float, hi: float, res: float) -> np.ndarray:
    # grid of integer multiples of res, so that 0 is always a node
    k0 = math.floor(lo / res) - 1
    k1 = math.ceil(hi / res) + 1
    return np.arange(k0, k1 + 1, dtype=float) * res


def _separable_terms(loss: BlockLoss, a: np.ndarray, b: np.ndarray):
    Q, h, p = loss.Q, loss.h, loss.penalty
    F1 = Q[0, 0] * a * a - 2 * h[0] * a + p.values(a, loss.lam, np.full(a.size, loss.coords[0]))
    F2 = Q[1, 1] * b * b - 2 * h[1] * b + p.values(b, loss.lam, np.full(b.size, loss.coords[1]))
    return np.ascontiguousarray(F1), np.ascontiguousarray(F2), 2.0 * Q[0, 1]


@njit(cache=True)
def _val(F1, F2, K, a, b, i, j):
    return F1[i] + F2[j] + K * a[i] * b[j]


@njit(cache=True)
def _is_grid_min(F1, F2, K, a, b, i, j):
    v = _val(F1, F2, K, a, b, i, j)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if (di != 0 or dj != 0) and _val(F1, F2, K, a, b, i + di, j + dj) < v:
                return False
    return True


@njit(cache=True)
def _scan_brute(F1, F2, K, a, b, out):
    cnt = 0
    for i in range(1, a.shape[0] - 1):
        for j in range(1, b.shape[0] - 1):
            if _is_grid_min(F1, F2, K, a, b, i, j):
                if cnt < out.shape[0]:
                    out[cnt, 0] = i
                    out[cnt, 1] = j
                cnt += 1
    return cnt


@njit(cache=True)
def _scan_fast(F1, F2, K, a, b, out):
    # (i, j) can only be a row minimum when c_i = K a_i lies in an interval
    # fixed by F2 around j; c_i is monotone in i, so those rows are contiguous
    n1 = a.shape[0]
    n2 = b.shape[0]
    c = K * a
    scale = 0.0
    for i in range(n1):
        scale = max(scale, abs(F1[i]) + abs(c[i]) * max(abs(b[0]), abs(b[n2 - 1])))
    for j in range(n2):
        scale = max(scale, abs(F2[j]))
    slack = 1e-12 * (scale + 1.0)
    ascending = K >= 0
    cnt = 0
    for j in range(1, n2 - 1):
        dp = b[j + 1] - b[j]
        dm = b[j] - b[j - 1]
        # v(i,j) <= v(i,j+1)  <=>  c_i >= -(F2[j+1] - F2[j]) / dp
        lo = (-(F2[j + 1] - F2[j]) - slack) / dp
        # v(i,j) <= v(i,j-1)  <=>  c_i <= (F2[j-1] - F2[j]) / dm
        hi = ((F2[j - 1] - F2[j]) + slack) / dm
        if lo > hi:
            continue
        # rows 1..n1-2 with lo <= c_i <= hi
        if ascending:
            first = np.searchsorted(c, lo, side="left")
            last = np.searchsorted(c, hi, side="right") - 1
        else:
            rc = c[::-1]
            last = n1 - 1 - np.searchsorted(rc, lo, side="left")
            first = n1 - 1 - (np.searchsorted(rc, hi, side="right") - 1)
        first = max(first, 1)
        last = min(last, n1 - 2)
        for i in range(first, last + 1):
            if _is_grid_min(F1, F2, K, a, b, i, j):
                if cnt < out.shape[0]:
                    out[cnt, 0] = i
                    out[cnt, 1] = j
                cnt += 1
    return cnt


def _grid(loss: BlockLoss, bounds, resolution):
    R = loss.R
    res = 1e-3 * R if resolution is None else float(resolution)
    if not res > 0 or res > 1e-3 * R * (1 + 1e-12):
        raise ValueError(f"resolution {res} is coarser than 1e-3 * R = {1e-3 * R}")
    bx = loss.default_bounds() if bounds is None else np.asarray(bounds, dtype=float)
    if bx.shape != (2, 2):
        raise ValueError("bounds must be [[lo1, hi1], [lo2, hi2]]")
    if np.any(bx[:, 0] > -2 * R) or np.any(bx[:, 1] < 2 * R):
        raise ValueError("bounds must cover [-2R, 2R]^2")
    return _axis(bx[0, 0], bx[0, 1], res), _axis(bx[1, 0], bx[1, 1], res), res


def _run_scan(kernel, loss, bounds, resolution):
    a, b, res = _grid(loss, bounds, resolution)
    F1, F2, K = _separable_terms(loss, a, b)
    out = np.empty((MAX_CANDIDATES, 2), dtype=np.int64)
    cnt = kernel(F1, F2, K, a, b, out)
    if cnt > MAX_CANDIDATES:
        raise RuntimeError(f"{cnt} grid minima exceed the candidate cap")
    idx = out[:cnt]
    idx = idx[np.lexsort((idx[:, 1], idx[:, 0]))]
    return np.column_stack([a[idx[:, 0]], b[idx[:, 1]]]), res


def grid_candidates(loss: BlockLoss, bounds=None, resolution=None) -> np.ndarray:
    """Grid nodes whose eight neighbours all have objective no smaller."""
    return _run_scan(_scan_fast, loss, bounds, resolution)[0]


def grid_candidates_bruteforce(loss: BlockLoss, bounds=None, resolution=None) -> np.ndarray:
    """Reference full scan of every node; same output as :func:`grid_candidates`."""
    return _run_scan(_scan_brute, loss, bounds, resolution)[0]


# ---------------------------------------------------------------------------
# refinement and catalog
# ---------------------------------------------------------------------------

@njit(cache=True)
def _refine2(Q, h, kind, par, w, lam, u, step, tol, max_iter):
    ks = _knot_scaled(kind)
    x0, x1 = u[0], u[1]
    for k in range(max_iter):
        g0 = 2.0 * (Q[0, 0] * x0 + Q[0, 1] * x1 - h[0])
        g1 = 2.0 * (Q[1, 0] * x0 + Q[1, 1] * x1 - h[1])
        z0 = x0 - step * g0
        z1 = x1 - step * g1
        if lam == 0.0:
            n0, n1 = z0, z1
        elif ks:
            n0 = lam * _prox(kind, par, w[0], z0 / lam, step)
            n1 = lam * _prox(kind, par, w[1], z1 / lam, step)
        else:
            n0 = _prox(kind, par, w[0], z0, step * lam)
            n1 = _prox(kind, par, w[1], z1, step * lam)
        d = math.sqrt((n0 - x0) ** 2 + (n1 - x1) ** 2)
        x0, x1 = n0, n1
        if d <= tol:
            return np.array([x0, x1]), k + 1
    return np.array([x0, x1]), max_iter


@dataclass
class BlockMinimum:
    u: np.ndarray
    objective: float
    contribution: float


@dataclass
class LocalMinimaCatalog:
    """Local minima per block at one ``lam``; ``resolution`` is the grid step."""

    blocks: list
    resolution: float
    lam: float

    def worst_error(self) -> float:
        """Largest prediction error over block-assembled local minima."""
        return float(sum(max(m.contribution for m in blk) for blk in self.blocks))

    def best_error(self) -> float:
        return float(sum(min(m.contribution for m in blk) for blk in self.blocks))

    def worst_point(self, d: int) -> np.ndarray:
        theta = np.zeros(d)
        for i, blk in enumerate(self.blocks):
            theta[2 * i: 2 * i + 2] = max(blk, key=lambda m: m.contribution).u
        return theta


def enumerate_block_minima(loss: BlockLoss, bounds=None, resolution=None,
                           max_iter: int = 1_000_000) -> list:
    """All local minima of a 2-D block loss found by grid scan and refinement.

    Parameters
    ----------
    loss : BlockLoss
        The block objective.
    bounds : array_like, optional
        ``[[lo1, hi1], [lo2, hi2]]``; must cover ``[-2R, 2R]^2``.  The default
        also covers the region where local minima can lie.
    resolution : float, optional
        Grid step, at most ``1e-3 R`` (the default).
    max_iter : int
        Proximal-gradient cap for each refinement.

    Returns
    -------
    list of BlockMinimum
        Sorted by objective; each point is within about ``1e-10`` of a
        proximal-gradient fixed point.  Refined points closer than ``10 * resolution``
        are merged, keeping the lower objective.
    """
    cands, res = _run_scan(_scan_fast, loss, bounds, resolution)
    p = loss.penalty
    w = np.array([p.weight(j) for j in loss.coords])
    ev = np.linalg.eigvalsh(loss.Q)
    L = 2.0 * float(ev[-1])
    # a step of size t leaves the iterate within about t * L / (2 mu) of the fixed point
    tol = REFINE_TOL * float(ev[0] / ev[-1])
    found = []
    for u0 in cands:
        u, _ = _refine2(loss.Q, loss.h, p.code, p.par, w, float(loss.lam), u0.copy(),
                        1.0 / L, tol, max_iter)
        found.append(BlockMinimum(u, loss.value(u), loss.contribution(u)))
    found.sort(key=lambda m: m.objective)
    kept: list = []
    for m in found:
        if all(np.linalg.norm(m.u - k.u) > 10 * res for k in kept):
            kept.append(m)
    return kept


def catalog_instance(instance: RegressionInstance, penalty: SeparablePenalty, lam: float,
                     resolution=None) -> LocalMinimaCatalog:
    """Enumerate every block of a block-design instance at one ``lam``."""
    blocks = []
    res = None
    for i in range(instance.design.block_count):
        loss = block_loss(instance, i, penalty, lam)
        blocks.append(enumerate_block_minima(loss, resolution=resolution))
        res = 1e-3 * loss.R if resolution is None else resolution
    return LocalMinimaCatalog(blocks, float(res), float(lam))


def worst_local_min_errors(instance: RegressionInstance, penalty: SeparablePenalty,
                           lambda_grid, resolution=None) -> np.ndarray:
    """Worst block-assembled local-minimum error at each ``lam`` of the grid."""
    return np.array([catalog_instance(instance, penalty, lam, resolution).worst_error()
                     for lam in lambda_grid])


def worst_local_min_error(instance: RegressionInstance, penalty: SeparablePenalty,
                          lambda_grid, resolution=None) -> float:
    """``inf`` over the grid of the worst local-minimum prediction error."""
    vals = worst_local_min_errors(instance, penalty, lambda_grid, resolution)
    if vals.size == 0:
        raise ValueError("empty lambda grid")
    return float(vals.min())


def catalog_to_csv(catalog: LocalMinimaCatalog, path=None) -> str:
    """``block,u1,u2,objective,contribution`` for every catalogued minimum."""
    buf = io.StringIO()
    buf.write("block,u1,u2,objective,contribution\n")
    for i, blk in enumerate(catalog.blocks):
        for m in blk:
            buf.write(f"{i},{m.u[0]:.17g},{m.u[1]:.17g},{m.objective:.17g},"
                      f"{m.contribution:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
