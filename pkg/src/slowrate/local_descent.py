"""Ball-constrained local descent on penalized least squares.

Each step replaces the current iterate by a minimizer of the objective over a
Euclidean ball of radius ``eta`` around it, choosing the minimizer closest to
the center; the run stops once that minimizer lies strictly inside the ball.

The ball oracle is approximate: a multistart projected proximal-gradient
search whose projection is the exact proximal map of ``step * lam * rho``
plus the ball indicator, computed by a scalar search on the ball multiplier.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit

from .designs import DesignMatrix, RegressionInstance, build_theorem2_design, make_instance
from .penalties import SeparablePenalty, _grad_kernel, _knot_scaled, _prox, _total_kernel

__all__ = [
    "QuadraticObjective",
    "DescentConfig",
    "DescentTrajectory",
    "BallResult",
    "ball_argmin",
    "descend",
    "estimate_event_probabilities",
    "trajectory_to_csv",
]

INTERIOR_TOL = 1e-12
VALUE_TOL = 1e-10


# ---------------------------------------------------------------------------
# objective handle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``L(theta) = theta' G theta - 2 h' theta + c + lam * rho(theta)``.

    For regression, ``G = X'X / n``, ``h = X'y / n`` and ``c = ||y||^2 / n``, so
    that the smooth part equals ``(1/n)||y - X theta||^2``.
    """

    G: sp.csr_matrix
    h: np.ndarray
    c: float
    penalty: SeparablePenalty | None = None
    lam: float = 0.0
    lipschitz: float = field(init=False)
    decoupled: np.ndarray = field(init=False)

    def __post_init__(self):
        G = sp.csr_matrix(self.G, dtype=float)
        G.sort_indices()
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", np.ascontiguousarray(self.h, dtype=float))
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        d = self.h.size
        if G.shape != (d, d):
            raise ValueError("G and h have inconsistent sizes")
        # gradient Lipschitz constant of the smooth part: 2 * lambda_max(G)
        if d <= 400:
            top = float(np.linalg.eigvalsh(G.toarray())[-1]) if d else 0.0
        else:
            top = float(sp.linalg.eigsh(G, k=1, which="LA", return_eigenvectors=False)[0])
        object.__setattr__(self, "lipschitz", max(2.0 * top, 1e-300))
        nnz_rows = np.diff(G.indptr) > 0
        object.__setattr__(self, "decoupled", ~nnz_rows & (self.h == 0))

    @classmethod
    def from_regression(cls, X, y, penalty=None, lam=0.0) -> "QuadraticObjective":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        G = X.T @ X / n
        G[np.abs(G) <= 1e-15 * max(1.0, np.abs(G).max(initial=0.0))] = 0.0
        return cls(sp.csr_matrix(G), X.T @ y / n, float(y @ y) / n, penalty, float(lam))

    @classmethod
    def from_instance(cls, inst: RegressionInstance, penalty=None, lam=0.0):
        return cls.from_regression(inst.X, inst.y, penalty, lam)

    @classmethod
    def squared_distance(cls, z, penalty=None, lam=0.0) -> "QuadraticObjective":
        """``||theta - z||^2`` plus an optional penalty."""
        z = np.asarray(z, dtype=float)
        return cls(sp.identity(z.size, format="csr"), z, float(z @ z), penalty, float(lam))

    @property
    def d(self) -> int:
        return self.h.size

    def _pen_args(self):
        p = self.penalty or SeparablePenalty.l1()
        lam = self.lam if self.penalty is not None else 0.0
        return p.code, p.par, p.weight_vector(self.d), float(lam)

    def value(self, theta) -> float:
        theta = np.ascontiguousarray(theta, dtype=float)
        code, par, w, lam = self._pen_args()
        return float(_objective(self.G.indptr, self.G.indices, self.G.data, self.h, self.c,
                                code, par, w, lam, theta))


@njit(cache=True, nogil=True)
def _matvec(indptr, indices, data, x, out):
    for i in range(out.shape[0]):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


@njit(cache=True, nogil=True)
def _objective(indptr, indices, data, h, c, kind, par, w, lam, theta):
    acc = 0.0
    for i in range(theta.shape[0]):
        gi = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            gi += data[p] * theta[indices[p]]
        acc += theta[i] * (gi - 2.0 * h[i])
    return acc + c + _total_kernel(kind, par, w, lam, theta)


# ---------------------------------------------------------------------------
# ball-constrained proximal map
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _shifted_prox(kind, par, w, lam, z, c, nu, step, out):
    # argmin_u 0.5||u - z||^2 + step*lam*rho(u) + 0.5*nu*||u - c||^2; returns ||u - c||
    inv = 1.0 / (1.0 + nu)
    s = step * inv
    acc = 0.0
    ks = _knot_scaled(kind)
    for j in range(z.shape[0]):
        v = (z[j] + nu * c[j]) * inv
        if lam == 0.0:
            u = v
        elif ks:
            u = lam * _prox(kind, par, w[j], v / lam, s)
        else:
            u = _prox(kind, par, w[j], v, s * lam)
        out[j] = u
        acc += (u - c[j]) * (u - c[j])
    return math.sqrt(acc)


@njit(cache=True, nogil=True)
def _ball_prox(kind, par, w, lam, z, c, eta, step, out, tmp, nu_hint):
    """Prox of ``step*lam*rho`` restricted to the ball; returns the multiplier.

    Root search on ``g(nu) = eta / dist(nu) - 1``, which is exactly linear in
    ``nu`` without a penalty and close to linear with one.  ``out`` always
    holds the evaluation at the feasible end of the bracket.
    """
    dist = _shifted_prox(kind, par, w, lam, z, c, 0.0, step, out)
    if dist <= eta:
        return 0.0
    lo, glo = 0.0, eta / dist - 1.0
    if nu_hint > 0.0:
        hi = nu_hint
    else:
        dz = 0.0
        for j in range(z.shape[0]):
            dz += (z[j] - c[j]) * (z[j] - c[j])
        hi = max(math.sqrt(dz) / eta - 1.0, 1e-12)
    dist = _shifted_prox(kind, par, w, lam, z, c, hi, step, out)
    while dist > eta:
        lo, glo = hi, eta / dist - 1.0
        hi *= 4.0
        dist = _shifted_prox(kind, par, w, lam, z, c, hi, step, out)
    ghi = eta / dist - 1.0
    # stop once the feasible end sits within 1e-14 of the sphere
    gtol = 1e-14 / eta
    wlo, whi = glo, ghi  # Illinois-weighted copies used only for interpolation
    side = 0
    for _ in range(200):
        if ghi <= gtol or hi - lo <= 1e-15 * hi:
            break
        x = lo - wlo * (hi - lo) / (whi - wlo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        dist = _shifted_prox(kind, par, w, lam, z, c, x, step, tmp)
        gx = eta / dist - 1.0 if dist > 0.0 else 1.0
        if gx < 0.0:
            lo, glo, wlo = x, gx, gx
            if side == -1:
                whi *= 0.5
            side = -1
        else:
            hi, ghi, whi = x, gx, gx
            for j in range(z.shape[0]):
                out[j] = tmp[j]
            if side == 1:
                wlo *= 0.5
            side = 1
    return hi


@njit(cache=True, nogil=True)
def _refine(indptr, indices, data, h, kind, par, w, lam, center, eta, step, x, max_iter,
            tol, g, z, nxt, tmp):
    # projected proximal-gradient from x (in place); returns the iteration count
    nu = 0.0
    k = 0
    while k < max_iter:
        _matvec(indptr, indices, data, x, g)
        for j in range(x.shape[0]):
            z[j] = x[j] - step * 2.0 * (g[j] - h[j])
        nu = _ball_prox(kind, par, w, lam, z, center, eta, step, nxt, tmp, nu)
        diff = 0.0
        for j in range(x.shape[0]):
            diff += (nxt[j] - x[j]) * (nxt[j] - x[j])
            x[j] = nxt[j]
        k += 1
        if math.sqrt(diff) <= tol:
            break
    return k


@njit(cache=True, nogil=True)
def _candidates(indptr, indices, data, h, c0, kind, par, w, lam, center, eta, step,
                starts, max_iter, tol, decoupled, pts, vals):
    """Row 0 of ``pts`` is the center; row ``s + 1`` refines ``starts[s]``."""
    d = center.shape[0]
    g = np.empty(d)
    z = np.empty(d)
    nxt = np.empty(d)
    tmp = np.empty(d)
    # stay a hair inside so that independent norm evaluations agree on feasibility
    eta_in = eta * (1.0 - 1e-14)
    for j in range(d):
        pts[0, j] = center[j]
    vals[0] = _objective(indptr, indices, data, h, c0, kind, par, w, lam, center)
    total = 0
    for s in range(starts.shape[0]):
        x = pts[s + 1]
        for j in range(d):
            x[j] = starts[s, j]
        total += _refine(indptr, indices, data, h, kind, par, w, lam, center, eta_in, step,
                         x, max_iter, tol, g, z, nxt, tmp)
        # decoupled coordinates only add penalty: move them back toward the center
        for j in range(d):
            if decoupled[j] and abs(center[j]) <= abs(x[j]):
                x[j] = center[j]
        vals[s + 1] = _objective(indptr, indices, data, h, c0, kind, par, w, lam, x)
    return total


@njit(cache=True, nogil=True)
def _choose(pts, vals, center, u):
    """Closest near-minimizer; distance ties resolved by the uniform draw ``u``."""
    m, d = pts.shape
    best = vals[0]
    for i in range(m):
        best = min(best, vals[i])
    dist = np.full(m, np.inf)
    dmin = np.inf
    for i in range(m):
        if vals[i] <= best + VALUE_TOL:
            acc = 0.0
            for j in range(d):
                acc += (pts[i, j] - center[j]) ** 2
            dist[i] = math.sqrt(acc)
            dmin = min(dmin, dist[i])
    count = 0
    for i in range(m):
        if dist[i] <= dmin + INTERIOR_TOL:
            count += 1
    target = min(int(u * count), count - 1)
    for i in range(m):
        if dist[i] <= dmin + INTERIOR_TOL:
            if target == 0:
                return i
            target -= 1
    return 0


@njit(cache=True, nogil=True)
def _ball_sample(center, eta, out):
    d = center.shape[0]
    nrm = 0.0
    for j in range(d):
        out[j] = np.random.standard_normal()
        nrm += out[j] * out[j]
    r = eta * np.random.random() ** (1.0 / d) / max(math.sqrt(nrm), 1e-300)
    for j in range(d):
        out[j] = center[j] + r * out[j]


@njit(cache=True, nogil=True)
def _descend_kernel(indptr, indices, data, h, c0, kind, par, w, lam, theta0, eta, step,
                    n_random, max_iter, tol, max_steps, decoupled, seed, keep):
    np.random.seed(seed)
    d = theta0.shape[0]
    m = 2 + n_random
    starts = np.empty((m, d))
    pts = np.empty((m + 1, d))
    vals = np.empty(m + 1)
    grad = np.empty(d)
    pgrad = np.empty(d)
    theta = theta0.copy()
    prev = np.zeros(d)
    objs = np.empty(max_steps + 1)
    lens = np.empty(max_steps)
    inner = np.empty(max_steps, dtype=np.int64)
    its = np.empty((64 if keep else 1, d))
    its[0] = theta0
    nkeep = 1
    objs[0] = _objective(indptr, indices, data, h, c0, kind, par, w, lam, theta)
    terminated = False
    t = 0
    while t < max_steps:
        # starts: repeated last displacement, steepest direction, ball samples
        _matvec(indptr, indices, data, theta, grad)
        _grad_kernel(kind, par, w, lam, theta, pgrad)
        gn = 0.0
        pn = 0.0
        for j in range(d):
            grad[j] = 2.0 * (grad[j] - h[j]) + pgrad[j]
            gn += grad[j] * grad[j]
            pn += prev[j] * prev[j]
        gn = math.sqrt(gn)
        pn = math.sqrt(pn)
        for j in range(d):
            starts[0, j] = theta[j] + (prev[j] * min(1.0, eta / pn) if pn > 0 else 0.0)
            starts[1, j] = theta[j] - (eta * grad[j] / gn if gn > 0 else 0.0)
        for s in range(n_random):
            _ball_sample(theta, eta, starts[2 + s])
        inner[t] = _candidates(indptr, indices, data, h, c0, kind, par, w, lam, theta, eta,
                               step, starts, max_iter, tol, decoupled, pts, vals)
        i = _choose(pts, vals, theta, np.random.random())
        acc = 0.0
        for j in range(d):
            prev[j] = pts[i, j] - theta[j]
            acc += prev[j] * prev[j]
            theta[j] = pts[i, j]
        dist = math.sqrt(acc)
        objs[t + 1] = vals[i]
        lens[t] = dist
        t += 1
        if keep:
            if nkeep == its.shape[0]:
                grown = np.empty((2 * nkeep, d))
                grown[:nkeep] = its
                its = grown
            its[nkeep] = theta
            nkeep += 1
        if dist < eta - INTERIOR_TOL:
            terminated = True
            break
    return (theta, objs[:t + 1].copy(), lens[:t].copy(), its[:nkeep].copy(), terminated,
            inner[:t].copy())


# ---------------------------------------------------------------------------
# public oracle
# ---------------------------------------------------------------------------

@dataclass
class BallResult:
    """Outcome of one ball-constrained minimization."""

    theta: np.ndarray
    value: float
    distance: float
    center_value: float
    interior: bool
    starts: int
    iterations: int


def _uniform_ball(rng, center, eta, m):
    d = center.size
    g = rng.standard_normal((m, d))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    r = eta * rng.random(m) ** (1.0 / d)
    return center + g * r[:, None]


def ball_argmin(loss: QuadraticObjective, center, eta: float, n_starts: int = 256,
                seed=None, extra_starts=None, max_iter: int = 500, tol: float | None = None
                ) -> BallResult:
    """Approximate minimizer of ``loss`` over the ball of radius ``eta`` at ``center``.

    Parameters
    ----------
    loss : QuadraticObjective
        Objective handle.
    center : array_like
        Ball center.
    eta : float
        Ball radius, positive.
    n_starts : int
        Number of seeded uniform samples from the ball used as starts.  The
        center is always a start and, unrefined, always a candidate.
    seed : int or numpy.random.Generator, optional
        Drives the samples and the final tie-break.
    extra_starts : array_like, optional
        Additional starting points (rows), projected onto the ball.
    max_iter, tol : optional
        Per-start iteration cap and step-length stopping tolerance
        (default ``1e-12 * eta``).

    Returns
    -------
    BallResult
        Among candidates within ``1e-10`` of the best value, the one closest to
        the center; distance ties within ``1e-12`` are broken uniformly at random.
        Coordinates with zero design column are pulled back to the center
        whenever that does not raise their penalty.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    center = np.ascontiguousarray(center, dtype=float)
    if center.size != loss.d:
        raise ValueError("center has the wrong dimension")
    rows = [center[None, :]]
    if extra_starts is not None:
        e = np.atleast_2d(np.asarray(extra_starts, dtype=float)) - center
        nrm = np.linalg.norm(e, axis=1, keepdims=True)
        e = np.where(nrm > eta, e * (eta / np.maximum(nrm, 1e-300)), e)
        rows.append(center + e)
    if n_starts > 0:
        rows.append(_uniform_ball(rng, center, eta, n_starts))
    starts = np.ascontiguousarray(np.vstack(rows))
    m = starts.shape[0]
    pts = np.empty((m + 1, loss.d))
    vals = np.empty(m + 1)
    code, par, w, lam = loss._pen_args()
    G = loss.G
    iters = _candidates(G.indptr, G.indices, G.data, loss.h, loss.c, code, par, w, lam,
                        center, float(eta), 1.0 / loss.lipschitz, starts, int(max_iter),
                        float(tol if tol is not None else 1e-12 * eta), loss.decoupled,
                        pts, vals)
    pick = _choose(pts, vals, center, rng.random())
    theta = pts[pick].copy()
    r = float(np.linalg.norm(theta - center))
    return BallResult(theta, float(vals[pick]), r, float(vals[0]),
                      bool(r < eta - INTERIOR_TOL), m, int(iters))


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DescentConfig:
    """Settings for one descent run.

    ``init_std`` is the scale of the Gaussian initialization.  When ``B`` and
    ``H`` are both given, ``eta <= min(B, B / (lam * H))`` is enforced, where
    ``H`` is the derivative-Lipschitz constant of ``rho`` at this ``lam``.
    """

    eta: float
    lam: float
    init_std: float = 1.0
    max_steps: int = 100_000
    seed: int | None = None
    n_starts: int = 2
    max_iter: int = 500
    B: float | None = None
    H: float | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.lam < 0 or self.init_std < 0:
            raise ValueError("lam and init_std must be nonnegative")
        if self.max_steps < 0 or self.n_starts < 0:
            raise ValueError("max_steps and n_starts must be nonnegative")
        if self.B is not None and self.H is not None:
            cap = self.step_cap(self.B, self.lam, self.H)
            if self.eta > cap * (1 + 1e-12):
                raise ValueError(f"eta = {self.eta} exceeds min(B, B/(lam H)) = {cap}")

    @staticmethod
    def step_cap(B: float, lam: float, H: float) -> float:
        lh = lam * H
        return B if lh <= 0 else min(B, B / lh)

    @classmethod
    def for_design(cls, design: DesignMatrix, penalty: SeparablePenalty, lam: float,
                   **kw) -> "DescentConfig":
        """Largest admissible ``eta`` for a Theorem-2 build (``B`` from its params)."""
        B = design.params["B"]
        H = penalty.curvature(lam) if lam > 0 else 0.0
        return cls(eta=cls.step_cap(B, lam, H), lam=lam, B=B, H=H, **kw)


@dataclass
class DescentTrajectory:
    """Iterates ``theta^0 .. theta^(T+1)`` with per-step diagnostics."""

    iterates: np.ndarray
    objectives: np.ndarray
    step_lengths: np.ndarray
    terminated: bool
    eta: float
    inner_iterations: np.ndarray | None = None

    @property
    def steps(self) -> int:
        """``T``: number of boundary steps before the interior stop."""
        return max(len(self.step_lengths) - 1, 0) if self.terminated else len(self.step_lengths)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def local_minimum(self) -> bool:
        return self.terminated


def descend(instance: RegressionInstance, penalty: SeparablePenalty, config: DescentConfig,
            keep_iterates: bool = True) -> DescentTrajectory:
    """Run ball-constrained local descent from ``theta^0 ~ N(0, init_std^2 I)``.

    Each step's oracle refines the repeated previous displacement, the
    normalized steepest-descent direction and ``config.n_starts`` seeded ball
    samples, and also keeps the unrefined center as a candidate.
    """
    rng = np.random.default_rng(config.seed)
    loss = QuadraticObjective.from_instance(instance, penalty, config.lam)
    theta0 = config.init_std * rng.standard_normal(instance.d)
    code, par, w, lam = loss._pen_args()
    G = loss.G
    theta, objs, lens, its, term, inner = _descend_kernel(
        G.indptr, G.indices, G.data, loss.h, loss.c, code, par, w, lam, theta0,
        float(config.eta), 1.0 / loss.lipschitz, int(config.n_starts), int(config.max_iter),
        1e-12 * config.eta, int(config.max_steps), loss.decoupled,
        int(rng.integers(2**31 - 1)), bool(keep_iterates))
    if not keep_iterates:
        its = np.vstack([theta0, theta])
    return DescentTrajectory(its, objs, lens, bool(term), float(config.eta), inner)


def trajectory_to_csv(traj: DescentTrajectory, path=None) -> str:
    """``step,objective,step_length,min_distance_to_boundary`` for each step."""
    buf = io.StringIO()
    buf.write("step,objective,step_length,min_distance_to_boundary\n")
    for t, (f, s) in enumerate(zip(traj.objectives[1:], traj.step_lengths)):
        buf.write(f"{t},{f:.17g},{s:.17g},{traj.eta - s:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# event frequencies
# ---------------------------------------------------------------------------

def estimate_event_probabilities(config: DescentConfig, trials: int, n: int = 16,
                                 sigma: float = 1.0, R: float | None = None) -> dict:
    """Monte-Carlo frequencies of the initialization and noise events.

    Returns
    -------
    dict
        ``p_E0``: frequency of ``max(theta^0_1, theta^0_2) <= 0``.
        ``p_S2``: per block ``i = 2..n/2``, frequency of
        ``2 sin^2(alpha) r + 2||w_{1:2}||/sqrt(n) + 7B <= 2 w'_i``.
        ``p_S2_display``: the same with the simplified threshold
        ``2 a_i'w_i - 2||w_{1:2}|| >= 7 sigma / 4``.
        ``p_sufficient``: frequency of ``a_i'w_i / sigma >= 1`` jointly with
        ``||w_{1:2}||^2 / sigma^2 <= 1/64``, per block.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    R = sigma if R is None else R
    D = build_theorem2_design(n, n, sigma, R)
    core = D.params["n_core"]
    r, B = D.params["r_tilde"], D.params["B"]
    rng = np.random.default_rng(config.seed)
    init = config.init_std * rng.standard_normal((trials, 2))
    p_e0 = float(np.mean(np.max(init, axis=1) <= 0))
    a = np.array([math.cos(D.alpha), math.sin(D.alpha)])
    w = sigma * rng.standard_normal((trials, core))
    blocks = w.reshape(trials, core // 2, 2)
    aw = blocks @ a
    w12 = np.linalg.norm(blocks[:, 0, :], axis=1)
    sn = math.sqrt(core)
    lhs = 2 * math.sin(D.alpha) ** 2 * r + 2 * w12 / sn + 7 * B
    s2 = lhs[:, None] <= 2 * aw[:, 1:] / sn
    disp = 2 * aw[:, 1:] - 2 * w12[:, None] >= 7 * sigma / 4
    suff = (aw[:, 1:] / sigma >= 1) & ((w12 ** 2 / sigma ** 2) <= 1 / 64)[:, None]
    return {
        "p_E0": p_e0,
        "p_S2": s2.mean(axis=0),
        "p_S2_display": disp.mean(axis=0),
        "p_sufficient": suff.mean(axis=0),
        "trials": trials,
    }
