"""Coordinate-separable penalties: values, derivatives, proximal maps and checks.

Every penalty is stored at unit scale.  The objective used by the solvers is
``(1/n)||y - X theta||^2 + lam * rho_lam(theta)`` where, for SCAD and MCP, the
knots are rescaled with ``lam`` (``rho_lam(t) = lam * rho_1(t / lam)``) so that
``lam * rho_lam(t) = lam * |t|`` near the origin.  All other kinds are used as
``lam * rho(t)`` directly.

The scalar kernels below are compiled with numba and shared by the solvers,
the local descent oracle and the landscape enumerator.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "PenaltyDomainError",
    "PenaltyKind",
    "SeparablePenalty",
    "PenaltySmoothness",
    "FamilyReport",
    "penalty_value",
    "penalty_subderivative",
    "penalty_prox",
    "check_family_F",
    "penalty_from_config",
    "penalty_to_config",
]


class PenaltyDomainError(ValueError):
    """Raised when penalty parameters fall outside their admissible range."""


class PenaltyKind(enum.Enum):
    L1 = "l1"
    WEIGHTED_L1 = "weighted_l1"
    BRIDGE = "bridge"
    RIDGE = "ridge"
    SCAD = "scad"
    MCP = "mcp"


# integer codes used inside the compiled kernels
_L1, _WL1, _BRIDGE, _RIDGE, _SCAD, _MCP = range(6)
_CODES = {
    PenaltyKind.L1: _L1,
    PenaltyKind.WEIGHTED_L1: _WL1,
    PenaltyKind.BRIDGE: _BRIDGE,
    PenaltyKind.RIDGE: _RIDGE,
    PenaltyKind.SCAD: _SCAD,
    PenaltyKind.MCP: _MCP,
}

_TIE = 1e-13


# ---------------------------------------------------------------------------
# compiled scalar kernels (unit scale)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _rho(kind, par, w, t):
    x = abs(t)
    if kind == _L1:
        return x
    if kind == _WL1:
        return w * x
    if kind == _RIDGE:
        return x * x
    if kind == _BRIDGE:
        if x == 0.0:
            return 0.0
        return x ** par
    if kind == _SCAD:
        if x <= 1.0:
            return x
        if x <= par:
            return (2.0 * par * x - x * x - 1.0) / (2.0 * (par - 1.0))
        return 0.5 * (par + 1.0)
    # MCP
    if x <= par:
        return x - x * x / (2.0 * par)
    return 0.5 * par


@njit(cache=True)
def _drho(kind, par, w, x):
    """Right derivative on (0, inf); ``x`` must be positive."""
    if kind == _L1:
        return 1.0
    if kind == _WL1:
        return w
    if kind == _RIDGE:
        return 2.0 * x
    if kind == _BRIDGE:
        return par * x ** (par - 1.0)
    if kind == _SCAD:
        if x <= 1.0:
            return 1.0
        if x <= par:
            return (par - x) / (par - 1.0)
        return 0.0
    if x <= par:
        return 1.0 - x / par
    return 0.0


@njit(cache=True)
def _h(kind, par, w, x, u, s):
    return 0.5 * (u - x) * (u - x) + s * _rho(kind, par, w, u)


@njit(cache=True)
def _consider(kind, par, w, x, s, u, best_u, best_v):
    # keep the smaller objective; near-ties go to the smaller magnitude
    v = _h(kind, par, w, x, u, s)
    tol = _TIE * max(1.0, abs(best_v))
    if v < best_v - tol or (abs(v - best_v) <= tol and u < best_u):
        return u, v
    return best_u, best_v


@njit(cache=True)
def _bisect_root(par, s, x, lo, hi):
    # root of u + s*par*u^(par-1) - x on [lo, hi], increasing there
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = mid + s * par * mid ** (par - 1.0) - x
        if g > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@njit(cache=True)
def _prox(kind, par, w, t, s):
    """argmin_u 0.5 (u - t)^2 + s rho(u), ties toward smaller |u|."""
    if s <= 0.0 or t == 0.0:
        return t
    x = abs(t)
    sg = 1.0 if t > 0 else -1.0
    if kind == _L1:
        return sg * max(x - s, 0.0)
    if kind == _WL1:
        return sg * max(x - s * w, 0.0)
    if kind == _RIDGE:
        return t / (1.0 + 2.0 * s)
    # strongly convex prox objective: unique stationary point in closed form
    if kind == _SCAD and s < par - 1.0:
        if x <= s:
            return 0.0
        if x <= 1.0 + s:
            return sg * (x - s)
        if x <= par:
            return sg * ((par - 1.0) * x - s * par) / (par - 1.0 - s)
        return t
    if kind == _MCP and s < par:
        if x <= s:
            return 0.0
        if x <= par:
            return sg * (x - s) / (1.0 - s / par)
        return t
    bu = 0.0
    bv = 0.5 * x * x
    if kind == _SCAD:
        a = par
        bu, bv = _consider(kind, par, w, x, s, min(max(x - s, 0.0), 1.0), bu, bv)
        bu, bv = _consider(kind, par, w, x, s, 1.0, bu, bv)
        coef = 1.0 - s / (a - 1.0)
        if coef > 0.0:
            u = (x - s * a / (a - 1.0)) / coef
            bu, bv = _consider(kind, par, w, x, s, min(max(u, 1.0), a), bu, bv)
        bu, bv = _consider(kind, par, w, x, s, a, bu, bv)
        bu, bv = _consider(kind, par, w, x, s, max(x, a), bu, bv)
        return sg * bu
    if kind == _MCP:
        b = par
        coef = 1.0 - s / b
        if coef > 0.0:
            u = (x - s) / coef
            bu, bv = _consider(kind, par, w, x, s, min(max(u, 0.0), b), bu, bv)
        bu, bv = _consider(kind, par, w, x, s, b, bu, bv)
        bu, bv = _consider(kind, par, w, x, s, max(x, b), bu, bv)
        return sg * bu
    # bridge
    g = par
    if g == 1.0:
        return sg * max(x - s, 0.0)
    if g == 2.0:
        return t / (1.0 + 2.0 * s)
    if g > 1.0:
        return sg * _bisect_root(g, s, x, 0.0, x)
    # g < 1: stationary points solve u + s g u^(g-1) = x; the larger root is
    # the only interior local minimum, compared against u = 0
    umin = (s * g * (1.0 - g)) ** (1.0 / (2.0 - g))
    if umin >= x or umin + s * g * umin ** (g - 1.0) > x:
        return 0.0
    bu, bv = _consider(kind, par, w, x, s, _bisect_root(g, s, x, umin, x), bu, bv)
    return sg * bu


@njit(cache=True)
def _knot_scaled(kind):
    return kind == _SCAD or kind == _MCP


@njit(cache=True)
def _total_kernel(kind, par, weights, lam, theta):
    if lam == 0.0:
        return 0.0
    acc = 0.0
    if _knot_scaled(kind):
        for j in range(theta.shape[0]):
            acc += _rho(kind, par, weights[j], theta[j] / lam)
        return lam * lam * acc
    for j in range(theta.shape[0]):
        acc += _rho(kind, par, weights[j], theta[j])
    return lam * acc


@njit(cache=True)
def _prox_kernel(kind, par, weights, lam, z, step, out):
    if lam == 0.0 or step == 0.0:
        for j in range(z.shape[0]):
            out[j] = z[j]
        return
    if _knot_scaled(kind):
        for j in range(z.shape[0]):
            out[j] = lam * _prox(kind, par, weights[j], z[j] / lam, step)
    else:
        sl = step * lam
        for j in range(z.shape[0]):
            out[j] = _prox(kind, par, weights[j], z[j], sl)


@njit(cache=True)
def _values_kernel(kind, par, weights, lam, t, out):
    # elementwise lam * rho_lam(t_j); weights indexed by coordinate
    for i in range(t.shape[0]):
        if lam == 0.0:
            out[i] = 0.0
        elif _knot_scaled(kind):
            out[i] = lam * lam * _rho(kind, par, weights[i], t[i] / lam)
        else:
            out[i] = lam * _rho(kind, par, weights[i], t[i])


@njit(cache=True)
def _grad_kernel(kind, par, weights, lam, t, out):
    # derivative of lam * rho_lam on t != 0 (0 at t == 0)
    for i in range(t.shape[0]):
        x = abs(t[i])
        if x == 0.0 or lam == 0.0:
            out[i] = 0.0
            continue
        sg = 1.0 if t[i] > 0 else -1.0
        if _knot_scaled(kind):
            out[i] = sg * lam * _drho(kind, par, weights[i], x / lam)
        else:
            out[i] = sg * lam * _drho(kind, par, weights[i], x)


# ---------------------------------------------------------------------------
# public types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltySmoothness:
    """Continuity at zero and the Lipschitz constant H of the derivative."""

    continuous_at_origin: bool
    deriv_lipschitz_H: float  # math.inf encodes "unbounded"

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.deriv_lipschitz_H)


@dataclass(frozen=True, eq=False)
class SeparablePenalty:
    """A coordinate-separable regularizer ``rho(theta) = sum_j rho_j(theta_j)``.

    Parameters
    ----------
    kind : PenaltyKind
    param : float
        ``a`` for SCAD, ``b`` for MCP, the exponent for bridge.  Ignored for
        the other kinds.
    weights : array, optional
        Nonnegative per-coordinate weights, weighted L1 only.
    """

    kind: PenaltyKind
    param: float = float("nan")
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        kind = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PenaltyKind.SCAD and not self.param > 2:
            raise PenaltyDomainError(f"SCAD requires a > 2, got {self.param}")
        if kind is PenaltyKind.MCP and not self.param > 0:
            raise PenaltyDomainError(f"MCP requires b > 0, got {self.param}")
        if kind is PenaltyKind.BRIDGE and not self.param > 0:
            raise PenaltyDomainError(f"bridge requires exponent > 0, got {self.param}")
        if kind is PenaltyKind.WEIGHTED_L1:
            if self.weights is None:
                raise PenaltyDomainError("weighted L1 requires weights")
            w = np.array(self.weights, dtype=float).ravel()
            if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0):
                raise PenaltyDomainError("weights must be finite and nonnegative")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise PenaltyDomainError(f"{kind.value} does not take weights")

    # constructors ---------------------------------------------------------
    @classmethod
    def l1(cls):
        return cls(PenaltyKind.L1)

    @classmethod
    def ridge(cls):
        return cls(PenaltyKind.RIDGE)

    @classmethod
    def scad(cls, a=3.7):
        return cls(PenaltyKind.SCAD, float(a))

    @classmethod
    def mcp(cls, b=2.7):
        return cls(PenaltyKind.MCP, float(b))

    @classmethod
    def bridge(cls, gamma):
        return cls(PenaltyKind.BRIDGE, float(gamma))

    @classmethod
    def weighted_l1(cls, weights):
        return cls(PenaltyKind.WEIGHTED_L1, weights=weights)

    # helpers --------------------------------------------------------------
    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def par(self) -> float:
        return 0.0 if math.isnan(self.param) else float(self.param)

    @property
    def knot_scaled(self) -> bool:
        """SCAD and MCP move their knots with lambda."""
        return self.kind in (PenaltyKind.SCAD, PenaltyKind.MCP)

    def weight(self, j: int) -> float:
        if self.weights is None:
            return 1.0
        return float(self.weights[j])

    def weight_vector(self, d: int) -> np.ndarray:
        """Weights as a length-``d`` float array (ones for unweighted kinds)."""
        if self.weights is None:
            return np.ones(d)
        if self.weights.size != d:
            raise ValueError(f"penalty has {self.weights.size} weights, expected {d}")
        return np.ascontiguousarray(self.weights, dtype=float)

    def smoothness(self) -> PenaltySmoothness:
        k = self.kind
        if k in (PenaltyKind.L1, PenaltyKind.WEIGHTED_L1):
            H = 0.0
        elif k is PenaltyKind.RIDGE:
            H = 2.0
        elif k is PenaltyKind.SCAD:
            H = 1.0 / (self.param - 1.0)
        elif k is PenaltyKind.MCP:
            H = 1.0 / self.param
        elif self.param == 1.0:
            H = 0.0
        elif self.param == 2.0:
            H = 2.0
        else:
            H = math.inf
        return PenaltySmoothness(True, H)

    def curvature(self, lam: float) -> float:
        """Derivative-Lipschitz constant of the penalty as used at ``lam``."""
        H = self.smoothness().deriv_lipschitz_H
        if self.knot_scaled:
            return H / lam if lam > 0 else math.inf
        return H

    # vectorised scaled operations ----------------------------------------
    def total(self, theta, lam: float) -> float:
        """``lam * rho_lam(theta)`` summed over coordinates."""
        theta = np.ascontiguousarray(theta, dtype=float)
        return float(_total_kernel(self.code, self.par, self.weight_vector(theta.size),
                                   float(lam), theta))

    def values(self, t, lam: float, coords=None) -> np.ndarray:
        """Elementwise ``lam * rho_lam,j(t_i)`` with coordinate indices ``coords``."""
        t = np.ascontiguousarray(t, dtype=float).ravel()
        w = self._coord_weights(coords, t.size)
        out = np.empty_like(t)
        _values_kernel(self.code, self.par, w, float(lam), t, out)
        return out

    def gradient(self, t, lam: float, coords=None) -> np.ndarray:
        """Elementwise derivative of ``lam * rho_lam`` (zero at the origin)."""
        t = np.ascontiguousarray(t, dtype=float).ravel()
        w = self._coord_weights(coords, t.size)
        out = np.empty_like(t)
        _grad_kernel(self.code, self.par, w, float(lam), t, out)
        return out

    def prox(self, z, step: float, lam: float) -> np.ndarray:
        """Proximal map of ``step * lam * rho_lam`` applied coordinatewise."""
        z = np.ascontiguousarray(z, dtype=float)
        out = np.empty_like(z)
        _prox_kernel(self.code, self.par, self.weight_vector(z.size), float(lam),
                     z, float(step), out)
        return out

    def derivative_sup(self, B: float, lam: float, coords=(0,)) -> float:
        """min over ``coords`` of sup_{u in (0, B]} of the derivative of rho_lam."""
        u = B * np.concatenate([[1e-12], np.linspace(0.0, 1.0, 4097)[1:]])
        best = math.inf
        for j in coords:
            g = self.gradient(u, lam, coords=np.full(u.size, j)) / lam
            best = min(best, float(np.max(g)))
        return best

    def _coord_weights(self, coords, m):
        if self.weights is None:
            return np.ones(m)
        if coords is None:
            if self.weights.size != m:
                raise ValueError("coordinate indices required for weighted penalties")
            return np.ascontiguousarray(self.weights, dtype=float)
        return np.ascontiguousarray(self.weights[np.asarray(coords, dtype=int)], dtype=float)

    def to_config(self) -> dict:
        return penalty_to_config(self)

    def __repr__(self):
        body = json.dumps(self.to_config())
        return f"SeparablePenalty({body})"


# ---------------------------------------------------------------------------
# scalar interface
# ---------------------------------------------------------------------------

def penalty_value(p: SeparablePenalty, j: int, t: float) -> float:
    """Unit-scale value ``rho_j(t)``."""
    return float(_rho(p.code, p.par, p.weight(j), float(t)))


def penalty_subderivative(p: SeparablePenalty, j: int, t: float) -> tuple[float, float]:
    """Generalized derivative of ``rho_j`` at ``t`` as an interval ``(lo, hi)``.

    ``(-inf, inf)`` is returned for bridge penalties with exponent below one at
    the origin, where the derivative is unbounded.
    """
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    w = p.weight(j)
    if t == 0.0:
        k = p.kind
        if k in (PenaltyKind.RIDGE,):
            return (0.0, 0.0)
        if k is PenaltyKind.BRIDGE:
            if p.param < 1:
                return (-math.inf, math.inf)
            if p.param > 1:
                return (0.0, 0.0)
        slope = w if k is PenaltyKind.WEIGHTED_L1 else 1.0
        return (-slope, slope)
    g = math.copysign(float(_drho(p.code, p.par, w, abs(t))), t)
    return (g, g)


def penalty_prox(p: SeparablePenalty, j: int, t: float, step_times_lambda: float) -> float:
    """Unit-scale proximal map ``argmin_u 0.5 (u - t)^2 + s rho_j(u)``."""
    if step_times_lambda < 0:
        raise ValueError("step_times_lambda must be nonnegative")
    return float(_prox(p.code, p.par, p.weight(j), float(t), float(step_times_lambda)))


# ---------------------------------------------------------------------------
# family membership checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyReport:
    prop_i: bool
    prop_ii: bool
    prop_iii: bool
    prop_iv: bool
    prop_v: bool
    H_empirical: float
    H_declared: float

    def all_true(self) -> bool:
        return self.prop_i and self.prop_ii and self.prop_iii and self.prop_iv and self.prop_v


def _check_grid():
    pos = np.logspace(-6, 3, 5000)
    return np.concatenate([-pos[::-1], [0.0], pos])


def check_family_F(p: SeparablePenalty, seed: int = 0) -> FamilyReport:
    """Sampled check of the family properties (i)-(v).

    (i) separability, (ii) zero at the origin and symmetric, (iii) nondecreasing
    on the nonnegative axis, (iv) continuity at the origin, (v) a finite
    Lipschitz constant for the derivative on (0, inf).  The empirical Lipschitz
    constant is reported next to the declared one.
    """
    grid = _check_grid()
    coords = range(p.weights.size) if p.weights is not None else (0,)
    # distinct weights behave identically, so check each once
    if p.weights is not None:
        _, first = np.unique(p.weights, return_index=True)
        coords = [int(i) for i in first]
    rng = np.random.default_rng(seed)

    d = p.weights.size if p.weights is not None else 8
    ok_i = True
    for _ in range(20):
        theta = rng.standard_normal(d) * 10 ** rng.uniform(-3, 3)
        direct = sum(penalty_value(p, j, theta[j]) for j in range(d))
        ok_i &= math.isclose(p.total(theta, 1.0), direct, rel_tol=1e-12, abs_tol=1e-300)

    ok_ii = ok_iii = ok_iv = True
    H_emp = 0.0
    seq = 10.0 ** -np.arange(1, 301)
    pos = grid[grid > 0]
    for j in coords:
        v = np.array([penalty_value(p, j, t) for t in grid])
        vneg = np.array([penalty_value(p, j, -t) for t in grid])
        ok_ii &= penalty_value(p, j, 0.0) == 0.0 and bool(np.all(v == vneg))
        vp = np.array([penalty_value(p, j, t) for t in pos])
        ok_iii &= bool(np.all(np.diff(vp) >= -1e-12 * np.maximum(1.0, np.abs(vp[1:]))))
        small = np.array([penalty_value(p, j, t) for t in seq])
        top = max(small[0], 1e-300)
        ok_iv &= bool(np.all(np.diff(small) <= 0)) and small[-1] <= 1e-3 * top
        dp = np.array([float(_drho(p.code, p.par, p.weight(j), t)) for t in pos])
        slopes = np.abs(np.diff(dp)) / np.diff(pos)
        H_emp = max(H_emp, float(np.max(slopes)))

    H = p.smoothness().deriv_lipschitz_H
    ok_v = math.isfinite(H) and H_emp <= H * (1 + 1e-6) + 1e-9
    return FamilyReport(bool(ok_i), bool(ok_ii), bool(ok_iii), bool(ok_iv), bool(ok_v), H_emp, H)


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------

_PARAM_NAMES = {PenaltyKind.SCAD: "a", PenaltyKind.MCP: "b", PenaltyKind.BRIDGE: "gamma"}


def penalty_from_config(cfg) -> SeparablePenalty:
    """Build a penalty from a dict or JSON text, e.g. ``{"kind": "scad", "a": 3.7}``."""
    if isinstance(cfg, (str, bytes)):
        cfg = json.loads(cfg)
    cfg = dict(cfg)
    try:
        kind = PenaltyKind(str(cfg.pop("kind")).lower())
    except (KeyError, ValueError) as exc:
        raise PenaltyDomainError(f"unknown or missing penalty kind: {exc}") from None
    if kind is PenaltyKind.WEIGHTED_L1:
        p = SeparablePenalty(kind, weights=cfg.pop("weights", None))
    elif kind in _PARAM_NAMES:
        name = _PARAM_NAMES[kind]
        default = {"a": 3.7, "b": 2.7}.get(name)
        value = cfg.pop(name, default)
        if value is None:
            raise PenaltyDomainError(f"{kind.value} requires '{name}'")
        p = SeparablePenalty(kind, float(value))
    else:
        p = SeparablePenalty(kind)
    if cfg:
        raise PenaltyDomainError(f"unexpected penalty fields: {sorted(cfg)}")
    return p


def penalty_to_config(p: SeparablePenalty) -> dict:
    out = {"kind": p.kind.value}
    if p.kind in _PARAM_NAMES:
        out[_PARAM_NAMES[p.kind]] = float(p.param)
    if p.weights is not None:
        out["weights"] = [float(x) for x in p.weights]
    return out
