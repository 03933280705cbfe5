"""Design matrices and regression instances.

The block constructions share one template: a 2x2 matrix

    A = [[cos a, -cos a],
         [sin a,  sin a]]

repeated ``n/2`` times along the diagonal, scaled by ``sqrt(n)`` and padded
with zero columns up to width ``d``.  Only the angle differs between the
constructions.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Provenance",
    "NoiseModel",
    "DesignMatrix",
    "RegressionInstance",
    "DesignCertificate",
    "block_matrix",
    "build_theorem1_design",
    "build_theorem2_design",
    "build_simulation_design",
    "build_corollary_design",
    "build_dalalyan_design",
    "make_instance",
    "simulation_theta_star",
    "theorem_theta_star",
    "dalalyan_theta_star",
    "certify",
    "save_design",
    "load_design",
    "save_instance",
    "load_instance",
]


class Provenance(enum.Enum):
    THEOREM1 = "theorem1"
    THEOREM2 = "theorem2"
    SIMULATION = "simulation"
    COROLLARY1 = "corollary"
    DALALYAN = "dalalyan"
    CUSTOM = "custom"


BLOCK_PROVENANCES = (Provenance.THEOREM1, Provenance.THEOREM2, Provenance.SIMULATION)


class NoiseModel(enum.Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """A dense design with the construction that produced it.

    ``params`` holds whichever of ``n, d, sigma, R, gamma, k, m, B`` apply, and
    for block designs ``n_core`` (rows carrying blocks) and ``scale``.
    """

    entries: np.ndarray
    provenance: Provenance
    alpha: float | None = None
    block_count: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    @property
    def is_block(self) -> bool:
        return self.provenance in BLOCK_PROVENANCES

    def block(self, i: int) -> np.ndarray:
        """The ``i``-th 2x2 diagonal block (0-based) of a block design."""
        if not self.is_block:
            raise ValueError(f"{self.provenance.value} design has no 2x2 block structure")
        s = slice(2 * i, 2 * i + 2)
        return self.entries[s, s]

    def unit_block(self) -> np.ndarray:
        """The unscaled matrix A."""
        a = self.alpha
        return np.array([[math.cos(a), -math.cos(a)], [math.sin(a), math.sin(a)]])


@dataclass(frozen=True, eq=False)
class RegressionInstance:
    design: DesignMatrix
    theta_star: np.ndarray
    w: np.ndarray
    y: np.ndarray
    sigma: float
    k: int
    R: float
    seed: int | None
    noise: NoiseModel = NoiseModel.GAUSSIAN

    def __post_init__(self):
        for name in ("theta_star", "w", "y"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def X(self) -> np.ndarray:
        return self.design.entries

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def d(self) -> int:
        return self.design.d

    def prediction_error(self, theta) -> float:
        r = self.X @ (np.asarray(theta, dtype=float) - self.theta_star)
        return float(r @ r) / self.n


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def block_matrix(alpha: float, n: int, d: int, odd: str = "pad") -> tuple[np.ndarray, int]:
    """``[blkdiag(sqrt(n_core) A, ...) | 0]`` with ``n`` rows and ``d`` columns.

    Returns the matrix and ``n_core``, the number of rows carrying blocks.  For
    odd ``n`` with ``odd="pad"`` the core has ``n - 1`` rows and a zero row is
    appended; ``odd="reject"`` raises instead.
    """
    n = int(n)
    d = int(d)
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    if d < n:
        raise ValueError(f"d must be at least n, got d={d} < n={n}")
    if n % 2:
        if odd == "reject":
            raise ValueError(f"n must be even, got {n}")
        if odd != "pad":
            raise ValueError(f"odd must be 'pad' or 'reject', got {odd!r}")
    core = n - (n % 2)
    A = math.sqrt(core) * np.array([[math.cos(alpha), -math.cos(alpha)],
                                    [math.sin(alpha), math.sin(alpha)]])
    X = np.zeros((n, d))
    for i in range(core // 2):
        X[2 * i:2 * i + 2, 2 * i:2 * i + 2] = A
    return X, core


def _asin_checked(x: float, what: str) -> float:
    if not 0 <= x <= 1:
        raise ValueError(f"{what}: sin(alpha) = {x} lies outside [0, 1]")
    return math.asin(x)


def build_theorem1_design(n: int, d: int, sigma: float, R: float, odd: str = "pad") -> DesignMatrix:
    """Adversarial block design for the local-minimum lower bound.

    ``alpha = arcsin(sqrt(sigma) / (n^(1/4) sqrt(32 R)))`` with ``R >= 8 sigma / sqrt(n)``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    core = n - (n % 2)
    if R < 8 * sigma / math.sqrt(core) * (1 - 1e-12):
        raise ValueError(f"R = {R} is below 8 sigma / sqrt(n) = {8 * sigma / math.sqrt(core)}")
    alpha = _asin_checked(math.sqrt(sigma) / (core ** 0.25 * math.sqrt(32 * R)), "theorem1")
    X, core = block_matrix(alpha, n, d, odd)
    params = dict(n=n, d=d, sigma=sigma, R=R, B=4 * sigma / math.sqrt(core),
                  n_core=core, scale=math.sqrt(core))
    return DesignMatrix(X, Provenance.THEOREM1, alpha, core // 2, params)


def build_theorem2_design(n: int, d: int, sigma: float, R: float, odd: str = "pad") -> DesignMatrix:
    """Block design for the local-descent lower bound.

    ``r = min(R, sigma)`` and ``alpha = arcsin(sqrt(sigma) / (n^(1/4) sqrt(r)))``.
    The step-size constant ``B = sigma / (4 sqrt(n))`` is stored in ``params``.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    core = n - (n % 2)
    if R < sigma / math.sqrt(core) * (1 - 1e-12):
        raise ValueError(f"R = {R} is below sigma / sqrt(n) = {sigma / math.sqrt(core)}")
    r = min(R, sigma)
    alpha = _asin_checked(math.sqrt(sigma) / (core ** 0.25 * math.sqrt(r)), "theorem2")
    X, core = block_matrix(alpha, n, d, odd)
    params = dict(n=n, d=d, sigma=sigma, R=R, r_tilde=r, B=sigma / (4 * math.sqrt(core)),
                  n_core=core, scale=math.sqrt(core))
    return DesignMatrix(X, Provenance.THEOREM2, alpha, core // 2, params)


def build_simulation_design(n: int, odd: str = "pad") -> DesignMatrix:
    """Square block design with ``alpha = arcsin(n^(-1/4))``."""
    core = n - (n % 2)
    alpha = _asin_checked(core ** -0.25, "simulation")
    X, core = block_matrix(alpha, n, n, odd)
    params = dict(n=n, d=n, n_core=core, scale=math.sqrt(core))
    return DesignMatrix(X, Provenance.SIMULATION, alpha, core // 2, params)


def build_corollary_design(n: int, k: int, sigma: float, R: float, gamma: float) -> DesignMatrix:
    """Square design satisfying the gamma-RE condition built from ``k`` scaled copies.

    ``m`` is the largest even integer with ``k m <= n``, the inner radius is
    ``R' = min(R sqrt(n) / (k sqrt(m)), sigma / (16 gamma sqrt(m)))`` and
    ``X = blkdiag(sqrt(n/m) X_m, ..., sqrt(n/m) X_m, sqrt(n) I_{n - k m})``.
    """
    n, k = int(n), int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < 4 * k:
        raise ValueError(f"need n >= 4k, got n={n}, k={k}")
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if sigma <= 0 or R <= 0:
        raise ValueError("sigma and R must be positive")
    m = 2 * (n // (2 * k))
    R_inner = min(R * math.sqrt(n) / (k * math.sqrt(m)), sigma / (16 * gamma * math.sqrt(m)))
    alpha = _asin_checked(math.sqrt(sigma) / (m ** 0.25 * math.sqrt(32 * R_inner)), "corollary")
    Xm, _ = block_matrix(alpha, m, m)
    X = np.zeros((n, n))
    c = math.sqrt(n / m)
    for b in range(k):
        s = slice(b * m, (b + 1) * m)
        X[s, s] = c * Xm
    rest = n - k * m
    if rest:
        X[k * m:, k * m:] = math.sqrt(n) * np.eye(rest)
    params = dict(n=n, d=n, sigma=sigma, R=R, gamma=gamma, k=k, m=m, R_inner=R_inner)
    return DesignMatrix(X, Provenance.COROLLARY1, alpha, k * m // 2, params)


def build_dalalyan_design(n: int) -> DesignMatrix:
    """``sqrt(n) [[1^T, 1^T], [I, -I]]`` with ``m = n - 1``; shape ``n x 2m``."""
    n = int(n)
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    m = n - 1
    X = np.zeros((n, 2 * m))
    X[0, :] = 1.0
    X[1:, :m] = np.eye(m)
    X[1:, m:] = -np.eye(m)
    X *= math.sqrt(n)
    return DesignMatrix(X, Provenance.DALALYAN, None, 0, dict(n=n, d=2 * m, m=m, sigma=1.0))


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

def simulation_theta_star(d: int, value: float = 0.5) -> np.ndarray:
    t = np.zeros(d)
    t[:2] = value
    return t


def theorem_theta_star(design: DesignMatrix) -> np.ndarray:
    """``(r/2, r/2, 0, ..., 0)`` for the block lower-bound constructions.

    ``r = R`` for Theorem-1 builds and ``r = min(R, sigma)`` for Theorem-2 builds.
    """
    r = design.params.get("r_tilde", design.params["R"])
    return simulation_theta_star(design.d, r / 2)


def dalalyan_theta_star(design: DesignMatrix, positions=None, value: float = 0.5) -> np.ndarray:
    """Two-sparse vector with mass on coordinates ``m-1, m`` (1-based) by default."""
    m = design.params["m"]
    t = np.zeros(design.d)
    if positions is None:
        positions = (m - 2, m - 1)
    t[list(positions)] = value
    return t


def make_instance(design: DesignMatrix, theta_star, sigma: float,
                  noise: NoiseModel | str = NoiseModel.GAUSSIAN, seed: int | None = None
                  ) -> RegressionInstance:
    """Draw ``w`` and form ``y = X theta* + w``; deterministic under ``seed``."""
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (design.d,):
        raise ValueError(f"theta_star has shape {theta_star.shape}, expected ({design.d},)")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    noise = NoiseModel(noise)
    rng = np.random.default_rng(seed)
    if noise is NoiseModel.GAUSSIAN:
        w = sigma * rng.standard_normal(design.n)
    else:
        w = sigma * rng.choice(np.array([-1.0, 1.0]), size=design.n)
    y = design.entries @ theta_star + w
    k = int(np.count_nonzero(theta_star))
    R = float(np.abs(theta_star).sum())
    return RegressionInstance(design, theta_star, w, y, float(sigma), k, R, seed, noise)


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignCertificate:
    max_col_norm_ratio: float
    col_norm_ratios: np.ndarray
    min_singular_value: float
    re_lower_bound: float

    def as_dict(self) -> dict:
        return dict(max_col_norm_ratio=self.max_col_norm_ratio,
                    min_singular_value=self.min_singular_value,
                    re_lower_bound=self.re_lower_bound)


def certify(design: DesignMatrix | np.ndarray) -> DesignCertificate:
    """Column normalization ratios, smallest singular value and a global RE bound.

    The smallest singular value is taken over ``min(n, d)`` values and reported
    as 0 when ``d > n``, since such a design has a null space.  The RE bound is
    ``sigma_min^2 / n``, the smallest eigenvalue of ``X^T X / n``; the cone
    restricted constant can only be larger.
    """
    X = design.entries if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    n, d = X.shape
    ratios = np.linalg.norm(X, axis=0) / math.sqrt(n)
    sv = np.linalg.svd(X, compute_uv=False)
    smin = float(sv.min()) if d <= n else 0.0
    return DesignCertificate(float(ratios.max()), ratios, smin, smin * smin / n)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    return v


def _write_matrix(path: Path, M: np.ndarray):
    with open(path, "w") as fh:
        for row in M:
            fh.write(",".join(f"{x:.17g}" for x in row))
            fh.write("\n")


def _read_matrix(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def _header_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json") if path.suffix != ".json" else path


def design_header(design: DesignMatrix, seed=None) -> dict:
    return dict(provenance=design.provenance.value, alpha=design.alpha,
                block_count=design.block_count,
                params={k: _jsonable(v) for k, v in design.params.items()},
                shape=list(design.entries.shape), seed=seed)


def save_design(design: DesignMatrix, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV, 17 significant digits) and ``path + '.json'`` (header)."""
    path = Path(path)
    try:
        _write_matrix(path, design.entries)
        hdr = _header_path(path)
        hdr.write_text(json.dumps(design_header(design), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write design to {path}: {exc}") from exc
    return path, hdr


def load_design(path) -> DesignMatrix:
    path = Path(path)
    hdr = json.loads(_header_path(path).read_text())
    X = _read_matrix(path).reshape(hdr["shape"])
    return DesignMatrix(X, Provenance(hdr["provenance"]), hdr["alpha"], hdr["block_count"],
                        hdr["params"])


def save_instance(inst: RegressionInstance, path) -> tuple[Path, Path]:
    """Design matrix CSV plus a JSON header holding theta*, w, y and scalars."""
    path = Path(path)
    try:
        _write_matrix(path, inst.X)
        hdr = design_header(inst.design, inst.seed)
        hdr.update(theta_star=_jsonable(inst.theta_star), w=_jsonable(inst.w),
                   y=_jsonable(inst.y), sigma=inst.sigma, k=inst.k, R=inst.R,
                   noise=inst.noise.value)
        hp = _header_path(path)
        hp.write_text(json.dumps(hdr, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write instance to {path}: {exc}") from exc
    return path, hp


def load_instance(path) -> RegressionInstance:
    path = Path(path)
    hdr = json.loads(_header_path(path).read_text())
    X = _read_matrix(path).reshape(hdr["shape"])
    design = DesignMatrix(X, Provenance(hdr["provenance"]), hdr["alpha"], hdr["block_count"],
                          hdr["params"])
    return RegressionInstance(design, np.array(hdr["theta_star"]), np.array(hdr["w"]),
                              np.array(hdr["y"]), hdr["sigma"], hdr["k"], hdr["R"], hdr["seed"],
                              NoiseModel(hdr["noise"]))
