import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats

from slowrate.designs import (
    DesignMatrix,
    Provenance,
    RegressionInstance,
    build_theorem2_design,
    make_instance,
    theorem_theta_star,
)
from slowrate.local_descent import (
    DescentConfig,
    QuadraticObjective,
    ball_argmin,
    descend,
    estimate_event_probabilities,
    trajectory_to_csv,
)
from slowrate.penalties import SeparablePenalty

SCAD = SeparablePenalty.scad()


def theorem2_instance(n, d=None, seed=0, sigma=1.0, R=1.0):
    D = build_theorem2_design(n, d or n, sigma, R)
    return make_instance(D, theorem_theta_star(D), sigma, seed=seed)


# --- ball oracle ------------------------------------------------------------

def test_quadratic_projects_onto_sphere():
    z = np.array([3.0, 4.0, 0.0])
    c = np.array([0.0, 0.0, 1.0])
    r = ball_argmin(QuadraticObjective.squared_distance(z), c, 1.0, seed=0)
    expect = c + (z - c) / np.linalg.norm(z - c)
    assert r.theta == pytest.approx(expect, abs=1e-12)
    assert not r.interior


def test_center_minimum_stays_put():
    loss = QuadraticObjective.squared_distance(np.zeros(4), SeparablePenalty.l1(), 0.5)
    r = ball_argmin(loss, np.zeros(4), 1e-3, seed=1)
    assert np.array_equal(r.theta, np.zeros(4))
    assert r.interior and r.distance == 0.0


def test_interior_minimizer_found():
    z = np.array([0.3, -0.2])
    r = ball_argmin(QuadraticObjective.squared_distance(z), np.zeros(2), 1.0, seed=2)
    assert r.theta == pytest.approx(z, abs=1e-10)
    assert r.interior


def test_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        ball_argmin(QuadraticObjective.squared_distance(np.ones(2)), np.zeros(2), 0.0)


def test_decoupled_coordinates_pulled_back():
    # the third coordinate has no data: any move away from the center only adds penalty
    G = sp.csr_matrix(np.diag([1.0, 1.0, 0.0]))
    loss = QuadraticObjective(G, np.array([1.0, 0.0, 0.0]), 1.0, SeparablePenalty.l1(), 0.1)
    c = np.array([0.0, 0.0, 0.4])
    r = ball_argmin(loss, c, 0.05, seed=3)
    assert abs(r.theta[2]) <= 0.4
    assert np.linalg.norm(r.theta - c) <= 0.05


def block_objective(lam, seed):
    inst = theorem2_instance(16, seed=seed)
    Xb = inst.X[:2, :2]
    yb = inst.y[:2]
    n = inst.n
    G = Xb.T @ Xb / n
    loss = QuadraticObjective(sp.csr_matrix(G), Xb.T @ yb / n, float(yb @ yb) / n, SCAD, lam)

    def f(u):
        u = np.atleast_2d(u)
        r = yb - u @ Xb.T
        pen = SCAD.values(u.ravel(), lam).reshape(u.shape).sum(axis=1)
        return np.sum(r * r, axis=1) / n + pen

    return loss, f


def grid_oracle(f, c, eta):
    t = np.arange(-eta, eta + 1e-12, 1e-3)
    U, V = np.meshgrid(c[0] + t, c[1] + t, indexing="ij")
    mask = (U - c[0]) ** 2 + (V - c[1]) ** 2 <= eta ** 2
    pts = np.column_stack([U[mask], V[mask]])
    vals = f(pts)
    best = vals.min()
    cons = {"type": "ineq", "fun": lambda u: eta ** 2 - np.sum((u - c) ** 2)}
    res = optimize.minimize(lambda u: f(u)[0], pts[np.argmin(vals)], constraints=[cons],
                            method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    if np.sum((res.x - c) ** 2) <= eta ** 2 * (1 + 1e-9):
        best = min(best, float(res.fun))
    return best


@pytest.mark.parametrize("lam,seed,center", [
    (0.05, 0, (0.1, -0.2)),
    (0.3, 1, (0.0, 0.0)),
    (0.8, 2, (0.4, 0.3)),
    (0.2, 3, (-0.3, 0.05)),
])
def test_block_objective_matches_grid_oracle(lam, seed, center):
    loss, f = block_objective(lam, seed)
    c = np.array(center)
    eta = 0.15
    r = ball_argmin(loss, c, eta, seed=seed)
    oracle = grid_oracle(f, c, eta)
    assert r.value == pytest.approx(f(r.theta)[0], abs=1e-12)
    assert r.value <= oracle + 1e-4
    assert r.value >= oracle - 1e-4


# --- descent ----------------------------------------------------------------

def test_noiseless_convex_descent_reaches_least_squares():
    rng = np.random.default_rng(0)
    n = 8
    X = math.sqrt(n) * (np.eye(n) + 0.2 * rng.standard_normal((n, n)))
    D = DesignMatrix(X, Provenance.CUSTOM, 0.0, 0, {})
    theta_star = rng.standard_normal(n)
    inst = RegressionInstance(D, theta_star, np.zeros(n), X @ theta_star, 0.0, n, 1.0, None)
    cfg = DescentConfig(eta=0.3, lam=0.0, seed=4)
    tr = descend(inst, SeparablePenalty.l1(), cfg)
    assert tr.terminated
    assert inst.prediction_error(tr.final) <= 1e-18
    assert tr.final == pytest.approx(theta_star, abs=1e-9)


def test_event_E0_keeps_first_block_below_B():
    n = 16
    for seed in range(40):
        inst = theorem2_instance(n, seed=seed)
        D = inst.design
        B = D.params["B"]
        w12 = np.linalg.norm(inst.w[:2]) / math.sqrt(n)
        s2 = math.sin(D.alpha) ** 2
        # lam * gamma_1 (gamma_1 = 1 for the L1 penalty) above the threshold of E1
        lam = 1.1 * (2 * s2 * D.params["r_tilde"] + 2 * w12 + 3 * B)
        cfg = DescentConfig.for_design(D, SeparablePenalty.l1(), lam, seed=seed)
        init = np.random.default_rng(seed).standard_normal(n)
        if max(init[0], init[1]) > 0:
            continue
        tr = descend(inst, SeparablePenalty.l1(), cfg)
        assert tr.iterates[0, :2] == pytest.approx(init[:2])
        assert tr.terminated
        assert np.all(tr.iterates[:, :2] <= B + 1e-12)
        err = inst.X[:2] @ (tr.final - inst.theta_star)
        assert err @ err / n >= s2 * (D.params["r_tilde"] - 2 * B) ** 2 - 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.sampled_from([0.0, 0.05, 0.3, 1.0]),
       extra=st.integers(0, 4), pen=st.sampled_from(["scad", "mcp", "l1"]))
def test_descent_invariants(seed, lam, extra, pen):
    p = {"scad": SCAD, "mcp": SeparablePenalty.mcp(), "l1": SeparablePenalty.l1()}[pen]
    inst = theorem2_instance(16, 16 + extra, seed=seed)
    cfg = DescentConfig.for_design(inst.design, p, lam, seed=seed, n_starts=2)
    tr = descend(inst, p, cfg)
    assert tr.terminated and tr.steps < cfg.max_steps
    steps = np.linalg.norm(np.diff(tr.iterates, axis=0), axis=1)
    assert np.all(steps <= cfg.eta)
    # strict decrease until the last step
    assert np.all(np.diff(tr.objectives)[:-1] < 0)
    assert tr.objectives[-1] <= tr.objectives[-2] + 1e-15
    loss = QuadraticObjective.from_instance(inst, p, lam)
    for t in (0, len(tr.iterates) // 2, len(tr.iterates) - 1):
        assert tr.objectives[t] == pytest.approx(loss.value(tr.iterates[t]), abs=1e-12)
    if extra:
        tail = np.abs(tr.iterates[:, 16:])
        assert np.all(np.diff(tail, axis=0) <= 0)


def test_descent_is_seed_deterministic():
    inst = theorem2_instance(16, seed=5)
    cfg = DescentConfig.for_design(inst.design, SCAD, 0.1, seed=9)
    a = descend(inst, SCAD, cfg)
    b = descend(inst, SCAD, cfg)
    assert np.array_equal(a.iterates, b.iterates)


def test_step_cap_enforced():
    D = build_theorem2_design(16, 16, 1.0, 1.0)
    B = D.params["B"]
    assert DescentConfig.for_design(D, SCAD, 0.2).eta == pytest.approx(B)
    # ridge: H = 2, so lam = 1 halves the admissible radius
    assert DescentConfig.for_design(D, SeparablePenalty.ridge(), 1.0).eta == pytest.approx(B / 2)
    with pytest.raises(ValueError):
        DescentConfig(eta=1.01 * B, lam=0.1, B=B, H=0.0)
    with pytest.raises(ValueError):
        DescentConfig(eta=0.9 * B, lam=1.0, B=B, H=2.0)
    with pytest.raises(ValueError):
        DescentConfig(eta=0.0, lam=0.1)


def test_max_steps_diagnostic():
    inst = theorem2_instance(16, seed=1)
    cfg = DescentConfig.for_design(inst.design, SCAD, 0.1, seed=1, max_steps=3)
    tr = descend(inst, SCAD, cfg)
    assert not tr.terminated and tr.steps == 3 and len(tr.iterates) == 4


def test_trajectory_csv(tmp_path):
    inst = theorem2_instance(16, seed=2)
    cfg = DescentConfig.for_design(inst.design, SCAD, 0.1, seed=2)
    tr = descend(inst, SCAD, cfg)
    text = trajectory_to_csv(tr, tmp_path / "t.csv")
    rows = text.strip().splitlines()
    assert rows[0] == "step,objective,step_length,min_distance_to_boundary"
    assert len(rows) == len(tr.step_lengths) + 1
    last = rows[-1].split(",")
    assert float(last[3]) > 1e-12  # interior stop
    assert (tmp_path / "t.csv").read_text() == text


# --- event frequencies ------------------------------------------------------

def s2_probability(shift):
    # P[a'w - ||w_{1:2}|| >= shift] with a'w ~ N(0,1), ||w_{1:2}|| ~ Rayleigh(1)
    val, _ = integrate.quad(lambda r: stats.norm.sf(shift + r) * r * math.exp(-r * r / 2),
                            0, np.inf)
    return val


def test_event_probabilities_against_closed_forms():
    cfg = DescentConfig(eta=0.01, lam=0.0, seed=11)
    trials = 40000
    out = estimate_event_probabilities(cfg, trials, n=16)
    assert abs(out["p_E0"] - 0.25) <= 3 * math.sqrt(3 / 16 / trials)
    pooled = lambda v: (float(np.mean(v)), math.sqrt(float(np.mean(v)) * (1 - np.mean(v)) / (trials * v.size)))
    # defining inequality reduces to a'w - ||w_{1:2}|| >= 15/8 (sigma = 1)
    for key, shift in (("p_S2", 15 / 8), ("p_S2_display", 7 / 8)):
        p, se = pooled(out[key])
        assert abs(p - s2_probability(shift)) <= 4 * se + 1e-4
    p, se = pooled(out["p_sufficient"])
    expect = stats.norm.sf(1.0) * stats.chi2.cdf(1 / 64, 2)
    assert abs(p - expect) <= 4 * se + 1e-5


def test_sufficient_event_constant_in_n():
    cfg = DescentConfig(eta=0.01, lam=0.0, seed=12)
    a = estimate_event_probabilities(cfg, 20000, n=16)["p_sufficient"].mean()
    b = estimate_event_probabilities(cfg, 20000, n=64)["p_sufficient"].mean()
    assert a > 0 and b > 0
    assert abs(a - b) <= 0.002


def test_event_probabilities_rejects_zero_trials():
    with pytest.raises(ValueError):
        estimate_event_probabilities(DescentConfig(eta=0.1, lam=0.0), 0)
