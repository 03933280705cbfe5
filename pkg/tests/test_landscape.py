import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowrate.designs import (
    DesignMatrix,
    Provenance,
    build_theorem1_design,
    build_theorem2_design,
    make_instance,
    theorem_theta_star,
)
from slowrate.landscape import (
    BlockLoss,
    band_frequency,
    block_decompose_error,
    block_loss,
    block_quantities,
    catalog_instance,
    catalog_to_csv,
    compute_lemma1_bound,
    enumerate_block_minima,
    grid_candidates,
    grid_candidates_bruteforce,
    worst_local_min_error,
    worst_local_min_errors,
)
from slowrate.local_descent import QuadraticObjective
from slowrate.penalties import SeparablePenalty

SCAD = SeparablePenalty.scad()
L1 = SeparablePenalty.l1()


def t1_instance(seed, n=16, R=None):
    D = build_theorem1_design(n, n, 1.0, R if R is not None else 8 / math.sqrt(n))
    return make_instance(D, theorem_theta_star(D), 1.0, seed=seed)


# --- decomposition ----------------------------------------------------------

@pytest.mark.parametrize("n", [16, 17])
def test_block_errors_sum_to_prediction_error(n):
    inst = t1_instance(0, n=n, R=2.0)
    theta = np.random.default_rng(1).standard_normal(inst.d)
    parts = block_decompose_error(inst.design, theta, inst.theta_star)
    assert parts.size == inst.design.block_count
    assert parts.sum() == pytest.approx(inst.prediction_error(theta), rel=1e-12)


def test_decomposition_rejects_non_block_design():
    D = DesignMatrix(np.eye(4), Provenance.CUSTOM, 0.0, 0, {})
    with pytest.raises(ValueError):
        block_decompose_error(D, np.zeros(4), np.zeros(4))


# --- grid scan --------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0.0, 2.0),
       pen=st.sampled_from(["scad", "mcp", "l1", "bridge"]))
def test_fast_scan_matches_bruteforce(seed, lam, pen):
    p = {"scad": SCAD, "mcp": SeparablePenalty.mcp(), "l1": L1,
         "bridge": SeparablePenalty.bridge(0.5)}[pen]
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((2, 2))
    Q = M.T @ M + 0.05 * np.eye(2)
    loss = BlockLoss(Q, rng.standard_normal(2), 0.0, p, lam, R=0.25)
    a = grid_candidates(loss)
    b = grid_candidates_bruteforce(loss)
    assert np.array_equal(a, b)


def lasso_cd(Q, h, lam, iters=20000):
    # coordinate descent on u'Qu - 2h'u + lam ||u||_1
    u = np.zeros(2)
    for _ in range(iters):
        for k in range(2):
            r = h[k] - Q[k, 1 - k] * u[1 - k]
            u[k] = np.sign(r) * max(abs(r) - lam / 2, 0.0) / Q[k, k]
    return u


@pytest.mark.parametrize("seed,lam", [(0, 0.05), (1, 0.3), (2, 1.0), (3, 0.01)])
def test_convex_block_has_unique_minimum(seed, lam):
    inst = t1_instance(seed)
    for i in (0, 1):
        loss = block_loss(inst, i, L1, lam)
        mins = enumerate_block_minima(loss)
        assert len(mins) == 1
        assert mins[0].u == pytest.approx(lasso_cd(loss.Q, loss.h, lam), abs=1e-8)


def test_unpenalized_block_minimum_is_least_squares():
    loss = block_loss(t1_instance(4), 2, SCAD, 0.0)
    mins = enumerate_block_minima(loss)
    assert len(mins) == 1
    assert mins[0].u == pytest.approx(loss.least_squares, abs=1e-8)


def test_scad_block_has_several_minima():
    cat = catalog_instance(t1_instance(0), SCAD, 0.3)
    assert max(len(b) for b in cat.blocks) >= 2


@pytest.mark.parametrize("lam", [0.1, 0.3, 1.0])
def test_minima_survive_probe_perturbations(lam):
    inst = t1_instance(5)
    rng = np.random.default_rng(0)
    for i in range(inst.design.block_count):
        loss = block_loss(inst, i, SCAD, lam)
        for m in enumerate_block_minima(loss):
            for r in (1e-6, 1e-5, 1e-4):
                ang = rng.uniform(0, 2 * np.pi, 16)
                for t in ang:
                    probe = m.u + r * np.array([math.cos(t), math.sin(t)])
                    assert loss.value(probe) >= m.objective - 1e-12


def test_block_minima_assemble_into_full_stationary_point():
    inst = t1_instance(6)
    lam = 0.3
    cat = catalog_instance(inst, SCAD, lam)
    theta = cat.worst_point(inst.d)
    full = QuadraticObjective.from_instance(inst, SCAD, lam)
    blocks = sum(block_loss(inst, i, SCAD, lam).value(theta[2 * i: 2 * i + 2])
                 for i in range(inst.design.block_count))
    assert full.value(theta) == pytest.approx(blocks, abs=1e-12)
    # fixed point of the full proximal-gradient map
    X, y, n = inst.X, inst.y, inst.n
    s = 1.0 / full.lipschitz
    z = theta - s * (-2.0 / n) * X.T @ (y - X @ theta)
    assert np.linalg.norm(SCAD.prox(z, s, lam) - theta) <= 1e-8
    assert cat.worst_error() == pytest.approx(inst.prediction_error(theta), rel=1e-10)


def test_resolution_and_bounds_guards():
    loss = block_loss(t1_instance(0), 0, SCAD, 0.1)
    with pytest.raises(ValueError):
        enumerate_block_minima(loss, resolution=0.01)
    with pytest.raises(ValueError):
        enumerate_block_minima(loss, bounds=[[-1.0, 1.0], [-4.0, 4.0]])


def test_default_box_holds_every_local_minimum():
    # local minima satisfy u'Qu <= h'u for penalties nondecreasing in |t|
    inst = t1_instance(7)
    for lam in (0.05, 0.5, 5.0):
        for i in range(inst.design.block_count):
            loss = block_loss(inst, i, SCAD, lam)
            box = loss.default_bounds()
            for m in enumerate_block_minima(loss):
                assert m.u @ loss.Q @ m.u <= loss.h @ m.u + 1e-9
                assert np.all(m.u >= box[:, 0]) and np.all(m.u <= box[:, 1])


def test_catalog_is_deterministic_and_exports(tmp_path):
    inst = t1_instance(8)
    a = catalog_instance(inst, SCAD, 0.3)
    b = catalog_instance(inst, SCAD, 0.3)
    text = catalog_to_csv(a, tmp_path / "c.csv")
    assert text == catalog_to_csv(b)
    rows = text.strip().splitlines()
    assert rows[0] == "block,u1,u2,objective,contribution"
    assert len(rows) == 1 + sum(len(x) for x in a.blocks)
    assert (tmp_path / "c.csv").read_text() == text


# --- bound quantities -------------------------------------------------------

def test_block_quantities_l1():
    inst = t1_instance(0)
    B = 4 / math.sqrt(16)
    q1 = block_quantities(inst, L1, 0.5, "theorem1")
    assert q1.B == B and q1.gamma == pytest.approx(np.full(8, B))
    assert q1.lam_gamma == pytest.approx(np.full(8, 0.5 * B))
    q2 = block_quantities(inst, L1, 0.5, "theorem2")
    assert q2.gamma == pytest.approx(np.ones(8))
    # ties go to the first coordinate: a_i = (cos, sin)
    al = inst.design.alpha
    assert q1.a[0] == pytest.approx([math.cos(al), math.sin(al)])
    w = inst.w[:16].reshape(8, 2)
    assert q1.w_prime == pytest.approx(w @ q1.a[0] / 4)


def test_block_quantities_pick_smaller_weight():
    inst = t1_instance(0)
    p = SeparablePenalty.weighted_l1(np.tile([2.0, 1.0], 8))
    q = block_quantities(inst, p, 1.0, "theorem1")
    al = inst.design.alpha
    assert q.gamma == pytest.approx(np.full(8, q.B))
    assert q.a[3] == pytest.approx([-math.cos(al), math.sin(al)])


def test_bound_terms_by_hand():
    # R = 4 > 2B leaves a nonzero first term once lam is large
    inst = t1_instance(3, R=4.0)
    D = inst.design
    B = 1.0
    s2 = math.sin(D.alpha) ** 2
    w12 = np.linalg.norm(inst.w[:2]) / 4
    thresh = 4 * B * (s2 * 4.0 + w12)
    for lam in (0.5 * thresh / B, 1.5 * thresh / B):
        b = compute_lemma1_bound(inst, L1, lam)
        t1 = s2 * (4.0 - 2 * B) ** 2 if lam * B > thresh else 0.0
        wp = b.quantities.w_prime[1:]
        cnt = int(np.sum((wp >= B / 2) & (wp <= B)))
        assert b.T1 == pytest.approx(t1)
        assert b.band_count == cnt
        assert b.T2 == pytest.approx(cnt * (B * B / 4 - lam * B))


def test_bound_rejects_other_designs():
    D = build_theorem2_design(16, 16, 1.0, 1.0)
    inst = make_instance(D, theorem_theta_star(D), 1.0, seed=0)
    with pytest.raises(ValueError):
        compute_lemma1_bound(inst, SCAD, 0.1)


@pytest.mark.parametrize("pen", [SCAD, L1])
def test_worst_local_minimum_dominates_bound(pen):
    grid = np.logspace(-3, 2, 12)
    for seed in range(3):
        inst = t1_instance(seed)
        vals = worst_local_min_errors(inst, pen, grid)
        bounds = [compute_lemma1_bound(inst, pen, lam).total for lam in grid]
        assert np.all(vals >= np.array(bounds) - 1e-6)
        assert worst_local_min_error(inst, pen, grid) == pytest.approx(vals.min())


def test_band_frequency_matches_normal_probability():
    D = build_theorem1_design(16, 16, 1.0, 2.0)
    out = band_frequency(D, SCAD, 0.3, 20_000, seed=3)
    assert out["samples"] == 20_000 * 7
    assert abs(out["frequency"] - out["probability"]) <= 3 * out["std_error"]
    with pytest.raises(ValueError):
        band_frequency(D, SCAD, 0.3, 0)
    with pytest.raises(ValueError):
        band_frequency(build_theorem2_design(16, 16, 1.0, 1.0), SCAD, 0.3, 10)
