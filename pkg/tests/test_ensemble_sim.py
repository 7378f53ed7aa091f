import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from direality import ParallelObservables
from direality.ensemble_sim import (
    ExperimentConfig,
    bootstrap,
    build_operational_plane,
    cell_probabilities,
    certified_violations,
    corollary1_settings,
    ell_hat_with_se,
    exact_quad,
    noisy_povm_scan,
    plane_tilt_scan,
    plane_tilt_scan_offset,
    quad_from_counts,
    run_lhv_experiment,
    run_oc_experiment,
    run_steering_experiment,
    sample_preparation,
    sharded_multinomial,
    theorem3_preparations,
    tilted_plane_ellipse,
)
from direality.inequalities import C_GRID, ell_c, ell_max
from direality.qubit_core import QubitObservable, product, random_mixed_state, singlet, unit

X, Y, Z = np.eye(3)
R2 = math.sqrt(2)


def singlet_cfg(n=1_000_000, seed=0):
    m, mp = corollary1_settings(X, Y)
    return ExperimentConfig(singlet(), QubitObservable(X), QubitObservable(Y), m, mp, n, seed)


def test_corollary1_targets():
    m, mp = corollary1_settings(X, Y)
    assert np.allclose(m, -unit(X + Y)) and np.allclose(mp, -unit(X - Y))


def test_cell_probabilities_normalized():
    p = cell_probabilities(singlet_cfg())
    assert p.shape == (2, 2, 2, 2) and p.sum() == pytest.approx(1)


def test_singlet_experiment():
    res = run_steering_experiment(singlet_cfg())
    ell, se = ell_hat_with_se(res.quad, [0.0])
    assert abs(ell[0] - (R2 - 1)) < 3 * se[0]
    assert se[0] < 3.5e-3


def test_product_state_never_certified():
    a, b = np.array([0.3, 0.2, 0.1]), np.array([0.1, -0.4, 0.2])
    cfg = ExperimentConfig(product(a, b), QubitObservable(X), QubitObservable(Y), unit([1, 1, 0]), unit([0, 1, 1]), 1_000_000, 3)
    res = run_steering_experiment(cfg)
    assert certified_violations(res.quad, C_GRID).size == 0


def test_single_system():
    res = run_steering_experiment(singlet_cfg(n=1))
    ell, se = ell_hat_with_se(res.quad, C_GRID)
    assert np.all(np.isnan(ell))
    assert certified_violations(res.quad).size == 0
    assert res.counts.sum() == 1


def test_seeded_determinism_and_sharding():
    cfg = singlet_cfg(n=300_000, seed=5)
    a = run_steering_experiment(cfg, shard_size=1 << 16, workers=1).counts
    b = run_steering_experiment(cfg, shard_size=1 << 16, workers=4).counts
    c = run_steering_experiment(cfg, shard_size=1 << 16, workers=1).counts
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_sharded_multinomial_total():
    probs = np.full((2, 2), 0.25)
    out = sharded_multinomial(10_000_001, probs, 0, shard_size=1 << 20)
    assert out.sum() == 10_000_001 and out.shape == (2, 2)


def test_empirical_no_signalling():
    for seed in range(20):
        cfg = ExperimentConfig(
            random_mixed_state(seed), QubitObservable(X), QubitObservable(Y), unit([1, 2, 0]), unit([0, 1, -1]), 200_000, seed
        )
        q = run_steering_experiment(cfg).quad
        ep, em, fp, fm = q.members()
        mix = q.w_plus * ep.mean_a + q.w_minus * em.mean_a
        mix_p = q.w_prime_plus * fp.mean_a + q.w_prime_minus * fm.mean_a
        pooled = math.sqrt(sum(e.se_a() ** 2 for e in q.members()))
        assert abs(mix - mix_p) <= 3 * pooled


def test_coverage_calibration():
    cfg0 = singlet_cfg(n=20_000)
    truth = exact_quad(cfg0)
    inside = total = 0
    for seed in range(500):
        q = run_steering_experiment(ExperimentConfig(cfg0.state, cfg0.obs_a, cfg0.obs_b, cfg0.dir_m, cfg0.dir_mp, 20_000, seed)).quad
        for e, t in zip(q.members(), truth.members()):
            for got, want, se in ((e.mean_a, t.mean_a, e.se_a()), (e.mean_b, t.mean_b, e.se_b())):
                total += 1
                inside += abs(got - want) <= 3 * se
    assert inside / total >= 0.99


def test_lhv_source_never_certified():
    rng = np.random.default_rng(0)
    for seed in range(40):
        res = run_lhv_experiment(rng.dirichlet(np.ones(16)), 100_000, seed)
        assert certified_violations(res.quad, C_GRID).size == 0


def test_bootstrap_interval_contains_estimate():
    res = run_steering_experiment(singlet_cfg(n=200_000))
    lo, hi = bootstrap(res.counts, lambda d: ell_hat_with_se(quad_from_counts(d), [0.0])[0], 200, 1)
    ell, _ = res.ell([0.0])
    assert lo[0] <= ell[0] + 1e-3 and ell[0] - 1e-2 <= hi[0]
    assert hi[0] - lo[0] < 0.05


def test_record_json_lines():
    import json

    res = run_steering_experiment(singlet_cfg(n=50_000))
    rec = res.to_record([0.0, 0.1], n_boot=50, seed=1)
    text = json.dumps(rec)
    assert {"config", "quad", "table", "ell_by_c", "determinants", "ell_se", "ell_ci"} <= set(json.loads(text))


# --- operational plane and preparations ----------------------------------------


def test_operational_plane_equatorial():
    plane = build_operational_plane(X, Y)
    assert np.allclose(np.abs(plane.normal), Z)
    assert plane.contains(unit(X + Y))
    r1, r2 = plane.member(0.3, -0.2), plane.member(-0.1, 0.6)
    assert plane.contains(0.4 * r1 + 0.6 * r2)
    with pytest.raises(ParallelObservables):
        build_operational_plane(X, X)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-1, 1), st.floats(-1, 1))
def test_chart(adotb, u, v):
    a = X
    b = np.array([adotb, math.sqrt(1 - adotb**2), 0])
    plane = build_operational_plane(a, b)
    r = plane.member(u, v)
    assert plane.chart(u, v) == pytest.approx((a @ r, b @ r))


def test_theorem3_examples():
    p = theorem3_preparations(X, Y)
    assert np.allclose(p.vectors[0], unit([1, 1, 0])) and np.allclose(p.vectors[2], unit([1, -1, 0]))
    assert p.predicted_ell == pytest.approx(R2 - 1)
    b = np.array([0.5, math.sqrt(0.75), 0])
    assert theorem3_preparations(X, b).predicted_ell == pytest.approx(math.sqrt(3) - 1.5)
    with pytest.raises(ParallelObservables):
        theorem3_preparations(X, X)


def test_sample_preparation_examples():
    e = sample_preparation(X, QubitObservable(X), QubitObservable(Y), 10_000, 0)
    assert e.mean_a == 1.0
    e = sample_preparation(np.zeros(3), QubitObservable(X), QubitObservable(Y), 1_000_000, 1)
    assert abs(e.mean_a) < 3 * e.se_a() and abs(e.mean_b) < 3 * e.se_b()
    e = sample_preparation(unit([1, 1, 0]), QubitObservable(X), QubitObservable(Y), 1_000_000, 2)
    assert e.mean_a == pytest.approx(1 / R2, abs=0.003) and e.mean_b == pytest.approx(1 / R2, abs=0.003)


@pytest.mark.parametrize("adotb", [0.0, 0.3, 0.7])
def test_oc_reproduces_ell_max(adotb):
    b = np.array([adotb, math.sqrt(1 - adotb**2), 0])
    out = run_oc_experiment(X, b, 1_000_000, 3)
    assert abs(out["ell"] - ell_max(adotb)) < 3 * out["se"]
    assert out["predicted_ell"] == pytest.approx(ell_max(adotb), abs=1e-12)


# --- robustness scans -----------------------------------------------------------


def test_noisy_povm_examples():
    ok, val = noisy_povm_scan(1.0)
    assert ok and val == pytest.approx(R2 - 1)
    ok, val = noisy_povm_scan(1 / R2)
    assert not ok and val == pytest.approx(0, abs=1e-12)
    ok, val = noisy_povm_scan(0.9)
    assert ok and val == pytest.approx(0.9 * R2 - 1, abs=1e-12)


def test_noisy_povm_oc_demo():
    out = run_oc_experiment(X, Y, 1_000_000, 0, eps=0.6)
    assert out["ell"] < 0
    out = run_oc_experiment(X, Y, 1_000_000, 0, eps=0.9)
    assert abs(out["ell"] - (0.9 * R2 - 1)) < 3 * out["se"]


def test_plane_tilt_examples():
    assert plane_tilt_scan(0.0, 0.0, 0.0)
    assert not plane_tilt_scan(1 / R2, 0.0, 0.0)
    assert not plane_tilt_scan(0.0, math.radians(60), 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 0.99), st.floats(0, 1.5))
def test_plane_tilt_condition(d, chi):
    margin = math.sqrt(1 - d * d) * math.cos(chi) - 1 / R2
    if abs(margin) > 1e-9:
        assert plane_tilt_scan(d, chi) == (margin > 0)


def test_tilted_ellipse_axes():
    e = tilted_plane_ellipse(0.3, 0.5)
    major, minor = e.semi_axes()
    assert major == pytest.approx(math.sqrt(1 - 0.09))
    assert minor == pytest.approx(math.sqrt(1 - 0.09) * math.cos(0.5))


def test_offset_variant_is_stricter():
    for d in np.linspace(0, 0.9, 10):
        for chi in np.linspace(0, 1.4, 10):
            if plane_tilt_scan_offset(d, chi):
                assert plane_tilt_scan(d, chi)
