import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from direality import AgreementViolated, InfeasibleInput, LocalityBookkeepingViolated, NonProbabilisticResponse
from direality.inequalities import CorrelationTable, chsh_all_eight, lemma1_check
from direality.lhv_oracle import (
    STRATEGIES,
    DeterministicStrategy,
    JointCounts,
    appendix_b_model,
    counterexample_model,
    deterministic_model,
    fine_joint,
    general_joint,
    idx,
    lhv_feasible,
    sample_lhv,
    table_from_counts,
    table_from_distribution,
)

from oracles import linprog_feasible, random_consistent_counts
from test_inequalities import random_lhv_table, random_quantum_table, singlet_table


def point_mass(i):
    d = np.zeros(16)
    d[i] = 1.0
    return d


# --- Fine construction ---------------------------------------------------------


def test_fine_deterministic():
    ep = np.zeros((2, 2), int)
    ep[1, 0] = 7
    z = np.zeros((2, 2), int)
    wp = fine_joint(ep, z, z, ep)
    assert wp[1, 0, 1, 0] == 1.0 and wp.sum() == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fine_marginals_exact(seed):
    rng = np.random.default_rng(seed)
    ep, em, fp, fm, whole = random_consistent_counts(rng)
    if whole.sum() == 0:
        return
    n = int(whole.sum())
    wp = fine_joint(ep, em, fp, fm, whole, exact=True)
    assert sum(wp.ravel()) == 1
    assert all(x >= 0 for x in wp.ravel())
    for a, b in itertools.product(range(2), repeat=2):
        assert sum(wp[a, b, 1, :]) == Fraction(int(ep[a, b]), n)
        assert sum(wp[a, b, 0, :]) == Fraction(int(em[a, b]), n)
        assert sum(wp[a, b, :, 1]) == Fraction(int(fp[a, b]), n)
        assert sum(wp[a, b, :, 0]) == Fraction(int(fm[a, b]), n)


def test_fine_rejects_bookkeeping():
    a = np.ones((2, 2), int)
    with pytest.raises(LocalityBookkeepingViolated):
        fine_joint(a, a, a, 2 * a)
    with pytest.raises(LocalityBookkeepingViolated):
        fine_joint(a, a, a, a, e=a)


def test_fine_zero_cell():
    ep = np.array([[3, 0], [0, 1]])
    wp = fine_joint(ep, np.zeros((2, 2), int), ep, np.zeros((2, 2), int))
    assert np.all(wp[0, 1] == 0) and wp.sum() == pytest.approx(1)


def test_general_k2_equals_fine():
    rng = np.random.default_rng(0)
    ep, em, fp, fm, _ = random_consistent_counts(rng)
    g = general_joint([np.stack([em, ep]), np.stack([fm, fp])])
    assert np.array_equal(g, fine_joint(ep, em, fp, fm))


def test_general_k1():
    counts = np.array([[[1, 2], [3, 4]], [[5, 6], [7, 8]]])
    g = general_joint([counts])
    assert np.allclose(np.moveaxis(g, -1, 0), counts / counts.sum())


@pytest.mark.parametrize("seed", range(5))
def test_general_k3_marginals(seed):
    rng = np.random.default_rng(seed)
    whole = rng.integers(1, 30, size=(2, 2))
    parts = []
    for _ in range(3):
        s = rng.integers(0, whole + 1)
        parts.append(np.stack([whole - s, s]))
    g = general_joint(parts, exact=True)
    n = int(whole.sum())
    assert g.shape == (2, 2, 2, 2, 2)
    assert sum(g.ravel()) == 1
    for j in range(3):
        for a, b, o in itertools.product(range(2), repeat=3):
            sl = [a, b, slice(None), slice(None), slice(None)]
            sl[2 + j] = o
            assert sum(g[tuple(sl)].ravel()) == Fraction(int(parts[j][o, a, b]), n)


# --- feasibility ---------------------------------------------------------------


def test_deterministic_tables_feasible():
    for i in range(16):
        ok, cert = lhv_feasible(table_from_distribution(point_mass(i)))
        assert ok
        assert cert.weights[i] == pytest.approx(1.0)


def test_singlet_infeasible():
    ok, cert = lhv_feasible(singlet_table())
    assert not ok and cert.kind == "chsh"
    assert cert.value == pytest.approx(2 * math.sqrt(2))


def test_feasible_matches_chsh_and_linprog():
    rng = np.random.default_rng(1)
    for k in range(1000):
        t = random_lhv_table(rng) if k % 2 else random_quantum_table(rng)
        ok, _ = lhv_feasible(t)
        assert ok == bool(np.all(chsh_all_eight(t) <= 2 + 1e-9))
        assert ok == linprog_feasible(t.mean_a, t.mean_b, t.correlators(), t.p_m, t.p_mp)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_mixture_convexity(seed, lam):
    rng = np.random.default_rng(seed)
    d1, d2 = rng.dirichlet(np.ones(16)), rng.dirichlet(np.full(16, 0.2))
    assert lhv_feasible(table_from_distribution(lam * d1 + (1 - lam) * d2))[0]


def test_certificate_residual():
    rng = np.random.default_rng(2)
    for _ in range(100):
        t = random_lhv_table(rng)
        ok, cert = lhv_feasible(t)
        assert ok and cert.residual < 1e-9
        assert np.all(cert.weights >= 0) and cert.weights.sum() == pytest.approx(1)
        back = table_from_distribution(cert.weights)
        assert np.allclose(back.correlators(), t.correlators(), atol=1e-9)


def test_quantum_tables_no_false_certificates():
    rng = np.random.default_rng(3)
    for _ in range(300):
        t = random_quantum_table(rng)
        ok, cert = lhv_feasible(t)
        if chsh_all_eight(t).max() > 2 + 1e-9:
            assert not ok and cert.kind == "chsh"
        elif chsh_all_eight(t).max() < 2 - 1e-9:
            assert ok


def test_deterministic_model():
    m = deterministic_model(table_from_distribution(point_mass(5)))
    assert np.count_nonzero(m.weights > 1e-12) == 1
    white = CorrelationTable(0, 0, 0, 0, 0, 0, 0.5, 0.5)
    m = deterministic_model(white)
    rec = m.table()
    for k in ("mean_a", "mean_b", "corr_am", "corr_bm", "corr_amp", "corr_bmp", "p_m", "p_mp"):
        assert getattr(rec, k) == pytest.approx(getattr(white, k), abs=1e-9)
    with pytest.raises(InfeasibleInput):
        deterministic_model(singlet_table())


def test_certificate_json():
    _, cert = lhv_feasible(singlet_table())
    assert json.loads(json.dumps(cert.to_dict()))["kind"] == "chsh"


# --- strategies and sampling ----------------------------------------------------


def test_strategy_index():
    for i in range(16):
        s = DeterministicStrategy.from_index(i)
        assert s.index == i
        assert (s.alpha, s.beta, s.m, s.mprime) == tuple(STRATEGIES[i])
    assert idx(-1) == 0 and idx(1) == 1


def test_sample_point_mass():
    c = sample_lhv(point_mass(9), 1000, 0)
    assert c.total == 1000 and c.table.reshape(16)[9] == 1000


def test_sample_uniform_concentration():
    n = 16_000_000
    c = sample_lhv(np.full(16, 1 / 16), n, 42).table.reshape(16)
    p = 1 / 16
    # 4 sigma per cell keeps the family-wise false alarm rate below 1e-3 over 16 cells
    assert np.all(np.abs(c - n * p) <= 4 * math.sqrt(n * p * (1 - p)))


def test_sample_deterministic():
    d = np.random.default_rng(0).dirichlet(np.ones(16))
    assert np.array_equal(sample_lhv(d, 10_000, 7).table, sample_lhv(d, 10_000, 7).table)


def test_counts_csv_round_trip():
    c = sample_lhv(np.full(16, 1 / 16), 500, 1)
    text = c.to_csv()
    assert text.splitlines()[0] == "alpha,beta,m,mprime,count"
    assert np.array_equal(JointCounts.from_csv(text).table, c.table)
    t = table_from_counts(c)
    assert abs(t.mean_a) < 0.2


# --- counterexample -----------------------------------------------------------


def test_counterexample():
    model = counterexample_model()
    for label in ("P", "P'"):
        assert model.normalization(label) == pytest.approx(1, abs=1e-10)
        assert np.allclose(model.evaluate(label), 0.25, atol=1e-8)
        marg = model.marginals(label)
        assert np.allclose(marg["A"], 0.5) and np.allclose(marg["B"], 0.5)
    assert model.max_density_difference("P", "P'") > 0.3


def test_counterexample_response_partition():
    model = counterexample_model()
    for lam in np.linspace(0.01, 2 * math.pi - 0.01, 97):
        for obs in ("A", "B"):
            assert model.response[obs](1, lam) != model.response[obs](-1, lam)


# --- explicit hidden-variable model ---------------------------------------------


def _quad_counts_from_lhv(dist, n, seed):
    """Steered count tables N(alpha, beta | E_x) from a sampled local source."""
    joint = sample_lhv(dist, n, seed).table  # [alpha, beta, m, m']
    return [joint[:, :, 1, :].sum(axis=2), joint[:, :, 0, :].sum(axis=2), joint[:, :, :, 1].sum(axis=2), joint[:, :, :, 0].sum(axis=2)]


@pytest.mark.parametrize("seed", range(10))
def test_appendix_b_reproduces_lhv(seed):
    rng = np.random.default_rng(seed)
    dist = rng.dirichlet(np.ones(16))
    n = 200_000
    qc = _quad_counts_from_lhv(dist, n, seed)
    model = appendix_b_model(qc)
    truth = table_from_distribution(dist)
    got = model.table()
    se = 3 / math.sqrt(n) * 3
    for k in ("mean_a", "mean_b", "corr_am", "corr_bm", "corr_amp", "corr_bmp", "p_m", "p_mp"):
        assert getattr(got, k) == pytest.approx(getattr(truth, k), abs=se)
    # measuring M = +1 in the model is preparing E+
    pred = model.predict("A", "M")
    w = model.weights[0]
    fp = qc[0] / qc[0].sum()
    assert pred[:, 1] == pytest.approx(w * fp.sum(axis=1), abs=3e-3)


def test_appendix_b_rejects_disagreement():
    e = np.array([[50, 0], [0, 50]])
    f = np.array([[0, 50], [50, 0]])
    with pytest.raises(AgreementViolated):
        appendix_b_model([e, e, f, f], weights=(0.5, 0.5))


def test_appendix_b_response_out_of_range():
    # forced mixtures agree but the weight exceeds the cell frequency ratio
    e = np.array([[10, 10], [10, 10]])
    with pytest.raises(NonProbabilisticResponse):
        appendix_b_model([e, e, e, e], weights=(1.2, 0.5))


def test_appendix_b_degenerate_weight():
    e = np.array([[30, 10], [20, 40]])
    model = appendix_b_model([e, e, e, e], weights=(1.0, 0.5))
    assert model.wp.sum() == pytest.approx(1)
    assert np.allclose(model.p2_m[0], 0)


def test_appendix_b_iff_lemma1():
    # symmetric counts, weights 1/2: a model exists exactly when both pairing inequalities hold
    rng = np.random.default_rng(4)
    for _ in range(40):
        tab = random_lhv_table(rng)
        q = tab.to_quad()
        assert all(lemma1_check(q, 1e-9))
    quad_singlet = singlet_table().to_quad()
    assert not all(lemma1_check(quad_singlet))
    # the singlet's conditional statistics cannot be glued: mixtures disagree
    r = 1 / math.sqrt(2)
    def counts(mean_a, mean_b, n=10_000):
        # uncorrelated within the subensemble: product frequencies
        pa, pb = (1 + mean_a) / 2, (1 + mean_b) / 2
        return np.rint(n * np.outer([1 - pa, pa], [1 - pb, pb])).astype(int)
    qc = [counts(r, r), counts(-r, -r), counts(r, -r), counts(-r, r)]
    with pytest.raises((AgreementViolated, NonProbabilisticResponse)):
        appendix_b_model(qc, weights=(0.5, 0.5))
