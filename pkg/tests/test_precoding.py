import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from manoma import socp
from manoma.precoding import (Layout, ScaState, build_sca_socp, sca_step, taylor_lower_bound,
                              zf_precoder)
from manoma.rates import (Precoder, achievable_rates, fixed_sic_decoding, identity_decoding,
                          order_users)

from conftest import random_channel, random_decoding


def cvec(rng, n):
    return (rng.normal(size=n) + 1j * rng.normal(size=n)) / math.sqrt(2)


def test_taylor_equality_at_expansion_point():
    rng = np.random.default_rng(0)
    h, wb = cvec(rng, 3), cvec(rng, 3)
    assert taylor_lower_bound(h, wb, 0.7, wb, 0.7) == pytest.approx(abs(np.vdot(h, wb)) ** 2 / 0.7,
                                                                    rel=1e-12)


def test_taylor_orthogonal_expansion_is_zero():
    h = np.array([1.0, 0.0], dtype=complex)
    wb = np.array([0.0, 1.0], dtype=complex)
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert taylor_lower_bound(h, cvec(rng, 2), rng.uniform(0.1, 5), wb, 2.0) == 0


def test_taylor_rejects_nonpositive_qbar():
    with pytest.raises(ValueError):
        taylor_lower_bound(np.ones(2), np.ones(2), 1.0, np.ones(2), 0.0)


def test_taylor_under_estimator_random_samples():
    rng = np.random.default_rng(2)
    worst = -np.inf
    for _ in range(10_000):
        n = int(rng.integers(1, 5))
        h, w, wb = cvec(rng, n), cvec(rng, n), cvec(rng, n)
        q, qb = rng.uniform(1e-3, 10, 2)
        true = abs(np.vdot(h, w)) ** 2 / q
        worst = max(worst, taylor_lower_bound(h, w, q, wb, qb) - true)
        # equality at the expansion point
        at = taylor_lower_bound(h, wb, qb, wb, qb)
        assert at == pytest.approx(abs(np.vdot(h, wb)) ** 2 / qb, rel=1e-10)
    assert worst <= 1e-12


def test_layout_roundtrip():
    lay = Layout(2, 3)
    rng = np.random.default_rng(3)
    w = random_channel(rng, 2, 3)
    w2, q, t = lay.unpack(lay.pack(w, [1, 2, 3], 4.0))
    assert np.array_equal(w2, w) and list(q) == [1, 2, 3] and t == 4.0
    assert lay.nvars == 2 * 6 + 3 + 1


def _state(h, w, m, order, p_max=1.0):
    return ScaState.at(h, Precoder(w, p_max), m, order, 1.0)


def test_identity_decoding_cone_pattern():
    rng = np.random.default_rng(4)
    h = random_channel(rng, 2, 3, 3.0)
    w = random_channel(rng, 2, 3)
    w /= np.linalg.norm(w)
    order = order_users(h)
    p = build_sca_socp(h, identity_decoding(3), order, _state(h, w, np.eye(3), order), 1.0, 1.0)
    # 3 SINR cones, 1 power cone, 3 epigraph rows, no cross-decoding cones
    assert len(p.cones) == 7
    for j in range(3):
        A = p.cones[j].A
        for i in range(3):
            block = A[2 * i:2 * i + 2]
            assert (np.abs(block).max() == 0) == (i == j)


def test_cross_cones_only_where_decoded():
    rng = np.random.default_rng(5)
    h = random_channel(rng, 2, 3, 3.0)
    w = random_channel(rng, 2, 3) / 3
    order = order_users(h)
    m = np.array([[1, 1, 0], [0, 1, 1], [0, 0, 1]])
    p = build_sca_socp(h, m, order, _state(h, w, m, order), 1.0, 1.0)
    assert len(p.cones) == 3 + 2 + 1 + 3


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_expansion_point_is_feasible(seed, K):
    rng = np.random.default_rng(seed)
    h = random_channel(rng, 2, K, 3.0)
    w = random_channel(rng, 2, K)
    w /= np.linalg.norm(w)
    m = random_decoding(rng, K)
    order = order_users(h)
    sca = _state(h, w, m, order)
    p = build_sca_socp(h, m, order, sca, 1.0, 1.0)
    x = Layout(2, K).pack(w, sca.q_bar, sca.q_bar.min())
    viol, _ = socp.residuals(p, x)
    assert viol <= 1e-9 * max(1.0, np.abs(h).max() ** 2)


def test_single_user_mrt():
    rng = np.random.default_rng(6)
    for _ in range(5):
        h = random_channel(rng, 3, 1, 5.0)
        opt = math.log2(1 + 4.0 * np.linalg.norm(h) ** 2)
        mrt = h / np.linalg.norm(h) * 2.0
        w, q, rep = sca_step(h, np.eye(1), [0], _state(h, mrt, np.eye(1), [0], 4.0), 1.0, 4.0)
        assert rep.status == "optimal"
        assert math.log2(1 + q[0]) == pytest.approx(opt, abs=1e-5)
        # from a random start, a few steps converge to the same optimum
        w = Precoder(random_channel(rng, 3, 1) * 0.5, 4.0)
        for _ in range(8):
            w, q, rep = sca_step(h, np.eye(1), [0], ScaState.at(h, w, np.eye(1), [0], 1.0), 1.0, 4.0)
        assert achievable_rates(h, w.w, np.eye(1), [0], 1.0).min_rate == pytest.approx(opt, abs=1e-5)


@pytest.mark.parametrize("n,k", [(2, 1), (2, 3), (4, 6)])
def test_lower_bound_power_and_monotonicity(n, k):
    rng = np.random.default_rng(7 + n + k)
    h = random_channel(rng, n, k, 4.0)
    w = random_channel(rng, n, k)
    w = Precoder(w / np.linalg.norm(w), 1.0)
    order = order_users(h)
    for m in (identity_decoding(k), fixed_sic_decoding(k), random_decoding(rng, k)):
        prev = -np.inf
        cur = w
        for _ in range(4):
            sca = ScaState.at(h, cur, m, order, 1.0)
            assert sca.q_bar.min() >= prev - 1e-6
            cur, q, rep = sca_step(h, m, order, sca, 1.0, 1.0)
            assert rep.status == "optimal"
            true = 2.0 ** achievable_rates(h, cur.w, m, order, 1.0).per_user_rates - 1
            assert np.all(q <= true + 1e-6 * np.maximum(1, true))
            assert q.min() >= sca.q_bar.min() - 1e-6 * max(1, sca.q_bar.min())
            assert cur.power <= 1.0 + 1e-8
            prev = q.min()


def test_sca_step_deterministic():
    rng = np.random.default_rng(8)
    h = random_channel(rng, 2, 3, 3.0)
    w = Precoder(random_channel(rng, 2, 3) / 3, 1.0)
    order = order_users(h)
    sca = ScaState.at(h, w, np.eye(3), order, 1.0)
    a = sca_step(h, np.eye(3), order, sca, 1.0, 1.0)
    b = sca_step(h, np.eye(3), order, sca, 1.0, 1.0)
    assert np.array_equal(a[0].w, b[0].w) and np.array_equal(a[1], b[1])


def test_scastate_validation():
    with pytest.raises(ValueError):
        ScaState(Precoder(np.ones((2, 2)) * 0.1, 1.0), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        ScaState(Precoder(np.ones((2, 2)) * 0.1, 1.0), np.array([1.0]))


def test_zf_orthogonal_equals_mrt():
    h = np.eye(3, dtype=complex)[:, :2] * 2.0
    w = zf_precoder(h, 2.0, 1.0).w
    assert np.allclose(np.abs(w), np.eye(3)[:, :2], atol=1e-12)
    assert np.allclose(w, h / 2.0)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_zf_full_rank_is_diagonal(seed, k):
    rng = np.random.default_rng(seed)
    h = random_channel(rng, 4, k)
    w = zf_precoder(h, 1.0, 1.0).w
    cross = np.abs(h.conj().T @ w)
    for i in range(k):
        for j in range(k):
            if i != j:
                assert cross[i, j] <= 1e-9 * np.linalg.norm(h[:, i]) * np.linalg.norm(w[:, j])
    g = np.abs(np.diag(h.conj().T @ w)) ** 2
    assert np.allclose(g, g[0], rtol=1e-9)           # equal SNRs
    assert np.vdot(w, w).real == pytest.approx(1.0, abs=1e-9)


def test_zf_overloaded_and_rank_deficient():
    rng = np.random.default_rng(9)
    for h in (random_channel(rng, 2, 3), np.ones((3, 2), dtype=complex)):
        w = zf_precoder(h, 1.0, 1.0).w
        assert np.all(np.isfinite(w)) and np.vdot(w, w).real == pytest.approx(1.0, abs=1e-9)
