import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from biars.rates import (CLIP_CONSTANT, PowerAllocation, RateError, SinrInputs, block_noise,
                         build_rate_state, group_rates, logdet_rate, mode_eigenvalues,
                         network_sum_rate, rate_derivative, rate_from_eigs, resource_share,
                         sinr_common, sinr_noise, sinr_private, sinr_private_all)

C = 0.05855
UNIT = dict(c=C, rho=1.0, zeta=1.0)


def test_clip_constant():
    assert CLIP_CONSTANT == pytest.approx(1 / (2 * math.pi * math.e))


def test_common_sinr_examples():
    inp = SinrInputs(sigma2=0.01, **UNIT)
    assert sinr_common(0.0, [0.1, 0.1], inp) == 0.0
    assert sinr_common(1.0, [0.1, 0.1], inp) == pytest.approx(C / (0.2 * C + 0.01))
    assert sinr_common(1.0, [0.1, 0.1], inp) == pytest.approx(2.697, abs=1e-3)
    unit = SinrInputs(sigma2=C * 0.5, **UNIT)
    assert sinr_common(0.5, [0.0], unit) == pytest.approx(1.0)


def test_private_sinr_examples():
    inp = SinrInputs(sigma2=0.01, **UNIT)
    assert sinr_private([0.3], 0, inp) == pytest.approx(C * 0.3 / 0.01)
    assert sinr_private([0.2, 0.1], 0, inp) == pytest.approx(0.01171 / 0.015855, rel=1e-4)
    assert sinr_private([0.2, 0.1], 0, inp) == pytest.approx(0.7385, abs=1e-3)
    g = sinr_private_all([0.4, 0.4], inp)
    assert g[0] == g[1]
    assert np.allclose(sinr_private_all([0.2, 0.1], inp),
                       [sinr_private([0.2, 0.1], k, inp) for k in range(2)])


def test_logdet_examples():
    assert logdet_rate(np.eye(2), np.eye(2), 0.0, 0.5) == 0.0
    assert logdet_rate([[1.0]], [[1.0]], 3.0, 0.25) == pytest.approx(0.5)
    toy = logdet_rate(np.eye(2), np.diag([2.0, 1.0]), 1.0, 1 / 3)
    assert toy == pytest.approx(math.log2(3) / 3)
    mu = mode_eigenvalues(np.eye(2), block_noise(2, 2))
    assert rate_from_eigs(mu, 1.0, 1 / 3) == pytest.approx(math.log2(3) / 3)


def test_logdet_rejects_singular_noise():
    with pytest.raises(RateError):
        logdet_rate(np.eye(2), np.zeros((2, 2)), 1.0, 1.0)


@given(st.integers(1, 5), st.integers(0, 10_000), st.floats(0.01, 50))
def test_det_equals_eigen_sum(L, seed, gamma):
    rng = np.random.default_rng(seed)
    H = rng.uniform(0, 1, (L, L))
    A = rng.standard_normal((L, L))
    R = A @ A.T + L * np.eye(L)
    direct = logdet_rate(H, R, gamma, 0.3)
    via_eig = rate_from_eigs(mode_eigenvalues(H, R), gamma, 0.3)
    assert via_eig == pytest.approx(direct, rel=1e-9, abs=1e-12)


@given(st.floats(0, 10), st.floats(1e-3, 10))
def test_rate_derivative_matches_finite_difference(gamma, scale):
    mu = np.array([0.5, 2.0, 3.0]) * scale
    # step scaled by the curvature so the one-sided difference at 0 stays accurate
    h = 1e-6 * max(gamma, 1.0) / (1.0 + mu.max())
    fd = (rate_from_eigs(mu, gamma + h, 0.2) - rate_from_eigs(mu, max(gamma - h, 0), 0.2)) / \
        (gamma + h - max(gamma - h, 0))
    assert rate_derivative(mu, gamma, 0.2) == pytest.approx(fd, rel=1e-5)


def _state(seed, K=4, L=3, G=2):
    rng = np.random.default_rng(seed)
    modes = rng.uniform(0.05, 1.0, (K, L, L))
    assign = np.arange(K) % G
    inp = SinrInputs(sigma2=10 ** -rng.uniform(1, 3))
    return build_rate_state(modes, assign, inp, P_T=1.0), rng


def _alloc(state, rng):
    G = state.G
    budgets = np.full(G, state.P_T / G)
    P_c = rng.uniform(0, 0.4, G) * budgets
    P_p = np.zeros(state.K)
    for g, idx in enumerate(state.groups):
        P_p[idx] = rng.uniform(0, 0.5, len(idx)) * (budgets[g] - P_c[g]) / len(idx)
    return PowerAllocation(P_c, P_p, budgets, state.P_p_cap, state.P_T)


@pytest.mark.parametrize("seed", range(50))
def test_rates_monotone_in_own_power(seed):
    state, rng = _state(seed)
    alloc = _alloc(state, rng)
    g = int(rng.integers(state.G))
    k = int(rng.choice(state.groups[g]))
    rc0, rp0 = group_rates(alloc, state, g)
    up = alloc.copy()
    up.P_c[g] += 1e-3
    assert group_rates(up, state, g)[0] >= rc0 - 1e-12
    up = alloc.copy()
    up.P_p[k] += 1e-3
    rc1, rp1 = group_rates(up, state, g)
    pos = list(state.groups[g]).index(k)
    assert rp1[pos] >= rp0[pos] - 1e-12
    # more private power only adds interference to the common message
    assert rc1 <= rc0 + 1e-12
    assert rc0 >= 0 and (rp0 >= 0).all()


@given(st.integers(0, 1000), st.floats(1e-3, 1e3))
def test_scale_invariance(seed, s):
    state, rng = _state(seed)
    alloc = _alloc(state, rng)
    base = network_sum_rate(alloc, state)
    scaled_state, _ = _state(seed)
    scaled_state.inputs = SinrInputs(sigma2=state.inputs.sigma2 * s)
    scaled = alloc.copy()
    scaled.P_c *= s
    scaled.P_p *= s
    rep = network_sum_rate(scaled, scaled_state)
    assert rep.R_total == pytest.approx(base.R_total, rel=1e-10)


def test_network_rate_compositions():
    modes = np.stack([np.eye(2), np.eye(2)])
    inp = SinrInputs(sigma2=1.0, c=1.0, zeta=1.0)
    st_ = build_rate_state(modes, [0, 1], inp, P_T=2.0)
    assert st_.b == pytest.approx(1 / 3)
    zero = PowerAllocation(np.zeros(2), np.zeros(2), np.ones(2), 1.0, 2.0)
    assert network_sum_rate(zero, st_).R_total == 0.0
    alloc = PowerAllocation(np.array([1.0, 0.5]), np.array([0.0, 0.5]), np.ones(2), 1.0, 2.0)
    mu = np.array([0.5, 1.0])
    g1 = rate_from_eigs(mu, 1.0, 1 / 3)
    g2 = rate_from_eigs(mu, 0.5 / 1.5, 1 / 3) + rate_from_eigs(mu, 0.5, 1 / 3)
    rep = network_sum_rate(alloc, st_)
    assert rep.R_total == pytest.approx(g1 + g2)
    assert rep.R_sum_g == pytest.approx([g1, g2])
    assert rep.user_rates.sum() == pytest.approx(rep.R_total)


def test_single_user_group_report():
    modes = np.eye(2)[None]
    inp = SinrInputs(sigma2=0.1)
    st_ = build_rate_state(modes, [0], inp, P_T=1.0)
    alloc = PowerAllocation(np.array([0.3]), np.array([0.7]), np.array([1.0]), 1.0, 1.0)
    rep = network_sum_rate(alloc, st_)
    assert rep.R_total == pytest.approx(rep.R_c[0] + rep.R_p[0])


def test_common_rate_is_min_over_members():
    modes = np.stack([np.eye(2), 0.2 * np.eye(2)])
    inp = SinrInputs(sigma2=0.1)
    st_ = build_rate_state(modes, [0, 0], inp, P_T=1.0)
    alloc = PowerAllocation(np.array([0.5]), np.array([0.25, 0.25]), np.array([1.0]), 1.0, 1.0)
    rc, _ = group_rates(alloc, st_, 0)
    gc = sinr_common(0.5, [0.25, 0.25], inp)
    assert rc == pytest.approx(min(rate_from_eigs(st_.mu[k], gc, st_.b) for k in range(2)))


def test_allocation_residuals():
    a = PowerAllocation(np.array([0.6]), np.array([0.5, -0.1]), np.array([1.0]), 0.4, 1.0)
    r = a.residuals([np.array([0, 1])])
    assert r["nonneg"] == pytest.approx(0.1)
    assert r["private_cap"] == pytest.approx(0.1)
    assert r["group_budget"] == pytest.approx(0.0)
    assert not a.is_valid([np.array([0, 1])])


def test_resource_share_and_noise_helpers():
    assert resource_share(16, 4) == pytest.approx(1 / 19)
    assert resource_share(1, 3) == pytest.approx(1 / 3)
    assert np.array_equal(block_noise(3, 4), np.diag([4.0, 4.0, 1.0]))
    assert sinr_noise(0.0, 16.0, 16, 1.0, 1.0) == pytest.approx(1.0)


def test_build_rate_state_rejects_bad_input():
    with pytest.raises(RateError):
        build_rate_state(np.ones((2, 1, 2)), [0, 1], SinrInputs(sigma2=1.0), 1.0)
    with pytest.raises(RateError):
        build_rate_state(np.ones((2, 2, 2)), [0, 2], SinrInputs(sigma2=1.0), 1.0)
    with pytest.raises(RateError):
        SinrInputs(sigma2=0.0)
