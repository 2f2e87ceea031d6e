import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from biars.bia import (MAX_SLOTS, BlockTooLargeError, alignment_ratio, block_dimensions,
                       build_group_precoders, decode_user, dump_block, effective_noise,
                       intergroup_cancel, simulate_received, verify_all, verify_decodability)


@given(st.integers(2, 8), st.integers(1, 4))
def test_block_dimensions_closed_form(L, G):
    n_slots, n_ab = block_dimensions(L, G)
    assert n_slots == (L - 1) ** G + G * (L - 1) ** (G - 1)
    assert n_ab == (L - 1) ** (G - 1)
    assert alignment_ratio(L, G) == pytest.approx(1.0 / (G + L - 1))


def test_block_dimensions_reject_bad_input():
    with pytest.raises(ValueError):
        block_dimensions(1, 2)
    with pytest.raises(ValueError):
        block_dimensions(3, 0)


def test_toy_precoders_exact():
    s = build_group_precoders(2, 2)
    I, Z = np.eye(2), np.zeros((2, 2))
    assert s.n_slots == 3
    assert np.array_equal(s.precoder(0), np.vstack([I, I, Z]))
    assert np.array_equal(s.precoder(1), np.vstack([I, Z, I]))
    assert np.array_equal(effective_noise(s, 0.7), np.diag([2 * 0.7, 0.7]))


@pytest.mark.parametrize("L,G", [(2, 1), (3, 2), (4, 3), (5, 2), (3, 4)])
def test_schedule_invariants(L, G):
    s = build_group_precoders(L, G)
    n_slots, n_ab = block_dimensions(L, G)
    assert s.n_slots == n_slots and s.n_blocks == n_ab
    for g in range(G):
        used = []
        for blk in s.blocks[g]:
            assert len(blk) == L
            # the group's receivers visit every mode once per block
            assert sorted(s.modes[g, list(blk)]) == list(range(L))
            # every other group holds a constant mode
            for j in range(G):
                if j != g:
                    assert len(set(s.modes[j, list(blk)])) == 1
            used += list(blk)
        assert sorted(used) == sorted(np.flatnonzero(s.active[g]).tolist())
        assert len(set(used)) == len(used)


def test_slot_cap():
    with pytest.raises(BlockTooLargeError):
        build_group_precoders(16, 5)
    assert block_dimensions(16, 4)[0] <= MAX_SLOTS


@pytest.mark.parametrize("L,G", list(itertools.product((2, 3, 4), (2, 3))))
def test_decodability_random_channels(L, G):
    s = build_group_precoders(L, G)
    rng = np.random.default_rng(L * 10 + G)
    for _ in range(20):
        H = rng.uniform(0.0, 1.0, (G, L, L))
        assert verify_all(s, H, np.arange(G)).ok


def test_decodability_flags_rank_loss():
    s = build_group_precoders(3, 2)
    H = np.ones((3, 3))
    rep = verify_decodability(s, H, 0)
    assert not rep and any("desired rank" in v for v in rep.violations)


def _roundtrip(L, G, rng):
    s = build_group_precoders(L, G)
    H = [rng.uniform(0.1, 1.0, (L, L)) for _ in range(G)]
    symbols = [rng.standard_normal((s.n_blocks, L)) for _ in range(G)]
    for g in range(G):
        y = simulate_received(s, H[g], g, symbols)
        est = decode_user(s, H[g], g, y)
        err = np.abs(est - symbols[g]).max() / np.abs(symbols[g]).max()
        assert err <= 1e-10


def test_noiseless_roundtrip_toy(rng):
    _roundtrip(2, 2, rng)


def test_noiseless_roundtrip_general(rng):
    for L, G in [(3, 2), (3, 3), (4, 2)]:
        _roundtrip(L, G, rng)


def test_cancellation_noise_covariance_by_simulation():
    # cancellation is linear, so map a million noise draws through it at once
    s = build_group_precoders(3, 2)
    basis = np.eye(s.n_slots)
    C = np.stack([intergroup_cancel(s, basis[i], 0).ravel() for i in range(s.n_slots)], axis=1)
    sigma2 = 0.5
    draws = np.random.default_rng(1).normal(0.0, np.sqrt(sigma2), (1_000_000, s.n_slots))
    clean = draws @ C.T
    L = s.L
    expected = effective_noise(s, sigma2)
    for l in range(s.n_blocks):
        blk = clean[:, l * L:(l + 1) * L]
        cov = np.cov(blk, rowvar=False)
        assert np.allclose(cov, expected, atol=0.01)


def test_effective_noise_bounds():
    s = build_group_precoders(4, 3)
    R = effective_noise(s, 2.0)
    assert np.all(np.diag(R) >= 2.0)
    assert R[-1, -1] == 2.0


def test_dump_block_is_json(tmp_path):
    import json
    s = build_group_precoders(2, 2)
    text = dump_block(s, tmp_path / "b.json")
    doc = json.loads(text)
    assert doc["n_slots"] == 3 and doc["alignment_ratio"] == pytest.approx(1 / 3)
    assert json.loads((tmp_path / "b.json").read_text()) == doc
