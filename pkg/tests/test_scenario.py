import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from biars.scenario import (AccessPoint, ChannelTensor, CoincidentTransceiverError, EyeSafetyParams,
                            NoiseModel, PhotodiodeOrientation, ReceiverParams, ScenarioConfig, ScenarioError, VcselParams,
                            apply_blockage, beam_radius, build_channel_tensor, exposure_level,
                            fan_orientations, los_channel_gain, make_user, max_permissible_power, mode_rank_ok,
                            noise_variance, random_user_positions, rayleigh_range, reference_gain,
                            vcsel_intensity, vcsel_power_limit)

VC = VcselParams()


def _total_power(vcsel, d):
    w = beam_radius(vcsel, d)
    val, _ = integrate.quad(lambda r: vcsel_intensity(vcsel, r, d) * 2 * math.pi * r,
                            0, 12 * w, epsabs=0, epsrel=1e-12, limit=200)
    return val


@pytest.mark.parametrize("d", [0.5, 1.0, 2.0, 3.0])
def test_intensity_integrates_to_transmit_power(d):
    assert _total_power(VC, d) == pytest.approx(VC.power_per_vcsel, rel=1e-6)


def test_rayleigh_range_value():
    assert rayleigh_range(VC) == pytest.approx(math.pi * 64e-12 / 1550e-9)


@given(st.floats(0, 5), st.floats(0, 5))
def test_beam_radius_and_on_axis_intensity_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    assert beam_radius(VC, lo) <= beam_radius(VC, hi)
    assert vcsel_intensity(VC, 0.0, lo) >= vcsel_intensity(VC, 0.0, hi)


@given(st.floats(0, 0.5), st.floats(0, 0.5))
def test_intensity_decreases_with_radial_offset(r1, r2):
    lo, hi = sorted((r1, r2))
    assert vcsel_intensity(VC, lo, 2.0) >= vcsel_intensity(VC, hi, 2.0)


def _single_beam_oracle(src, axis, dst, normal, vcsel, area, gain, fov):
    """Straightforward per-geometry evaluation written without vectorisation."""
    rel = [dst[i] - src[i] for i in range(3)]
    dist = math.sqrt(sum(x * x for x in rel))
    axial = sum(rel[i] * axis[i] for i in range(3))
    perp = [rel[i] - axial * axis[i] for i in range(3)]
    r2 = sum(x * x for x in perp)
    zr = math.pi * vcsel.beam_waist ** 2 * vcsel.refractive_index / vcsel.wavelength
    if axial <= 0:
        return 0.0
    w2 = vcsel.beam_waist ** 2 * (1 + (axial / zr) ** 2)
    inten = 2 * vcsel.power_per_vcsel / (math.pi * w2) * math.exp(-2 * r2 / w2)
    cos_psi = -sum(rel[i] * normal[i] for i in range(3)) / dist
    if cos_psi <= 0 or math.acos(min(cos_psi, 1.0)) > fov:
        return 0.0
    return inten * area * gain * cos_psi


def test_gain_matches_independent_evaluation():
    rng = np.random.default_rng(7)
    vc = VcselParams(array_side=1, fanout_span=0.0, beam_waist=30e-6)
    worst = 0.0
    for _ in range(1000):
        ap_pos = np.array([*rng.uniform(0, 8, 2), 3.0])
        ap = AccessPoint(0, ap_pos, vc)
        # user near the beam footprint so gains are not all vanishing
        xy = ap_pos[:2] + rng.normal(0, 0.05, 2)
        el, az = rng.uniform(0, 1.2), rng.uniform(0, 2 * math.pi)
        rx = ReceiverParams(n_photodiodes=1, tilt=el)
        sc = ScenarioConfig(receiver=rx)
        user = make_user(0, xy, sc, (PhotodiodeOrientation(el, az),))
        h = los_channel_gain(ap, user, 0)
        axis = ap.beam_axes(user.position[2])[0]
        ref = _single_beam_oracle(ap_pos, axis, user.position, user.normals[0], vc,
                                  rx.pd_area, rx.filter_gain, rx.fov)
        if ref == 0.0:
            assert h == 0.0
        else:
            worst = max(worst, abs(h - ref) / ref)
    assert worst <= 1e-9


def test_fov_gate_gives_exact_zero():
    sc = ScenarioConfig(receiver=ReceiverParams(n_photodiodes=1, fov=math.radians(10)))
    ap = sc.access_points()[0]
    # photodiode tilted 80 degrees away from an AP almost straight above
    user = make_user(0, ap.position[:2] + 0.01, sc, (PhotodiodeOrientation(math.radians(80), 0.0),))
    assert los_channel_gain(ap, user, 0) == 0.0


def test_coincident_transceiver_rejected():
    sc = ScenarioConfig(receiver=ReceiverParams(n_photodiodes=1))
    ap = sc.access_points()[0]
    user = make_user(0, ap.position[:2], sc)
    object.__setattr__(user, "position", ap.position.copy())
    with pytest.raises(CoincidentTransceiverError):
        los_channel_gain(ap, user, 0)


def test_eye_safety_self_consistency():
    es = EyeSafetyParams()
    w = beam_radius(VC, es.hazard_distance)
    p_max = max_permissible_power(es, w)
    rc = es.cornea_diameter / 2
    vc = VcselParams(power_per_vcsel=p_max)
    captured, _ = integrate.quad(lambda r: vcsel_intensity(vc, r, es.hazard_distance) * 2 * math.pi * r,
                                 0, rc, epsabs=0, epsrel=1e-13)
    assert captured / (math.pi * rc ** 2) == pytest.approx(es.mpe, rel=1e-6)
    assert exposure_level(p_max, es, w) == pytest.approx(es.mpe, rel=1e-12)


def test_p_max_limits():
    es = EyeSafetyParams(cornea_diameter=7e-3)
    # wide beam: P_max -> (pi/2) E W^2
    w = 1.0
    assert max_permissible_power(es, w) == pytest.approx(math.pi / 2 * es.mpe * w ** 2, rel=1e-4)
    # narrow beam: everything enters the pupil
    assert max_permissible_power(es, 1e-5) == pytest.approx(math.pi / 4 * 7e-3 ** 2 * es.mpe)
    with pytest.raises(ScenarioError):
        max_permissible_power(es, 0.0)


def test_default_scenario_is_eye_safe():
    sc = ScenarioConfig()
    assert sc.vcsel.power_per_vcsel <= vcsel_power_limit(sc)


def test_noise_examples():
    nm = NoiseModel()
    s = 2e-3
    assert noise_variance(nm, s, snr_db=0, responsivity=0.9) == pytest.approx((0.9 * s) ** 2)
    assert noise_variance(nm, s, snr_db=30, responsivity=0.9) == pytest.approx((0.9 * s) ** 2 / 1000)
    phys = NoiseModel(snr_target_mode=False)
    assert noise_variance(phys, 1e-3) == pytest.approx(10 ** -15.5 * 1e-6 * 1.5e9, rel=1e-12)
    assert noise_variance(phys, 1e-3) == pytest.approx(4.74e-14, rel=1e-3)
    with pytest.raises(ScenarioError):
        noise_variance(nm, None)


def _tensor(K=40, M=3, L=5):
    return ChannelTensor(np.ones((K, M, L)), np.zeros((K, L), dtype=bool))


def test_blockage_edge_cases_and_rate():
    t = _tensor()
    assert np.array_equal(apply_blockage(t, 0.0, 1).gains, t.gains)
    assert not apply_blockage(t, 1.0, 1).gains.any()
    big = ChannelTensor(np.ones((1000, 1, 100)), np.zeros((1000, 100), dtype=bool))
    frac = apply_blockage(big, 0.3, 5).blocked.mean()
    assert abs(frac - 0.3) < 0.01
    a, b = apply_blockage(t, 0.4, 9), apply_blockage(t, 0.4, 9)
    assert np.array_equal(a.blocked, b.blocked)
    with pytest.raises(ValueError):
        apply_blockage(t, 1.5)


def test_channel_tensor_shape_rank_and_determinism():
    sc = ScenarioConfig()
    xy = random_user_positions(sc, 6, np.random.default_rng(3))
    t1, _ = build_channel_tensor(sc, xy, np.random.default_rng(4))
    t2, _ = build_channel_tensor(sc, xy, np.random.default_rng(4))
    assert t1.gains.shape == (6, 16, 16)
    assert np.array_equal(t1.gains, t2.gains)
    assert (t1.gains >= 0).all()
    for k in range(6):
        assert mode_rank_ok(t1.gains[k])


def test_mode_rank_check():
    good = np.eye(4) + 0.1
    assert mode_rank_ok(good)
    bad = np.ones((4, 4))
    assert not mode_rank_ok(bad)
    # an unseen AP column does not count against the rank
    partial = good.copy()
    partial[:, 3] = 0.0
    assert mode_rank_ok(partial[:, :3]) and mode_rank_ok(partial)


def test_reference_gain_is_on_axis_beam():
    sc = ScenarioConfig()
    rx = sc.receiver
    expected = vcsel_intensity(sc.vcsel, 0.0, sc.room.floor_height) * rx.pd_area * rx.filter_gain
    assert reference_gain(sc) == pytest.approx(expected)


def test_fan_orientations():
    o = fan_orientations(4, 0.5)
    assert [p.azimuth for p in o] == pytest.approx([0, math.pi / 2, math.pi, 3 * math.pi / 2])
    assert all(p.elevation == 0.5 for p in o)
