"""
Physical scene for a laser-based indoor optical wireless network.

Ceiling-mounted access points (APs) are arrays of Gaussian-beam VCSELs.
Users sit on a receiving plane below the ceiling and carry an angle-diverse
receiver of ``M`` photodiodes.  This module evaluates the line-of-sight
channel between every (user, photodiode, AP) triple, the eye-safety power
bound of a single VCSEL, and the receiver noise level.

All quantities are SI.  Channel gains follow the received-power convention
(they scale with the VCSEL transmit power ``P_tr``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


class ScenarioError(ValueError):
    """Invalid physical configuration."""


class CoincidentTransceiverError(ScenarioError):
    pass


class DegenerateGeometryError(ScenarioError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoomConfig:
    width: float = 8.0
    depth: float = 8.0
    height: float = 3.0
    floor_height: float = 2.0  # receiving plane distance below the ceiling

    def __post_init__(self):
        if min(self.width, self.depth, self.height, self.floor_height) <= 0:
            raise ScenarioError("room dimensions must be positive")
        if self.floor_height >= self.height:
            raise ScenarioError("receiving plane must lie above the floor (floor_height < height)")

    @property
    def plane_z(self) -> float:
        return self.height - self.floor_height


@dataclass(frozen=True)
class VcselParams:
    beam_waist: float = 8e-6
    wavelength: float = 1550e-9
    refractive_index: float = 1.0
    power_per_vcsel: float = 60e-3
    array_side: int = 40
    # side of the square, centred under the AP, that the array's beams are
    # fanned out over on the receiving plane; 0 means all beams point down
    fanout_span: float = 8.0

    def __post_init__(self):
        if self.beam_waist <= 0 or self.wavelength <= 0 or self.power_per_vcsel <= 0:
            raise ScenarioError("beam waist, wavelength and VCSEL power must be positive")
        if self.refractive_index < 1:
            raise ScenarioError("refractive index must be >= 1")
        if self.array_side < 1:
            raise ScenarioError("array_side must be >= 1")
        if self.fanout_span < 0:
            raise ScenarioError("fanout_span must be >= 0")

    @property
    def n_vcsels(self) -> int:
        return self.array_side * self.array_side


@dataclass(frozen=True)
class AccessPoint:
    id: int
    position: np.ndarray
    vcsel: VcselParams

    @property
    def total_power(self) -> float:
        return self.vcsel.n_vcsels * self.vcsel.power_per_vcsel

    def aim_points(self, plane_z: float) -> np.ndarray:
        """Floor-plane targets of the VCSEL beams, shape (L_v**2, 3)."""
        n = self.vcsel.array_side
        offs = ((np.arange(n) + 0.5) / n - 0.5) * self.vcsel.fanout_span
        gx, gy = np.meshgrid(offs, offs, indexing="ij")
        pts = np.empty((n * n, 3))
        pts[:, 0] = self.position[0] + gx.ravel()
        pts[:, 1] = self.position[1] + gy.ravel()
        pts[:, 2] = plane_z
        return pts

    def beam_axes(self, plane_z: float) -> np.ndarray:
        v = self.aim_points(plane_z) - self.position
        return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class PhotodiodeOrientation:
    elevation: float
    azimuth: float

    @property
    def unit_normal(self) -> np.ndarray:
        return orientation_normal(self.elevation, self.azimuth)


def orientation_normal(elevation, azimuth) -> np.ndarray:
    """Unit normal(s) from elevation (angle from zenith) and azimuth."""
    th = np.asarray(elevation, dtype=float)
    al = np.asarray(azimuth, dtype=float)
    return np.stack([np.sin(th) * np.cos(al), np.sin(th) * np.sin(al), np.cos(th)], axis=-1)


@dataclass(frozen=True)
class ReceiverParams:
    n_photodiodes: int = 16
    detector_area: float = 15e-6  # whole detector, split evenly over photodiodes
    filter_gain: float = 1.0
    fov: float = math.radians(60.0)
    responsivity: float = 0.9
    tilt: float = math.radians(30.0)

    def __post_init__(self):
        if self.n_photodiodes < 1 or self.detector_area <= 0:
            raise ScenarioError("receiver needs >= 1 photodiode and positive area")

    @property
    def pd_area(self) -> float:
        return self.detector_area / self.n_photodiodes


@dataclass(frozen=True)
class UserTerminal:
    id: int
    position: np.ndarray
    photodiodes: tuple
    pd_area: float
    pd_gain: float
    fov: float
    responsivity: float

    @property
    def normals(self) -> np.ndarray:
        return np.array([pd.unit_normal for pd in self.photodiodes])


@dataclass(frozen=True)
class NoiseModel:
    rin_db_per_hz: float = -155.0
    bandwidth: float = 1.5e9
    thermal_floor: float = 0.0
    snr_target_mode: bool = True
    snr_db: float = 30.0


@dataclass(frozen=True)
class EyeSafetyParams:
    cornea_diameter: float = 7e-3
    hazard_distance: float = 0.1
    mpe: float = 1000.0  # W/m^2; must be supplied for the wavelength/exposure time in use

    def __post_init__(self):
        if self.cornea_diameter <= 0 or self.hazard_distance <= 0:
            raise ScenarioError("cornea diameter and hazard distance must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    room: RoomConfig = field(default_factory=RoomConfig)
    vcsel: VcselParams = field(default_factory=VcselParams)
    ap_grid: tuple = (4, 4)
    receiver: ReceiverParams = field(default_factory=ReceiverParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    eye_safety: EyeSafetyParams = field(default_factory=EyeSafetyParams)
    n_users: int = 20
    min_vcsel_power: float = 1e-3
    rho: float = 1.0

    @property
    def n_aps(self) -> int:
        return self.ap_grid[0] * self.ap_grid[1]

    def access_points(self) -> list:
        nx, ny = self.ap_grid
        aps = []
        for i in range(nx):
            for j in range(ny):
                pos = np.array([(i + 0.5) * self.room.width / nx,
                                (j + 0.5) * self.room.depth / ny,
                                self.room.height])
                aps.append(AccessPoint(len(aps), pos, self.vcsel))
        return aps

    @property
    def total_power(self) -> float:
        return self.n_aps * self.vcsel.n_vcsels * self.vcsel.power_per_vcsel


@dataclass
class ChannelTensor:
    """LoS gains indexed (user, photodiode, AP) plus a (user, AP) blockage mask."""

    gains: np.ndarray
    blocked: np.ndarray

    def __post_init__(self):
        if self.gains.ndim != 3:
            raise ValueError("gains must have shape (K, M, L)")
        if self.blocked.shape != (self.gains.shape[0], self.gains.shape[2]):
            raise ValueError("blocked mask must have shape (K, L)")

    @property
    def shape(self):
        return self.gains.shape

    def mode_matrix(self, k: int, n_modes: Optional[int] = None) -> np.ndarray:
        g = self.gains[k]
        return g if n_modes is None else g[:n_modes]


# ---------------------------------------------------------------------------
# Beam model
# ---------------------------------------------------------------------------

def rayleigh_range(vcsel: VcselParams) -> float:
    return math.pi * vcsel.beam_waist ** 2 * vcsel.refractive_index / vcsel.wavelength


def beam_radius(vcsel: VcselParams, d):
    """Gaussian beam radius after propagating a distance ``d`` from the waist."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("propagation distance must be >= 0")
    w = vcsel.beam_waist * np.sqrt(1.0 + (d / rayleigh_range(vcsel)) ** 2)
    return float(w) if w.ndim == 0 else w


def vcsel_intensity(vcsel: VcselParams, r, d):
    """Transverse intensity (W/m^2) at radial offset ``r`` and axial distance ``d``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radial offset must be >= 0")
    w = beam_radius(vcsel, d)
    out = 2.0 * vcsel.power_per_vcsel / (np.pi * w ** 2) * np.exp(-2.0 * r ** 2 / w ** 2)
    return float(out) if np.ndim(out) == 0 else out


def _beam_gain(vcsel, src, axes, dst, normals, area, gain, fov):
    """Sum of single-beam LoS gains from ``src`` along each of ``axes`` to each
    receiver normal at ``dst``.

    ``axes`` has shape (V, 3), ``dst`` (N, 3) and ``normals`` (N, M, 3).
    Returns (N, M).
    """
    d_vec = src[None, :] - dst  # receiver -> transmitter
    dist = np.linalg.norm(d_vec, axis=1)
    if np.any(dist <= 0):
        raise CoincidentTransceiverError("coincident transceiver")
    u = d_vec / dist[:, None]
    cos_psi = np.einsum("nmc,nc->nm", normals, u)
    cos_psi = np.clip(cos_psi, -1.0, 1.0)
    in_fov = (cos_psi >= math.cos(fov)) & (cos_psi > 0)
    # beam axis points away from the transmitter, so irradiance uses -u
    cos_phi = np.clip(-(u @ axes.T), -1.0, 1.0)  # (N, V)
    axial = dist[:, None] * cos_phi
    radial_sq = dist[:, None] ** 2 * (1.0 - cos_phi ** 2)
    w_sq = vcsel.beam_waist ** 2 * (1.0 + (np.maximum(axial, 0.0) / rayleigh_range(vcsel)) ** 2)
    inten = 2.0 * vcsel.power_per_vcsel / (np.pi * w_sq) * np.exp(-2.0 * radial_sq / w_sq)
    inten = np.where(cos_phi > 0, inten, 0.0).sum(axis=1)  # (N,)
    return inten[:, None] * area * gain * np.where(in_fov, cos_psi, 0.0)


def los_channel_gain(ap: AccessPoint, user: UserTerminal, m: int, plane_z: Optional[float] = None) -> float:
    """LoS gain between AP ``ap`` (all of its VCSELs) and photodiode ``m`` of ``user``.

    ``plane_z`` fixes where the fan-out aim points lie; it defaults to the
    user's height.
    """
    pz = user.position[2] if plane_z is None else plane_z
    normals = user.normals[m][None, None, :]
    h = _beam_gain(ap.vcsel, ap.position, ap.beam_axes(pz), user.position[None, :],
                   normals, user.pd_area, user.pd_gain, user.fov)
    return float(h[0, 0])


# ---------------------------------------------------------------------------
# Users and channel tensor
# ---------------------------------------------------------------------------

def fan_orientations(n: int, tilt: float, jitter: float = 0.0, rng=None) -> tuple:
    """Deterministic photodiode fan: common tilt from zenith, uniform azimuths."""
    az = 2 * np.pi * np.arange(n) / n
    el = np.full(n, tilt)
    if jitter > 0:
        rng = np.random.default_rng(rng)
        el = np.clip(el + rng.uniform(-jitter, jitter, n), 0.0, np.pi / 2)
        az = az + rng.uniform(-jitter, jitter, n)
    return tuple(PhotodiodeOrientation(float(e), float(a)) for e, a in zip(el, az))


def make_user(uid: int, xy, scenario: ScenarioConfig, orientations=None) -> UserTerminal:
    rx = scenario.receiver
    pos = np.array([xy[0], xy[1], scenario.room.plane_z], dtype=float)
    if orientations is None:
        orientations = fan_orientations(rx.n_photodiodes, rx.tilt)
    return UserTerminal(uid, pos, tuple(orientations), rx.pd_area, rx.filter_gain, rx.fov, rx.responsivity)


def random_user_positions(scenario: ScenarioConfig, n_users: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    xy = rng.uniform(0.0, 1.0, size=(n_users, 2))
    xy[:, 0] *= scenario.room.width
    xy[:, 1] *= scenario.room.depth
    return xy


def _gain_matrix(scenario: ScenarioConfig, users: Sequence[UserTerminal]) -> np.ndarray:
    aps = scenario.access_points()
    pos = np.array([u.position for u in users])
    normals = np.array([u.normals for u in users])
    u0 = users[0]
    out = np.empty((len(users), normals.shape[1], len(aps)))
    for l, ap in enumerate(aps):
        out[:, :, l] = _beam_gain(ap.vcsel, ap.position, ap.beam_axes(scenario.room.plane_z),
                                  pos, normals, u0.pd_area, u0.pd_gain, u0.fov)
    return out


def mode_rank_ok(modes: np.ndarray, visibility_floor: float = 1e-3, rtol: float = 1e-6) -> bool:
    """True when the mode vectors span every AP the receiver actually sees.

    Columns whose peak is below ``visibility_floor`` times the matrix peak are
    treated as unseen.  The remaining columns are normalised before the rank
    test so that large gain disparities do not masquerade as rank loss.
    """
    peak = modes.max() if modes.size else 0.0
    if peak <= 0:
        return False
    cols = modes.max(axis=0) > visibility_floor * peak
    sub = modes[:, cols]
    sub = sub / np.linalg.norm(sub, axis=0, keepdims=True)
    need = min(sub.shape)
    return np.linalg.matrix_rank(sub, tol=rtol * np.linalg.norm(sub, 2)) >= need


def build_channel_tensor(scenario: ScenarioConfig, user_xy, rng=None, max_attempts: int = 20,
                         users: Optional[Sequence[UserTerminal]] = None):
    """Channel tensor of shape (K, M, L) for users at floor positions ``user_xy``.

    Users whose mode vectors are degenerate get their photodiode orientations
    jittered and re-evaluated; a user that is still degenerate after
    ``max_attempts`` raises :class:`DegenerateGeometryError`.

    Returns ``(tensor, users)``.
    """
    if scenario.receiver.n_photodiodes < scenario.n_aps:
        raise ScenarioError("receiver needs at least as many photodiodes as there are APs")
    rng = np.random.default_rng(rng)
    if users is None:
        users = [make_user(k, xy, scenario) for k, xy in enumerate(np.asarray(user_xy))]
    users = list(users)
    gains = _gain_matrix(scenario, users)
    for k in range(len(users)):
        attempts = 0
        while not mode_rank_ok(gains[k]):
            attempts += 1
            if attempts > max_attempts:
                raise DegenerateGeometryError(f"degenerate receiver geometry for user {k}")
            rx = scenario.receiver
            users[k] = replace(users[k], photodiodes=fan_orientations(
                rx.n_photodiodes, rx.tilt, jitter=0.15 * attempts, rng=rng))
            gains[k] = _gain_matrix(scenario, [users[k]])[0]
    blocked = np.zeros((len(users), scenario.n_aps), dtype=bool)
    return ChannelTensor(gains, blocked), users


def apply_blockage(tensor: ChannelTensor, p_block: float, rng=None) -> ChannelTensor:
    """Independently block each (user, AP) link with probability ``p_block``."""
    if not 0.0 <= p_block <= 1.0:
        raise ValueError("blockage probability must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    K, _, L = tensor.gains.shape
    new = rng.random((K, L)) < p_block
    blocked = tensor.blocked | new
    gains = np.where(blocked[:, None, :], 0.0, tensor.gains)
    return ChannelTensor(gains, blocked)


def reference_gain(scenario: ScenarioConfig) -> float:
    """Gain of the reference link: one VCSEL beam received on-axis at the
    receiving plane by a photodiode facing straight up."""
    v = scenario.vcsel
    rx = scenario.receiver
    w = beam_radius(v, scenario.room.floor_height)
    return 2.0 * v.power_per_vcsel * rx.pd_area * rx.filter_gain / (math.pi * w ** 2)


# ---------------------------------------------------------------------------
# Eye safety
# ---------------------------------------------------------------------------

def exposure_level(p_tr: float, es: EyeSafetyParams, w_at_dh: float) -> float:
    """Mean irradiance over the cornea aperture at the hazard distance."""
    if es.cornea_diameter <= 0:
        raise ScenarioError("cornea diameter must be positive")
    dc = es.cornea_diameter
    return p_tr / (math.pi * (dc / 2) ** 2) * -math.expm1(-dc ** 2 / (2 * w_at_dh ** 2))


def max_permissible_power(es: EyeSafetyParams, w_at_dh: float) -> float:
    """Largest per-VCSEL power whose exposure level stays at or below the MPE."""
    if es.cornea_diameter <= 0:
        raise ScenarioError("cornea diameter must be positive")
    if w_at_dh <= 0:
        raise ScenarioError("beam radius at the hazard distance must be positive")
    dc = es.cornea_diameter
    return math.pi / 4 * dc ** 2 * es.mpe / -math.expm1(-dc ** 2 / (2 * w_at_dh ** 2))


def is_eye_safe(p_tr: float, es: EyeSafetyParams, w_at_dh: float) -> bool:
    return exposure_level(p_tr, es, w_at_dh) <= es.mpe * (1 + 1e-12)


def vcsel_power_limit(scenario: ScenarioConfig) -> float:
    es = scenario.eye_safety
    return max_permissible_power(es, beam_radius(scenario.vcsel, es.hazard_distance))


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

def noise_variance(nm: NoiseModel, ref_signal: Optional[float], snr_db: Optional[float] = None,
                   rho: float = 1.0, responsivity: float = 0.9) -> float:
    """Receiver noise variance.

    In SNR-target mode the variance is chosen so the reference link, whose
    received optical signal level is ``ref_signal``, sees the requested
    electrical SNR.  Otherwise the laser intensity noise over the bandwidth
    plus the thermal floor is returned, with ``ref_signal`` as the received
    optical power.
    """
    if ref_signal is None or ref_signal <= 0:
        raise ScenarioError("undefined reference link")
    if nm.snr_target_mode:
        snr = nm.snr_db if snr_db is None else snr_db
        return (responsivity * rho * ref_signal) ** 2 / 10 ** (snr / 10)
    n_rin = 10 ** (nm.rin_db_per_hz / 10) * ref_signal ** 2
    return n_rin * nm.bandwidth + nm.thermal_floor
