"""Common and private SINRs and BIA-RS achievable rates.

Channels are expressed relative to the reference link so that a user with a
unit mode matrix served by one AP at its share ``P_T / L`` sees the target
electrical SNR scaled by the clipping constant ``c``.  Powers are in watts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .bia import alignment_ratio

CLIP_CONSTANT = 1.0 / (2.0 * math.pi * math.e)


class RateError(ValueError):
    """Invalid inputs to a rate computation."""


@dataclass(frozen=True)
class SinrInputs:
    """Scalars shared by every SINR expression.

    ``wc2`` and ``wp2`` are the squared norms of the inner precoding vectors.
    """

    sigma2: float
    c: float = CLIP_CONSTANT
    rho: float = 1.0
    zeta: float = 0.9
    wc2: float = 1.0
    wp2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise RateError("noise variance must be positive")

    @property
    def gain(self) -> float:
        return self.c * self.rho ** 2 * self.zeta ** 2


@dataclass
class PowerAllocation:
    """Message powers of every group.

    ``P_p`` is indexed by user; the group of user ``k`` is ``assignment[k]``.
    """

    P_c: np.ndarray
    P_p: np.ndarray
    P_g_max: np.ndarray
    P_p_cap: float
    P_T: float

    def copy(self) -> "PowerAllocation":
        return PowerAllocation(self.P_c.copy(), self.P_p.copy(), self.P_g_max.copy(),
                               self.P_p_cap, self.P_T)

    def group_power(self, groups: Sequence[np.ndarray]) -> np.ndarray:
        return np.array([self.P_c[g] + self.P_p[idx].sum() for g, idx in enumerate(groups)])

    def residuals(self, groups: Sequence[np.ndarray]) -> Dict[str, float]:
        """Largest violation of each constraint family (0 when satisfied)."""
        return {
            "nonneg": float(max(0.0, -min(self.P_c.min(), self.P_p.min()))),
            "group_budget": float(max(0.0, (self.group_power(groups) - self.P_g_max).max())),
            "private_cap": float(max(0.0, (self.P_p - self.P_p_cap).max())),
            "total_budget": float(max(0.0, self.P_g_max.sum() - self.P_T)),
        }

    def is_valid(self, groups, tol: float = 1e-9) -> bool:
        return max(self.residuals(groups).values()) <= tol * max(1.0, self.P_T)


@dataclass
class RateReport:
    """Rates in bits/s/Hz; ``ee`` in bits/s/Hz per watt."""

    R_c: np.ndarray
    R_p: np.ndarray
    R_sum_g: np.ndarray
    R_total: float
    consumed: float
    ee: float
    user_rates: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "R_c": self.R_c.tolist(), "R_p": self.R_p.tolist(),
            "R_sum_g": self.R_sum_g.tolist(), "R_total": self.R_total,
            "consumed": self.consumed, "ee": self.ee,
        }


def sinr_noise(snr_db: float, P_T: float, L: int, rho: float = 1.0, zeta: float = 0.9) -> float:
    """Noise variance for which the reference link, fed with ``P_T / L``,
    reaches ``snr_db`` before the clipping constant is applied."""
    return (rho * zeta) ** 2 * (P_T / L) / 10 ** (snr_db / 10)


# ---------------------------------------------------------------------------
# SINRs
# ---------------------------------------------------------------------------

def sinr_common(P_c: float, P_p_group, inputs: SinrInputs) -> float:
    """Common-message SINR: every private message of the group interferes."""
    a = inputs.gain
    return a * P_c * inputs.wc2 / (a * inputs.wp2 * float(np.sum(P_p_group)) + inputs.sigma2)


def sinr_private(P_p_group, k: int, inputs: SinrInputs) -> float:
    """Private SINR of the ``k``-th member of a group after common-message SIC."""
    p = np.asarray(P_p_group, dtype=float)
    a = inputs.gain
    interf = p.sum() - p[k]
    return a * p[k] * inputs.wp2 / (a * inputs.wp2 * interf + inputs.sigma2)


def sinr_private_all(P_p_group, inputs: SinrInputs) -> np.ndarray:
    p = np.asarray(P_p_group, dtype=float)
    a = inputs.gain * inputs.wp2
    return a * p / (a * (p.sum() - p) + inputs.sigma2)


# ---------------------------------------------------------------------------
# Log-det rates
# ---------------------------------------------------------------------------

def mode_eigenvalues(H: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Generalised eigenvalues of ``(H H^T, R)``; they turn the log-det rate
    into a sum of scalar logs."""
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    try:
        mu = scipy.linalg.eigh(H @ H.T, R, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise RateError("noise covariance is not positive definite") from exc
    return np.clip(mu, 0.0, None)


def logdet_rate(H: np.ndarray, R: np.ndarray, gamma: float, b: float) -> float:
    """``b * log2 det(I + gamma H H^T R^-1)`` evaluated directly."""
    H = np.asarray(H, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.linalg.cond(R) > 1e15:
        raise RateError("singular noise covariance")
    M = np.eye(H.shape[0]) + gamma * H @ H.T @ np.linalg.inv(R)
    sign, logdet = np.linalg.slogdet(M)
    return b * logdet / math.log(2.0)


def rate_from_eigs(mu: np.ndarray, gamma, b: float):
    """Rate ``b * sum_i log2(1 + gamma mu_i)``; ``gamma`` may be an array."""
    g = np.asarray(gamma, dtype=float)
    return b * np.log1p(np.multiply.outer(g, mu)).sum(axis=-1) / math.log(2.0)


def rate_derivative(mu: np.ndarray, gamma: float, b: float) -> float:
    """Derivative of :func:`rate_from_eigs` with respect to ``gamma``."""
    return b * float(np.sum(mu / (1.0 + gamma * mu))) / math.log(2.0)


def group_common_rate(mus: Sequence[np.ndarray], gamma_c: float, b: float) -> float:
    """Common rate of a group: the weakest member must decode it."""
    if not len(mus):
        return 0.0
    return float(min(rate_from_eigs(mu, gamma_c, b) for mu in mus))


def group_private_rates(mus: Sequence[np.ndarray], gammas: Sequence[float], b: float) -> np.ndarray:
    return np.array([rate_from_eigs(mu, g, b) for mu, g in zip(mus, gammas)], dtype=float)


# ---------------------------------------------------------------------------
# Network state
# ---------------------------------------------------------------------------

@dataclass
class RateState:
    """Everything the rate and power modules need about one channel drop.

    Attributes
    ----------
    mu : ndarray, shape (K, L)
        Generalised eigenvalues of each user's alignment-block channel.
    groups : list of ndarray
        User indices of every group.
    b : float
        Alignment ratio ``1/(G+L-1)``.
    """

    mu: np.ndarray
    groups: List[np.ndarray]
    b: float
    inputs: SinrInputs
    P_T: float
    P_p_cap: float
    overhead: float = 0.0
    R_min: Optional[np.ndarray] = None
    assignment: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.assignment is None:
            a = np.empty(self.mu.shape[0], dtype=np.int64)
            for g, idx in enumerate(self.groups):
                a[idx] = g
            self.assignment = a
        if self.R_min is None:
            self.R_min = np.zeros(self.G)

    @property
    def G(self) -> int:
        return len(self.groups)

    @property
    def K(self) -> int:
        return self.mu.shape[0]


def resource_share(L: int, G: int) -> float:
    """Share of the supersymbol per alignment block, ``1/(G+L-1)``; unlike
    :func:`alignment_ratio` it also covers the single-AP case."""
    return alignment_ratio(L, G) if L >= 2 else 1.0 / G


def block_noise(L: int, G: int) -> np.ndarray:
    """Post-cancellation noise of one alignment block relative to the raw
    noise: ``G`` on the shared slots, 1 on the dedicated slot."""
    return np.diag(np.r_[np.full(L - 1, float(G)), 1.0])


def build_rate_state(modes: np.ndarray, assignment, inputs: SinrInputs, P_T: float,
                     P_p_cap: Optional[float] = None, overhead: float = 0.0,
                     R_min=None) -> RateState:
    """Assemble a :class:`RateState` from normalised mode matrices.

    ``modes`` has shape ``(K, M, L)``; the first ``L`` photodiodes serve as
    the receiver modes of the alignment schedule.
    """
    modes = np.asarray(modes, dtype=float)
    K, M, L = modes.shape
    if M < L:
        raise RateError("need at least as many receiver modes as APs")
    assignment = np.asarray(assignment, dtype=np.int64)
    G = int(assignment.max()) + 1
    groups = [np.flatnonzero(assignment == g) for g in range(G)]
    if any(len(idx) == 0 for idx in groups):
        raise RateError("empty group")
    R = block_noise(L, G)
    mu = np.array([mode_eigenvalues(modes[k, :L, :], R) for k in range(K)])
    if P_p_cap is None:
        P_p_cap = P_T / G
    R_min = None if R_min is None else np.broadcast_to(np.asarray(R_min, float), (G,)).copy()
    return RateState(mu, groups, resource_share(L, G), inputs, P_T, P_p_cap,
                     overhead, R_min, assignment)


def group_rates(alloc: PowerAllocation, state: RateState, g: int):
    """Return ``(R_c, R_p per member)`` of group ``g``."""
    idx = state.groups[g]
    p = alloc.P_p[idx]
    gc = sinr_common(alloc.P_c[g], p, state.inputs)
    gp = sinr_private_all(p, state.inputs)
    mus = state.mu[idx]
    return group_common_rate(mus, gc, state.b), group_private_rates(mus, gp, state.b)


def group_sum_rates(alloc: PowerAllocation, state: RateState) -> np.ndarray:
    out = np.empty(state.G)
    for g in range(state.G):
        rc, rp = group_rates(alloc, state, g)
        out[g] = rc + rp.sum()
    return out


def network_sum_rate(alloc: PowerAllocation, state: RateState) -> RateReport:
    G = state.G
    R_c = np.zeros(G)
    R_p = np.zeros(state.K)
    user = np.zeros(state.K)
    for g in range(G):
        rc, rp = group_rates(alloc, state, g)
        idx = state.groups[g]
        R_c[g] = rc
        R_p[idx] = rp
        # the common message carries one share of rc per member
        user[idx] = rp + rc / len(idx)
    R_sum_g = R_c + np.array([R_p[idx].sum() for idx in state.groups])
    consumed = float(alloc.P_c.sum() + alloc.P_p.sum() + state.overhead)
    total = float(R_sum_g.sum())
    ee = total / consumed if consumed > 0 else 0.0
    return RateReport(R_c, R_p, R_sum_g, total, consumed, ee, user)
