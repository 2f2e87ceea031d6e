"""Benchmark schemes evaluated on the same channel drop as BIA-RS.

Per-cell schemes see one scalar channel per AP: each user listens with the
photodiode that is strongest towards its serving AP, and every other active
AP adds inter-cell interference on that photodiode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .power_opt import OptimizerConfig, solve_beta_nu_only, solve_max_min, uniform_allocation
from .rates import (RateReport, RateState, SinrInputs, block_noise, build_rate_state,
                    mode_eigenvalues, network_sum_rate, rate_from_eigs, resource_share)


class SchemeId(str, Enum):
    BIA_RS_OPT = "bia-rs-opt"
    BIA_RS_SUBOPT = "bia-rs-subopt"
    BASELINE1 = "baseline1"
    BASELINE2 = "baseline2"
    BIA = "bia"
    RS_PER_CELL = "rs"
    NOMA_PER_CELL = "noma"


ALL_SCHEMES = tuple(SchemeId)


@dataclass(frozen=True)
class BaselineConfig:
    common_fraction: float = 0.5     # fixed common share in Baseline 1 and per-cell RS
    edge_margin_db: float = 3.0      # strongest/second-strongest AP gain margin
    noma_strong_share: float = 0.3   # strong user's share of a NOMA pair
    split_grid: int = 21             # common-share candidates for per-AP optimisation

    def __post_init__(self):
        if not 0.0 <= self.common_fraction <= 1.0:
            raise ValueError("common_fraction must lie in [0, 1]")
        if not 0.0 < self.noma_strong_share < 0.5:
            raise ValueError("the strong NOMA user must get less than half the power")
        if self.split_grid < 2:
            raise ValueError("split_grid must be at least 2")


@dataclass
class Drop:
    """One channel realisation with its grouping.

    ``H`` holds the reference-normalised gains, shape ``(K, M, L)``.
    """

    H: np.ndarray
    assignment: np.ndarray
    inputs: SinrInputs
    P_T: float
    overhead: float = 0.0
    R_min: Optional[np.ndarray] = None
    P_p_cap: Optional[float] = None

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def L(self) -> int:
        return self.H.shape[2]

    def rate_state(self) -> RateState:
        return build_rate_state(self.H, self.assignment, self.inputs, self.P_T,
                                P_p_cap=self.P_p_cap, overhead=self.overhead, R_min=self.R_min)


# ---------------------------------------------------------------------------
# Per-cell helpers
# ---------------------------------------------------------------------------

def ap_gains(H: np.ndarray) -> np.ndarray:
    """Best-photodiode gain of every user towards every AP, shape (K, L)."""
    return H.max(axis=1)


def serving_links(H: np.ndarray):
    """Serving AP of each user and the scalar channel row seen on the
    photodiode used for it."""
    g = ap_gains(H)
    serving = np.argmax(g, axis=1)
    pd = np.argmax(H[np.arange(len(H)), :, serving], axis=1)
    rows = H[np.arange(len(H)), pd, :]
    return serving, rows


def _report(R_c, R_p, R_sum_g, consumed, overhead, user) -> RateReport:
    total = float(np.sum(R_sum_g))
    cons = float(consumed + overhead)
    return RateReport(np.asarray(R_c, float), np.asarray(R_p, float), np.asarray(R_sum_g, float),
                      total, cons, total / cons if cons > 0 else 0.0, np.asarray(user, float))


def rs_cell_rates(s: np.ndarray, noise: np.ndarray, P_c: float, P_p: np.ndarray):
    """RS inside one cell with scalar channels.

    ``s`` is the received signal power per watt and ``noise`` the
    interference-plus-noise power of every member.  Returns ``(R_c, R_p)``.
    """
    P_p = np.asarray(P_p, float)
    tot = P_p.sum()
    gc = s * P_c / (s * tot + noise)
    gp = s * P_p / (s * (tot - P_p) + noise)
    return float(np.min(np.log2(1.0 + gc))), np.log2(1.0 + gp)


def _best_split(s, noise, budget, grid):
    """Common share maximising a cell's RS sum rate with equal privates."""
    best = (-1.0, 0.0, None)
    n = len(s)
    for f in np.linspace(0.0, 1.0, grid):
        P_c = f * budget
        P_p = np.full(n, (budget - P_c) / n)
        rc, rp = rs_cell_rates(s, noise, P_c, P_p)
        if rc + rp.sum() > best[0] + 1e-15:
            best = (rc + rp.sum(), rc, rp, P_c, P_p)
    return best


# ---------------------------------------------------------------------------
# Schemes
# ---------------------------------------------------------------------------

def baseline1_rates(drop: Drop, cfg: BaselineConfig = BaselineConfig()) -> RateReport:
    """BIA-RS with equal group budgets, a fixed common share and equal privates."""
    state = drop.rate_state()
    return network_sum_rate(uniform_allocation(state, cfg.common_fraction), state)


def bia_rs_opt_rates(drop: Drop, opt: OptimizerConfig = OptimizerConfig()) -> RateReport:
    return solve_max_min(drop.rate_state(), opt).report


def bia_rs_subopt_rates(drop: Drop, opt: OptimizerConfig = OptimizerConfig()) -> RateReport:
    return solve_beta_nu_only(drop.rate_state(), opt).report


def bia_rates(drop: Drop) -> RateReport:
    """Classical BIA: every user is its own group, equal powers, no splitting."""
    K, L = drop.K, drop.L
    inp = drop.inputs
    R = block_noise(L, K) if L >= 2 else np.eye(1)
    b = resource_share(L, K)
    P = drop.P_T / K
    gamma = inp.gain * inp.wp2 * P / inp.sigma2
    rates = np.array([rate_from_eigs(mode_eigenvalues(drop.H[k, :L, :], R), gamma, b)
                      for k in range(K)])
    return _report(np.zeros(K), rates, rates, drop.P_T, drop.overhead, rates)


def _cell_noise(rows, serving, ap_power, inp):
    """Interference-plus-noise on each user's serving photodiode."""
    K = len(rows)
    icip = rows ** 2 * ap_power[None, :]
    icip[np.arange(K), serving] = 0.0
    return inp.gain * icip.sum(axis=1) + inp.sigma2


def rs_per_cell_rates(drop: Drop, cfg: BaselineConfig = BaselineConfig()) -> RateReport:
    """RS inside every optical cell with a fixed split; full inter-cell interference."""
    inp = drop.inputs
    serving, rows = serving_links(drop.H)
    L = drop.L
    P_l = drop.P_T / L
    active = np.array([np.any(serving == l) for l in range(L)])
    ap_power = np.where(active, P_l, 0.0)
    noise = _cell_noise(rows, serving, ap_power, inp)
    s = inp.gain * rows[np.arange(drop.K), serving] ** 2
    R_c, R_p, R_sum, user = [], np.zeros(drop.K), [], np.zeros(drop.K)
    for l in range(L):
        idx = np.flatnonzero(serving == l)
        if idx.size == 0:
            continue
        P_c = cfg.common_fraction * P_l
        P_p = np.full(idx.size, (P_l - P_c) / idx.size)
        rc, rp = rs_cell_rates(s[idx], noise[idx], P_c, P_p)
        R_c.append(rc)
        R_p[idx] = rp
        R_sum.append(rc + rp.sum())
        user[idx] = rp + rc / idx.size
    return _report(R_c, R_p, R_sum, ap_power.sum(), drop.overhead, user)


def noma_pair_rates(s_strong, n_strong, s_weak, n_weak, P, strong_share):
    """Two-user power-domain NOMA with SIC at the strong user.

    Returns ``(R_strong, R_weak)``; the weak message is limited by the worse
    of its own SINR and the strong user's SIC stage.
    """
    Ps, Pw = strong_share * P, (1.0 - strong_share) * P
    g_weak = s_weak * Pw / (s_weak * Ps + n_weak)
    g_sic = s_strong * Pw / (s_strong * Ps + n_strong)
    g_strong = s_strong * Ps / n_strong
    return math.log2(1.0 + g_strong), math.log2(1.0 + min(g_weak, g_sic))


def noma_per_cell_rates(drop: Drop, cfg: BaselineConfig = BaselineConfig()) -> RateReport:
    """Per-cell NOMA: users paired strongest-with-weakest, pairs time-shared."""
    inp = drop.inputs
    serving, rows = serving_links(drop.H)
    L = drop.L
    P_l = drop.P_T / L
    active = np.array([np.any(serving == l) for l in range(L)])
    ap_power = np.where(active, P_l, 0.0)
    noise = _cell_noise(rows, serving, ap_power, inp)
    s = inp.gain * rows[np.arange(drop.K), serving] ** 2
    user = np.zeros(drop.K)
    R_sum = []
    for l in range(L):
        idx = np.flatnonzero(serving == l)
        if idx.size == 0:
            continue
        # order by effective channel; ties broken by user index for determinism
        eff = s[idx] / noise[idx]
        order = idx[np.lexsort((idx, -eff))]
        n = len(order)
        slots = []
        for i in range(n // 2):
            slots.append((order[i], order[n - 1 - i]))
        if n % 2:
            slots.append((order[n // 2],))
        share = 1.0 / len(slots)
        for slot in slots:
            if len(slot) == 1:
                k = slot[0]
                user[k] = share * math.log2(1.0 + s[k] * P_l / noise[k])
            else:
                ks, kw = slot
                rs_, rw = noma_pair_rates(s[ks], noise[ks], s[kw], noise[kw], P_l,
                                          cfg.noma_strong_share)
                user[ks], user[kw] = share * rs_, share * rw
        R_sum.append(user[idx].sum())
    return _report(np.zeros(len(R_sum)), user, R_sum, ap_power.sum(), drop.overhead, user)


def classify_edge(H: np.ndarray, margin_db: float) -> np.ndarray:
    """True for users whose two strongest APs are within ``margin_db``."""
    g = np.sort(ap_gains(H), axis=1)[:, ::-1]
    if g.shape[1] < 2:
        return np.zeros(len(H), dtype=bool)
    ratio = g[:, 0] / np.maximum(g[:, 1], 1e-300)
    return ratio < 10 ** (margin_db / 10)


@dataclass
class RsCluster:
    """One RS cluster of Baseline 2 with its chosen powers.

    ``s`` is the received power per watt and ``noise`` the interference plus
    noise of every member.
    """

    users: np.ndarray
    s: np.ndarray
    noise: np.ndarray
    P_c: float
    P_p: np.ndarray
    comp: bool = False


def baseline2_clusters(drop: Drop, cfg: BaselineConfig = BaselineConfig()):
    """Clusters of Baseline 2 and the power the whole network radiates.

    Cell-centre users get per-cell RS; edge users are served jointly by
    every AP (CoMP) with RS among them.  Every AP gives the CoMP group the
    share ``K_edge / K`` of its power.  The common share of each cell and of
    the CoMP group is picked by a grid search on that cluster's sum rate.
    """
    inp = drop.inputs
    K, L = drop.K, drop.L
    edge = classify_edge(drop.H, cfg.edge_margin_db) if L > 1 else np.zeros(K, dtype=bool)
    serving, rows = serving_links(drop.H)
    P_l = drop.P_T / L
    e = edge.sum() / K
    centre_active = np.array([np.any((serving == l) & ~edge) for l in range(L)])
    cell_power = np.where(centre_active, (1.0 - e) * P_l, 0.0)
    comp_power = e * drop.P_T  # spread evenly over the APs

    clusters: List[RsCluster] = []
    # centre users: interference from other cells and from the CoMP stream
    noise_c = _cell_noise(rows, serving, cell_power, inp) + \
        inp.gain * (rows ** 2).sum(axis=1) * comp_power / L
    s = inp.gain * rows[np.arange(K), serving] ** 2
    for l in range(L):
        idx = np.flatnonzero((serving == l) & ~edge)
        if idx.size == 0:
            continue
        _, _, _, P_c, P_p = _best_split(s[idx], noise_c[idx], cell_power[l], cfg.split_grid)
        clusters.append(RsCluster(idx, s[idx], noise_c[idx], P_c, P_p))

    idx = np.flatnonzero(edge)
    if idx.size:
        # amplitude sum over the APs on the photodiode that maximises it
        amp = drop.H[idx].sum(axis=2)                   # (Ke, M)
        pd = np.argmax(amp, axis=1)
        s_e = inp.gain * amp[np.arange(idx.size), pd] ** 2 / L
        row_e = drop.H[idx, pd, :]
        noise_e = inp.gain * (row_e ** 2 * cell_power[None, :]).sum(axis=1) + inp.sigma2
        _, _, _, P_c, P_p = _best_split(s_e, noise_e, comp_power, cfg.split_grid)
        clusters.append(RsCluster(idx, s_e, noise_e, P_c, P_p, comp=True))
    radiated = cell_power.sum() + (comp_power if idx.size else 0.0)
    return clusters, radiated


def baseline2_rates(drop: Drop, cfg: BaselineConfig = BaselineConfig()) -> RateReport:
    """Per-cell RS for centre users plus a CoMP RS group for edge users."""
    clusters, radiated = baseline2_clusters(drop, cfg)
    R_c, R_sum = [], []
    R_p = np.zeros(drop.K)
    user = np.zeros(drop.K)
    for c in clusters:
        rc, rp = rs_cell_rates(c.s, c.noise, c.P_c, c.P_p)
        R_c.append(rc)
        R_p[c.users] = rp
        R_sum.append(rc + rp.sum())
        user[c.users] = rp + rc / c.users.size
    return _report(R_c, R_p, R_sum, radiated, drop.overhead, user)


def evaluate(scheme, drop: Drop, opt: OptimizerConfig = OptimizerConfig(),
             cfg: BaselineConfig = BaselineConfig()) -> RateReport:
    scheme = SchemeId(scheme)
    if scheme is SchemeId.BIA_RS_OPT:
        return bia_rs_opt_rates(drop, opt)
    if scheme is SchemeId.BIA_RS_SUBOPT:
        return bia_rs_subopt_rates(drop, opt)
    if scheme is SchemeId.BASELINE1:
        return baseline1_rates(drop, cfg)
    if scheme is SchemeId.BASELINE2:
        return baseline2_rates(drop, cfg)
    if scheme is SchemeId.BIA:
        return bia_rates(drop)
    if scheme is SchemeId.RS_PER_CELL:
        return rs_per_cell_rates(drop, cfg)
    return noma_per_cell_rates(drop, cfg)
