"""Max-min power allocation for BIA-RS.

The program maximises the smallest group sum rate under per-group budgets,
private-message caps, quality-of-service floors and a shared total budget.
A Dinkelbach-type outer loop tracks the parameter ``Upsilon``; inside it the
Lagrangian is split per group and the four multiplier families

* ``beta``  private-message caps,
* ``nu``    group budgets,
* ``lam``   the max-min epigraph (lives on the simplex),
* ``xi``    rate floors,

are updated by projected gradient steps.  Powers are handled internally as
fractions of ``P_T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .rates import PowerAllocation, RateReport, RateState, group_sum_rates, network_sum_rate

LN2 = math.log(2.0)


class InfeasibleError(RuntimeError):
    """The rate floors cannot be met even with the full budget."""

    def __init__(self, group: int, achievable: float, target: float):
        super().__init__(f"infeasible quality-of-service target: group {group} "
                         f"reaches {achievable:.4g} < {target:.4g} bits/s/Hz")
        self.group = group


@dataclass(frozen=True)
class OptimizerConfig:
    """Solver settings.

    Step sizes decay as ``eps / sqrt(t)``.  ``eps_beta`` and ``eps_nu`` are
    relative to the marginal utility at the starting point, ``eps_lam`` and
    ``eps_xi`` act on rates in bits/s/Hz and ``eps_budget`` is the fraction
    of the Newton step taken when group budgets are rebalanced.
    """

    eps_beta: float = 0.5
    eps_nu: float = 0.5
    eps_lam: float = 0.1
    eps_xi: float = 0.1
    eps_budget: float = 0.7
    max_outer: int = 25
    inner_iters: int = 4
    f_tol: float = 1e-6
    multiplier_tol: float = 1e-6
    power_tol: float = 1e-9
    init_multiplier: float = 0.1
    common_fraction: float = 0.5
    price_consumed_power: bool = False
    line_points: int = 17
    line_rounds: int = 7
    patience: int = 4

    def __post_init__(self):
        for name in ("eps_beta", "eps_nu", "eps_lam", "eps_xi", "eps_budget",
                     "f_tol", "multiplier_tol", "power_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be at least 1")
        if not 0.0 <= self.common_fraction <= 1.0:
            raise ValueError("common_fraction must lie in [0, 1]")


@dataclass
class Multipliers:
    lam: np.ndarray
    xi: np.ndarray
    nu: np.ndarray
    beta: np.ndarray   # indexed by user

    def copy(self) -> "Multipliers":
        return Multipliers(self.lam.copy(), self.xi.copy(), self.nu.copy(), self.beta.copy())


@dataclass
class Solution:
    alloc: PowerAllocation
    upsilon: float
    delta: float
    f_value: float
    report: RateReport
    multipliers: Multipliers
    trace: List[dict] = field(default_factory=list)
    operations: int = 0
    converged: bool = False


class OpCounter:
    """Counts stationarity solves, one per power variable visited."""

    def __init__(self):
        self.count = 0


# ---------------------------------------------------------------------------
# Group-level evaluation
# ---------------------------------------------------------------------------

class _Group:
    """Normalised view of one group: powers are fractions of ``P_T``."""

    def __init__(self, state: RateState, g: int):
        inp = state.inputs
        self.idx = state.groups[g]
        self.mu = state.mu[self.idx]                       # (Kg, L)
        self.b = state.b
        self.a = inp.gain * state.P_T / inp.sigma2         # SNR per unit fraction
        self.wc2 = inp.wc2
        self.wp2 = inp.wp2
        self.cap = state.P_p_cap / state.P_T
        self.Kg = len(self.idx)

    def sum_rate(self, pc, pp):
        """Exact group sum rate; ``pc`` (n,) and ``pp`` (n, Kg) batches."""
        pc = np.atleast_1d(np.asarray(pc, float))
        pp = np.atleast_2d(np.asarray(pp, float))
        S = pp.sum(axis=1)
        gc = self.a * self.wc2 * pc / (self.a * self.wp2 * S + 1.0)
        gp = self.a * self.wp2 * pp / (self.a * self.wp2 * (S[:, None] - pp) + 1.0)
        rc = np.log1p(gc[:, None, None] * self.mu[None]).sum(axis=2).min(axis=1)
        rp = np.log1p(gp[:, :, None] * self.mu[None]).sum(axis=2).sum(axis=1)
        return self.b * (rc + rp) / LN2

    # literal stationarity with the other privates frozen at the cap
    def frozen_private_slope(self, k: int, budget: float) -> float:
        interf = min((self.Kg - 1) * self.cap, budget)
        return self.a * self.wp2 / (self.a * self.wp2 * interf + 1.0)

    def frozen_common_slope(self, budget: float) -> float:
        interf = min(self.Kg * self.cap, budget)
        return self.a * self.wc2 / (self.a * self.wp2 * interf + 1.0)


def stationary_power(mu: np.ndarray, slope: float, b: float, weight: float, price: float,
                     upper: float, tol: float = 1e-13):
    """Root of ``weight * d/dP[b sum log2(1 + slope P mu)] = price`` on ``[0, upper]``.

    ``mu`` may be a matrix, in which case the rate is the minimum over its
    rows (the common message).  The derivative is nonincreasing, so the
    boundary rules apply: a nonpositive derivative at zero gives zero and a
    nonnegative one at ``upper`` gives ``upper``.
    """
    mu = np.atleast_2d(mu)

    def deriv(P):
        r = np.log1p(slope * P * mu).sum(axis=1)
        k = int(np.argmin(r))
        return weight * slope * b * float(np.sum(mu[k] / (1.0 + slope * P * mu[k]))) / LN2 - price

    if deriv(0.0) <= 0.0:
        return 0.0
    if deriv(upper) >= 0.0:
        return upper
    lo, hi = 0.0, upper
    while hi - lo > tol * max(upper, 1e-300):
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _line_max(phi, upper: float, points: int, rounds: int) -> float:
    """Maximise a scalar function on ``[0, upper]`` by repeated grid zooming."""
    lo, hi = 0.0, upper
    best_x, best_v = 0.0, -np.inf
    for _ in range(rounds):
        xs = np.linspace(lo, hi, points)
        vs = phi(xs)
        j = int(np.argmax(vs))
        if vs[j] > best_v:
            best_x, best_v = float(xs[j]), float(vs[j])
        step = (hi - lo) / (points - 1)
        lo, hi = max(0.0, xs[j] - step), min(upper, xs[j] + step)
    return best_x


# ---------------------------------------------------------------------------
# Inner step
# ---------------------------------------------------------------------------

def inner_lagrangian_step(grp: _Group, pc: float, pp: np.ndarray, budget: float,
                          lam: float, xi: float, nu: float, beta: np.ndarray, delta: float,
                          cfg: OptimizerConfig, scale: float, t: int,
                          coupling: str = "exact", counter: Optional[OpCounter] = None):
    """One Gauss-Seidel sweep over a group's powers plus the ``beta``/``nu`` update.

    ``coupling="frozen"`` solves each stationarity condition as a monotone
    root with the other private messages held at their cap, then moves
    ``beta`` and ``nu`` by projected gradient steps.

    ``coupling="exact"`` works on the budget surface instead: each power is
    set by a line search on the true group rate while the other messages
    absorb the remainder of the budget proportionally, and ``nu``/``beta``
    are recovered from the stationarity and slackness conditions at the new
    point.

    Returns ``(pc, pp, beta, nu)``.
    """
    if coupling == "frozen":
        return _frozen_step(grp, pc, pp, budget, lam, xi, nu, beta, delta, cfg, scale, t, counter)
    if coupling != "exact":
        raise ValueError(f"unknown coupling {coupling!r}")
    w = lam + xi
    x = np.r_[pp, pc].astype(float)
    caps = np.r_[np.full(grp.Kg, min(grp.cap, budget)), budget]
    for j in range(grp.Kg + 1):
        def phi(v, j=j):
            return grp.sum_rate(*_split(_refill(x, j, v, budget, caps)))
        x = _refill(x, j, np.array([_line_max(phi, caps[j], cfg.line_points, cfg.line_rounds)]),
                    budget, caps)[0]
        if counter is not None:
            counter.count += 1
    pp, pc = x[:-1], float(x[-1])
    grad = w * group_gradient(grp, pc, pp)
    # budget price: marginal rate of the whole group along its own split
    used = x.sum()
    nu = max(float(x @ grad) / used, 0.0) if used > 0 else float(max(grad.max(), 0.0))
    nu = max(nu - delta * lam, 0.0)
    at_cap = x[:-1] >= caps[:-1] - 1e-9 * budget
    beta = np.where(at_cap, np.maximum(grad[:-1] - delta * lam - nu, 0.0), 0.0)
    return pc, pp, beta, nu


def _split(X):
    return X[:, -1], X[:, :-1]


def _refill(x, j, v, budget, caps):
    """Set coordinate ``j`` to each value of ``v`` and rescale the others so
    the group spends ``budget`` when the caps allow it."""
    v = np.atleast_1d(v)
    X = np.repeat(x[None, :], len(v), axis=0)
    X[:, j] = v
    others = np.ones(len(x), dtype=bool)
    others[j] = False
    rest = x[others]
    rest_caps = caps[others]
    room = budget - v
    tot = rest.sum()
    if tot > 0:
        scaled = rest[None, :] * (room / tot)[:, None]
    else:
        # nothing to rescale: pour the remainder into the common message
        scaled = np.zeros((len(v), len(rest)))
        scaled[:, -1] = room
    X[:, others] = np.clip(scaled, 0.0, rest_caps[None, :])
    return X


def group_gradient(grp: _Group, pc: float, pp: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the group rate, privates first."""
    x = np.r_[pp, pc]
    n = len(x)
    h = rel * max(x.sum(), 1e-12)
    X = np.repeat(x[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    X[idx, idx] += h
    X[n + idx, idx] -= h
    lo = X[n + idx, idx] < 0
    X[n + idx[lo], idx[lo]] = 0.0
    f = grp.sum_rate(X[:, -1], X[:, :-1])
    step = h + np.where(lo, x, h)
    return (f[:n] - f[n:]) / step


def _frozen_step(grp, pc, pp, budget, lam, xi, nu, beta, delta, cfg, scale, t, counter):
    w = lam + xi
    base = delta * lam + nu
    pp = pp.copy()
    upper_p = min(grp.cap, budget)
    for k in range(grp.Kg):
        pp[k] = stationary_power(grp.mu[k], grp.frozen_private_slope(k, budget), grp.b,
                                 w, base + beta[k], upper_p)
        if counter is not None:
            counter.count += 1
    pc = stationary_power(grp.mu, grp.frozen_common_slope(budget), grp.b, w, base, budget)
    if counter is not None:
        counter.count += 1
    step = scale / math.sqrt(t)
    beta = np.maximum(beta - cfg.eps_beta * step * (grp.cap - pp) / max(grp.cap, 1e-300), 0.0)
    nu = max(nu - cfg.eps_nu * step * (budget - pc - pp.sum()) / max(budget, 1e-300), 0.0)
    return pc, pp, beta, nu


def project_group(pc: float, pp: np.ndarray, budget: float, cap: float):
    """Clip to the box and scale into the group budget."""
    pp = np.clip(pp, 0.0, cap)
    pc = max(pc, 0.0)
    tot = pc + pp.sum()
    if tot > budget:
        f = budget / tot
        pc, pp = pc * f, pp * f
        # guard against rounding above the budget
        over = pc + pp.sum() - budget
        if over > 0:
            pc = max(0.0, pc - over)
    return pc, pp


def rescale_group(pc: float, pp: np.ndarray, old: float, new: float, cap: float):
    """Carry a group's split over to a new budget."""
    f = new / old if old > 0 else 0.0
    if old <= 0:
        return project_group(new, np.zeros_like(pp), new, cap)
    return project_group(pc * f, pp * f, new, cap)


def project_simplex(v: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


# ---------------------------------------------------------------------------
# Allocations
# ---------------------------------------------------------------------------

def uniform_allocation(state: RateState, common_fraction: float = 0.5) -> PowerAllocation:
    """Equal group budgets, a fixed common share and equal private powers."""
    G = state.G
    budget = state.P_T / G
    P_c = np.full(G, common_fraction * budget)
    P_p = np.zeros(state.K)
    for g, idx in enumerate(state.groups):
        P_p[idx] = min((budget - P_c[g]) / len(idx), state.P_p_cap)
    return PowerAllocation(P_c, P_p, np.full(G, budget), state.P_p_cap, state.P_T)


def parametric_value(alloc: PowerAllocation, upsilon, state: RateState) -> float:
    """``min_g (R_sum^g - Upsilon_g)``."""
    return float(np.min(group_sum_rates(alloc, state) - np.asarray(upsilon)))


def _to_alloc(state, pcs, pps, budgets) -> PowerAllocation:
    P_p = np.zeros(state.K)
    for g, idx in enumerate(state.groups):
        P_p[idx] = pps[g] * state.P_T
    return PowerAllocation(np.asarray(pcs) * state.P_T, P_p, np.asarray(budgets) * state.P_T,
                           state.P_p_cap, state.P_T)


def _from_alloc(state, alloc):
    pcs = alloc.P_c / state.P_T
    pps = [alloc.P_p[idx] / state.P_T for idx in state.groups]
    return pcs.astype(float).copy(), [p.astype(float).copy() for p in pps], alloc.P_g_max / state.P_T


def _marginal_scale(grp: _Group, pc: float, pp: np.ndarray, w: float) -> float:
    # marginal group rate per unit power when all messages scale together
    h = 1e-6 * max(pc + pp.sum(), 1e-12)
    f0 = grp.sum_rate(pc, pp[None, :])[0]
    f1 = grp.sum_rate(pc * (1 + 1e-6), (pp * (1 + 1e-6))[None, :])[0]
    return max(w * (f1 - f0) / h, 1e-12)


def check_feasibility(state: RateState, cfg: OptimizerConfig) -> None:
    """Raise when some group misses its rate floor even with the whole budget."""
    if not np.any(state.R_min > 0):
        return
    for g in range(state.G):
        grp = _Group(state, g)
        best = _best_single_group(grp, 1.0)
        if best < state.R_min[g] - 1e-12:
            raise InfeasibleError(g, best, float(state.R_min[g]))


def _best_single_group(grp: _Group, budget: float, n: int = 201) -> float:
    # all power on the common message or on one private message
    best = float(grp.sum_rate(budget, np.zeros((1, grp.Kg)))[0])
    for k in range(grp.Kg):
        pp = np.zeros((1, grp.Kg))
        pp[0, k] = min(budget, grp.cap)
        xs = np.linspace(0.0, 1.0, n)
        pc = budget - pp[0, k] * xs
        best = max(best, float(grp.sum_rate(pc, pp * xs[:, None]).max()))
    return best


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def _objective(rates: np.ndarray):
    return float(rates.min()), float(rates.sum())


def solve_beta_nu_only(state: RateState, cfg: OptimizerConfig = OptimizerConfig(),
                       counter: Optional[OpCounter] = None) -> Solution:
    """Inner loop alone: ``lam`` and ``xi`` frozen at their initial values,
    equal group budgets, frozen-interference stationarity."""
    counter = counter or OpCounter()
    start = uniform_allocation(state, cfg.common_fraction)
    pcs, pps, budgets = _from_alloc(state, start)
    G = state.G
    m0 = cfg.init_multiplier
    lam = np.full(G, m0)
    xi = np.full(G, m0)
    rates0 = group_sum_rates(start, state)
    delta0 = float(np.min(rates0 / budgets)) if cfg.price_consumed_power else 0.0
    groups = [_Group(state, g) for g in range(G)]
    scales = [_marginal_scale(groups[g], pcs[g], pps[g], lam[g] + xi[g]) for g in range(G)]
    nu = np.array([m0 * s for s in scales])
    betas = [np.full(grp.Kg, m0 * s) for grp, s in zip(groups, scales)]
    trace = [_trace_row(0, start, state, rates0, 0.0, rates0.min())]
    cur = start
    for t in range(1, cfg.inner_iters + 1):
        for g, grp in enumerate(groups):
            pc, pp, betas[g], nu[g] = inner_lagrangian_step(
                grp, pcs[g], pps[g], budgets[g], lam[g], xi[g], nu[g], betas[g], delta0,
                cfg, scales[g], t, coupling="frozen", counter=counter)
            pcs[g], pps[g] = pc, pp
        proj = [project_group(pcs[g], pps[g], budgets[g], groups[g].cap) for g in range(G)]
        cur = _to_alloc(state, [p[0] for p in proj], [p[1] for p in proj], budgets)
        rates = group_sum_rates(cur, state)
        trace.append(_trace_row(t, cur, state, rates, 0.0, rates.min()))
    report = network_sum_rate(cur, state)
    mult = Multipliers(lam, xi, nu, _flat_beta(state, betas))
    return Solution(cur, float(report.R_sum_g.min()), float(delta0), 0.0, report, mult,
                    trace, counter.count, True)


def _flat_beta(state, betas):
    out = np.zeros(state.K)
    for g, idx in enumerate(state.groups):
        out[idx] = betas[g]
    return out


def _trace_row(it, alloc, state, rates, upsilon, f):
    res = alloc.residuals(state.groups)
    row = {"iteration": it, "upsilon": float(upsilon), "f": float(f),
           "sum_rate": float(rates.sum()), "min_rate": float(rates.min())}
    for g, r in enumerate(rates):
        row[f"R_sum_{g}"] = float(r)
    row.update({f"res_{k}": v for k, v in res.items()})
    return row


def solve_max_min(state: RateState, cfg: OptimizerConfig = OptimizerConfig(),
                  counter: Optional[OpCounter] = None) -> Solution:
    """Four-multiplier max-min solver with Dinkelbach acceptance.

    Starts from the uniform split and only accepts iterates that raise the
    minimum group rate (ties broken by the sum rate), so the returned point
    is never worse than the start.  ``nu`` and ``beta`` are carried per unit
    of group weight ``lam + xi``; this keeps a group whose weight has dropped
    to zero from abandoning its budget, so ``lam`` steers the groups only
    through the shared budget.
    """
    check_feasibility(state, cfg)
    counter = counter or OpCounter()
    G = state.G
    start = uniform_allocation(state, cfg.common_fraction)
    pcs, pps, budgets = _from_alloc(state, start)
    groups = [_Group(state, g) for g in range(G)]
    m0 = cfg.init_multiplier
    lam = np.full(G, 1.0 / G)
    xi = np.full(G, m0)
    scales = [_marginal_scale(groups[g], pcs[g], pps[g], 1.0) for g in range(G)]
    nu_hat = np.array([m0 * s for s in scales])
    beta_hat = [np.full(grp.Kg, m0 * s) for grp, s in zip(groups, scales)]

    rates = group_sum_rates(start, state)
    best = (start, rates.copy(), _objective(rates))
    consumed = budgets if not cfg.price_consumed_power else start.group_power(state.groups) / state.P_T
    delta = float(np.min(rates / consumed))
    upsilon = delta * consumed
    trace = [_trace_row(0, start, state, rates, float(upsilon.min()), 0.0)]
    f = 0.0
    converged = False
    stall = 0
    t_inner = 0
    for t in range(1, cfg.max_outer + 1):
        denom = lam.sum()
        xi_t = xi * denom
        price_delta = delta if cfg.price_consumed_power else 0.0
        for _ in range(cfg.inner_iters):
            t_inner += 1
            for g, grp in enumerate(groups):
                w = max(lam[g] + xi_t[g], 1e-12)
                pc, pp, bt, nt = inner_lagrangian_step(
                    grp, pcs[g], pps[g], budgets[g], lam[g], xi_t[g], w * nu_hat[g],
                    w * beta_hat[g], price_delta, cfg, w * scales[g], t_inner,
                    coupling="exact", counter=counter)
                pcs[g], pps[g] = project_group(pc, pp, budgets[g], grp.cap)
                nu_hat[g], beta_hat[g] = nt / w, bt / w
        cur = _to_alloc(state, pcs, pps, budgets)
        rates = group_sum_rates(cur, state)
        f = float(np.min(rates - upsilon))
        gamma = f
        trace.append(_trace_row(t, cur, state, rates, float(upsilon.min()), f))
        obj = _objective(rates)
        gain = obj[0] - best[2][0]
        if gain > 1e-12 or (abs(gain) <= 1e-12 and obj[1] > best[2][1]):
            best = (cur, rates.copy(), obj)
        stall = stall + 1 if gain <= cfg.f_tol * max(1.0, best[2][0]) else 0

        # max-min multiplier and rate floors
        resid = rates - upsilon - gamma
        lam_new = np.maximum(lam - cfg.eps_lam / math.sqrt(t) * resid, 0.0)
        if lam_new.sum() <= 0:
            lam_new = np.isclose(resid, 0.0, atol=1e-12).astype(float)
        lam_new = lam_new / lam_new.sum()
        lam_change = float(np.abs(lam_new - lam).max())
        lam = lam_new
        xi = np.maximum(xi - cfg.eps_xi / math.sqrt(t) * (rates - state.R_min), 0.0)

        # shared budget: damped Newton move towards equal group rates, using
        # the recovered budget prices as marginal rates
        if G > 1:
            m = np.maximum(nu_hat, 1e-9 * max(rates.max(), 1e-12))
            level = np.sum(rates / m) / np.sum(1.0 / m)
            step = cfg.eps_budget * (level - rates) / m
            new_budgets = budgets + np.clip(step, -0.5 * budgets, budgets)
            new_budgets /= new_budgets.sum()
            for g, grp in enumerate(groups):
                pcs[g], pps[g] = rescale_group(pcs[g], pps[g], budgets[g], new_budgets[g], grp.cap)
            budgets = new_budgets

        consumed = budgets if not cfg.price_consumed_power else \
            np.array([pcs[g] + pps[g].sum() for g in range(G)])
        delta = float(np.min(rates / np.maximum(consumed, 1e-300)))
        upsilon = delta * consumed
        if (abs(f) < cfg.f_tol and lam_change < cfg.multiplier_tol) or stall >= cfg.patience:
            converged = True
            break

    alloc, rates, _ = best
    report = network_sum_rate(alloc, state)
    # Dinkelbach quantities of the returned point, not of the last iterate
    consumed = alloc.P_g_max / state.P_T if not cfg.price_consumed_power else \
        alloc.group_power(state.groups) / state.P_T
    delta = float(np.min(rates / np.maximum(consumed, 1e-300)))
    f = float(np.min(rates - delta * consumed))
    nu = nu_hat * (lam + xi)
    beta = _flat_beta(state, [b * (lam[g] + xi[g]) for g, b in enumerate(beta_hat)])
    mult = Multipliers(lam, xi, nu, beta)
    return Solution(alloc, float(rates.min()), float(delta), float(f), report, mult, trace,
                    counter.count, converged)
