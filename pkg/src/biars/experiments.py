"""Monte Carlo sweeps, BER simulation and convergence traces.

Every drop is an independent work unit seeded from ``(seed, drop)``, so the
same user positions and blockage draws are reused across the points of a
sweep.  Results are merged in task order, which keeps serial and parallel
runs identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.stats

from .baselines import (ALL_SCHEMES, BaselineConfig, Drop, SchemeId, _cell_noise,
                        baseline2_clusters, evaluate, serving_links)
from .grouping import GroupMap, choose_groups
from .power_opt import (OptimizerConfig, Solution, solve_beta_nu_only, solve_max_min,
                        uniform_allocation)
from .rates import (RateReport, SinrInputs, block_noise, mode_eigenvalues, network_sum_rate,
                    sinr_noise)
from .scenario import (ScenarioConfig, apply_blockage, build_channel_tensor, noise_variance,
                       random_user_positions, reference_gain)

SCHEMA_VERSION = 1
AXES = ("snr_db", "users", "blockage_p", "iterations", "pam_order")
RATE_METRICS = ("sum_rate", "ee", "min_user_rate")
BIA_RS_FAMILY = (SchemeId.BIA_RS_OPT, SchemeId.BIA_RS_SUBOPT, SchemeId.BASELINE1)


class ExperimentError(ValueError):
    """An experiment description that cannot be run."""


@dataclass
class ExperimentSpec:
    """One sweep.

    Parameters held fixed while ``axis`` varies take the values of the
    matching fields (``snr_db``, ``n_users``, ``blockage_p``).
    """

    name: str
    axis: str
    values: Sequence[float]
    schemes: Sequence[str] = tuple(s.value for s in ALL_SCHEMES)
    drops: int = 100
    seed: int = 0
    snr_db: float = 30.0
    n_users: int = 20
    blockage_p: float = 0.0
    d_th: float = 2.0
    G_max: Optional[int] = None
    group_seed: int = 0             # K-means initialisation offset
    overhead_per_ap: float = 0.0
    pam_order: int = 2
    kind: str = "rate"              # "rate", "ber" or "trace"
    min_errors: int = 100
    max_symbols: int = 2_000_000
    min_group_rate: float = 0.0     # rate floor per group, bits/s/Hz

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        self.schemes = [SchemeId(s).value for s in self.schemes]
        self.validate()

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ExperimentError(f"unknown sweep axis {self.axis!r}")
        if self.min_group_rate < 0:
            raise ExperimentError("min_group_rate must be nonnegative")
        if self.drops < 1:
            raise ExperimentError("drops must be at least 1")
        if not self.values:
            raise ExperimentError("no axis values")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ExperimentError("axis values must be strictly increasing")
        if self.kind not in ("rate", "ber", "trace"):
            raise ExperimentError(f"unknown experiment kind {self.kind!r}")
        if self.kind == "trace" or self.axis == "iterations":
            if self.kind != "trace" or self.axis != "iterations":
                raise ExperimentError("the iterations axis belongs to convergence traces")
            if any(SchemeId(s) not in BIA_RS_FAMILY for s in self.schemes):
                raise ExperimentError("convergence traces need BIA-RS schemes")
        if self.axis == "pam_order" and self.kind != "ber":
            raise ExperimentError("the pam_order axis needs a BER experiment")
        if self.kind == "ber" and self.axis not in ("snr_db", "pam_order"):
            raise ExperimentError("BER sweeps run over snr_db or pam_order")
        orders = self.values if self.axis == "pam_order" else [self.pam_order]
        for n in orders:
            if n < 2 or int(n) != n or int(n) & (int(n) - 1):
                raise ExperimentError(f"PAM order {n} is not a power of two")
        if self.axis == "users" and any(v < 1 or int(v) != v for v in self.values):
            raise ExperimentError("user counts must be positive integers")
        if self.axis == "blockage_p" and any(not 0 <= v <= 1 for v in self.values):
            raise ExperimentError("blockage probabilities must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Result tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    scheme: str
    axis: float
    metric: str
    mean: float
    stderr: float
    drops: int


@dataclass
class ResultTable:
    name: str
    axis_name: str
    rows: List[ResultRow] = field(default_factory=list)

    HEADER = ("scheme", "axis", "metric", "mean", "stderr", "drops")

    def add(self, scheme, axis, metric, samples) -> None:
        x = np.asarray(samples, dtype=float)
        n = x.size
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        self.rows.append(ResultRow(str(scheme), float(axis), metric, float(x.mean()), se, n))

    def select(self, scheme: str, metric: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Axis values, means and standard errors of one curve."""
        r = [row for row in self.rows if row.scheme == scheme and row.metric == metric]
        return (np.array([x.axis for x in r]), np.array([x.mean for x in r]),
                np.array([x.stderr for x in r]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for r in self.rows:
            w.writerow([r.scheme, repr(r.axis), r.metric, repr(r.mean), repr(r.stderr), r.drops])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, "name": self.name,
                           "axis": self.axis_name,
                           "rows": [asdict(r) for r in self.rows]}, indent=1)

    def write(self, directory) -> Tuple[str, str]:
        import os
        os.makedirs(directory, exist_ok=True)
        paths = (os.path.join(directory, f"{self.name}.csv"),
                 os.path.join(directory, f"{self.name}.json"))
        for p, text in zip(paths, (self.to_csv(), self.to_json())):
            with open(p, "w", newline="") as fh:
                fh.write(text)
        return paths

    @classmethod
    def from_csv(cls, text: str, name: str = "table", axis_name: str = "axis") -> "ResultTable":
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != cls.HEADER:
            raise ExperimentError("unexpected CSV header")
        t = cls(name, axis_name)
        for s, a, m, mu, se, n in rows[1:]:
            t.rows.append(ResultRow(s, float(a), m, float(mu), float(se), int(n)))
        return t


# ---------------------------------------------------------------------------
# Drops
# ---------------------------------------------------------------------------

def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def drop_noise(scenario: ScenarioConfig, snr_db: float) -> float:
    """Noise variance in the units of reference-normalised channels."""
    P_T, L = scenario.total_power, scenario.n_aps
    zeta = scenario.receiver.responsivity
    if scenario.noise.snr_target_mode:
        return sinr_noise(snr_db, P_T, L, scenario.rho, zeta)
    # physical noise, expressed as the SNR it leaves on the reference link
    ref = reference_gain(scenario)
    sigma2 = noise_variance(scenario.noise, ref, rho=scenario.rho, responsivity=zeta)
    snr = (scenario.rho * zeta * ref) ** 2 / sigma2
    return sinr_noise(10 * math.log10(snr), P_T, L, scenario.rho, zeta)


def make_drop(scenario: ScenarioConfig, n_users: int, snr_db: float, seed: int, drop: int,
              blockage_p: float = 0.0, d_th: float = 2.0, G_max: Optional[int] = None,
              overhead_per_ap: float = 0.0, group_seed: int = 0,
              min_group_rate: float = 0.0) -> Tuple[Drop, GroupMap]:
    """Draw user positions, channels, blockage and groups for one drop.

    The position and blockage streams depend only on ``(seed, drop)``;
    blockage masks are therefore nested as ``blockage_p`` grows.
    """
    rng = _rng(seed, drop, 0)
    xy = random_user_positions(scenario, n_users, rng)
    tensor, _ = build_channel_tensor(scenario, xy, rng)
    tensor = apply_blockage(tensor, blockage_p, _rng(seed, drop, 1))
    L = scenario.n_aps
    gm = choose_groups(xy, L, d_th, seed=group_seed + drop, G_max=G_max)
    inputs = SinrInputs(sigma2=drop_noise(scenario, snr_db), rho=scenario.rho,
                        zeta=scenario.receiver.responsivity)
    H = tensor.gains / reference_gain(scenario)
    R_min = np.full(gm.G, float(min_group_rate)) if min_group_rate > 0 else None
    return Drop(H, gm.assignment, inputs, scenario.total_power,
                overhead=overhead_per_ap * L, R_min=R_min), gm


def energy_efficiency(report: RateReport, consumed: Optional[float] = None) -> float:
    """Sum rate per consumed watt; ``consumed`` defaults to the report's own
    figure (message powers plus circuit overhead)."""
    c = report.consumed if consumed is None else consumed
    if not c > 0:
        raise ExperimentError("consumed power must be positive")
    return report.R_total / c


def _point(spec: ExperimentSpec, value: float):
    kw = dict(n_users=spec.n_users, snr_db=spec.snr_db, blockage_p=spec.blockage_p)
    key = {"users": "n_users", "snr_db": "snr_db", "blockage_p": "blockage_p"}.get(spec.axis)
    if key is not None:
        kw[key] = int(value) if key == "n_users" else value
    return kw


def _rate_task(args):
    spec, scenario, opt, bcfg, value, d = args
    drop, _ = make_drop(scenario, seed=spec.seed, drop=d, d_th=spec.d_th, G_max=spec.G_max,
                        overhead_per_ap=spec.overhead_per_ap, group_seed=spec.group_seed,
                        min_group_rate=spec.min_group_rate, **_point(spec, value))
    out = {}
    for s in spec.schemes:
        rep = evaluate(s, drop, opt, bcfg)
        user = rep.user_rates if rep.user_rates is not None else rep.R_p
        out[s] = (rep.R_total, energy_efficiency(rep), float(np.min(user)))
    return out


def _map(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def run_sweep(spec: ExperimentSpec, scenario: Optional[ScenarioConfig] = None,
              opt: Optional[OptimizerConfig] = None, bcfg: Optional[BaselineConfig] = None,
              threads: int = 1) -> ResultTable:
    """Mean and standard error of every rate metric at every axis value."""
    if spec.kind != "rate":
        raise ExperimentError(f"{spec.name}: run_sweep handles rate experiments only")
    scenario = scenario or ScenarioConfig()
    opt = opt or OptimizerConfig()
    bcfg = bcfg or BaselineConfig()
    tasks = [(spec, scenario, opt, bcfg, v, d) for v in spec.values for d in range(spec.drops)]
    results = _map(_rate_task, tasks, threads)
    table = ResultTable(spec.name, spec.axis)
    for i, v in enumerate(spec.values):
        chunk = results[i * spec.drops:(i + 1) * spec.drops]
        for s in spec.schemes:
            for j, metric in enumerate(RATE_METRICS):
                table.add(s, v, metric, [r[s][j] for r in chunk])
    return table


# ---------------------------------------------------------------------------
# Bit error rate
# ---------------------------------------------------------------------------

@dataclass
class StreamSet:
    """Scalar detection chains, one entry per data stream.

    A stream first decodes a common symbol at SINR ``g_c`` (skipped when
    zero), cancels it, then decodes its private symbol at SINR ``g_p`` with
    any wrongly cancelled common symbol leaking in at SINR ``g_r``.
    ``count_c`` says whether the common bits belong to the stream's user.
    """

    g_c: np.ndarray
    g_p: np.ndarray
    g_r: np.ndarray
    count_c: np.ndarray

    @classmethod
    def build(cls, rows) -> "StreamSet":
        a = np.array(rows, dtype=float).reshape(-1, 4)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3] > 0)

    def __len__(self) -> int:
        return self.g_p.size


def pam_levels(N: int) -> np.ndarray:
    """Unit-average-power N-PAM amplitudes in increasing order."""
    i = np.arange(N)
    return (2 * i - (N - 1)) / math.sqrt((N * N - 1) / 3.0)


def gray_bits(N: int) -> np.ndarray:
    """``(N, log2 N)`` Gray labels of the amplitude indices."""
    m = int(round(math.log2(N)))
    g = np.arange(N) ^ (np.arange(N) >> 1)
    return (g[:, None] >> np.arange(m - 1, -1, -1)) & 1


def _detect(y: np.ndarray, N: int) -> np.ndarray:
    # nearest level in the normalised constellation
    step = 2.0 / math.sqrt((N * N - 1) / 3.0)
    return np.clip(np.rint(y / step + (N - 1) / 2.0), 0, N - 1).astype(np.int64)


def pam_ser_awgn(gamma, N: int = 2) -> np.ndarray:
    """Exact N-PAM symbol error rate at SNR ``gamma`` (unit average power)."""
    g = np.asarray(gamma, dtype=float)
    q = scipy.stats.norm.sf(np.sqrt(3.0 * g / (N * N - 1)))
    return 2.0 * (N - 1) / N * q


@dataclass
class BerResult:
    ber: float
    errors: int
    bits: int
    upper_bound: bool


def simulate_ber(streams: StreamSet, N: int, rng: np.random.Generator, min_errors: int = 100,
                 max_symbols: int = 2_000_000, chunk: int = 200_000) -> BerResult:
    """Monte Carlo bit error rate of Gray-mapped N-PAM over ``streams``.

    Stops once ``min_errors`` bit errors are counted or ``max_symbols``
    symbols per message type have been sent.  With fewer than 10 errors the
    returned figure is the one-sided 95% Poisson upper bound.
    """
    n_s = len(streams)
    if n_s == 0:
        raise ExperimentError("no data streams to simulate")
    levels, bits = pam_levels(N), gray_bits(N)
    m = bits.shape[1]
    has_c = streams.g_c > 0
    count_c = has_c & streams.count_c
    has_p = streams.g_p > 0
    per = max(1, chunk // n_s)
    errors = n_bits = sent = 0
    sc, sp, sr = np.sqrt(streams.g_c), np.sqrt(streams.g_p), np.sqrt(streams.g_r)
    while errors < min_errors and sent < max_symbols:
        xc = rng.integers(N, size=(per, n_s))
        xp = rng.integers(N, size=(per, n_s))
        yc = sc * levels[xc] + rng.standard_normal((per, n_s))
        xc_hat = np.where(has_c, _detect(yc / np.where(has_c, sc, 1.0), N), xc)
        resid = levels[xc] - levels[xc_hat]
        yp = sp * levels[xp] + sr * resid + rng.standard_normal((per, n_s))
        xp_hat = _detect(yp / np.where(has_p, sp, 1.0), N)
        ec = (bits[xc] != bits[xc_hat]).sum(axis=2)
        ep = (bits[xp] != bits[xp_hat]).sum(axis=2)
        errors += int((ec * count_c).sum() + (ep * has_p).sum())
        n_bits += per * m * int(count_c.sum() + has_p.sum())
        sent += per * n_s
    if n_bits == 0:
        raise ExperimentError("streams carry no bits")
    if errors < 10:
        ub = 0.5 * scipy.stats.chi2.ppf(0.95, 2 * (errors + 1)) / n_bits
        return BerResult(float(ub), errors, n_bits, True)
    return BerResult(errors / n_bits, errors, n_bits, False)


def _rs_rows(s, noise, P_c, P_p):
    tot = float(np.sum(P_p))
    rows = []
    for si, ni, pk in zip(s, noise, P_p):
        ip = si * (tot - pk) + ni
        rows.append((si * P_c / (si * tot + ni), si * pk / ip, si * P_c / ip, 1.0))
    return rows


def _bia_rs_rows(drop: Drop, P_c: np.ndarray, P_p: np.ndarray):
    state = drop.rate_state()
    a = drop.inputs.gain * drop.inputs.wp2
    s2 = drop.inputs.sigma2
    rows = []
    for g, idx in enumerate(state.groups):
        tot = P_p[idx].sum()
        for k in idx:
            ip = a * (tot - P_p[k]) + s2
            for mu in state.mu[k]:
                if mu <= 1e-12 * max(state.mu.max(), 1e-300):
                    continue
                rows.append((mu * a * P_c[g] / (a * tot + s2), mu * a * P_p[k] / ip,
                             mu * a * P_c[g] / ip, 1.0))
    return rows


def scheme_streams(scheme, drop: Drop, opt: OptimizerConfig = OptimizerConfig(),
                   bcfg: BaselineConfig = BaselineConfig()) -> StreamSet:
    """Per-stream SINR chains of a scheme on one drop."""
    scheme = SchemeId(scheme)
    inp = drop.inputs
    if scheme in BIA_RS_FAMILY:
        state = drop.rate_state()
        if scheme is SchemeId.BIA_RS_OPT:
            alloc = solve_max_min(state, opt).alloc
        elif scheme is SchemeId.BIA_RS_SUBOPT:
            alloc = solve_beta_nu_only(state, opt).alloc
        else:
            alloc = uniform_allocation(state, bcfg.common_fraction)
        return StreamSet.build(_bia_rs_rows(drop, alloc.P_c, alloc.P_p))
    if scheme is SchemeId.BIA:
        K, L = drop.K, drop.L
        R = block_noise(L, K) if L >= 2 else np.eye(1)
        gamma = inp.gain * inp.wp2 * (drop.P_T / K) / inp.sigma2
        rows = [(0.0, gamma * mu, 0.0, 0.0)
                for k in range(K) for mu in mode_eigenvalues(drop.H[k, :L, :], R)
                if mu > 1e-12]
        return StreamSet.build(rows)
    if scheme is SchemeId.BASELINE2:
        clusters, _ = baseline2_clusters(drop, bcfg)
        rows = []
        for c in clusters:
            rows += _rs_rows(c.s, c.noise, c.P_c, c.P_p)
        return StreamSet.build(rows)
    serving, chan = serving_links(drop.H)
    L, P_l = drop.L, drop.P_T / drop.L
    active = np.array([np.any(serving == l) for l in range(L)])
    noise = _cell_noise(chan, serving, np.where(active, P_l, 0.0), inp)
    s = inp.gain * chan[np.arange(drop.K), serving] ** 2
    rows = []
    for l in range(L):
        idx = np.flatnonzero(serving == l)
        if idx.size == 0:
            continue
        if scheme is SchemeId.RS_PER_CELL:
            P_c = bcfg.common_fraction * P_l
            rows += _rs_rows(s[idx], noise[idx], P_c, np.full(idx.size, (P_l - P_c) / idx.size))
            continue
        eff = s[idx] / noise[idx]
        order = idx[np.lexsort((idx, -eff))]
        n = len(order)
        Ps, Pw = bcfg.noma_strong_share * P_l, (1.0 - bcfg.noma_strong_share) * P_l
        for i in range(n // 2):
            ks, kw = order[i], order[n - 1 - i]
            # strong user: weak message first, then its own after SIC
            rows.append((s[ks] * Pw / (s[ks] * Ps + noise[ks]), s[ks] * Ps / noise[ks],
                         s[ks] * Pw / noise[ks], 0.0))
            rows.append((0.0, s[kw] * Pw / (s[kw] * Ps + noise[kw]), 0.0, 0.0))
        if n % 2:
            k = order[n // 2]
            rows.append((0.0, s[k] * P_l / noise[k], 0.0, 0.0))
    return StreamSet.build(rows)


def _ber_task(args):
    spec, scenario, opt, bcfg, value, vi, d = args
    snr = value if spec.axis == "snr_db" else spec.snr_db
    N = int(value) if spec.axis == "pam_order" else spec.pam_order
    drop, _ = make_drop(scenario, spec.n_users, snr, spec.seed, d, spec.blockage_p,
                        spec.d_th, spec.G_max, spec.overhead_per_ap, spec.group_seed,
                        spec.min_group_rate)
    out = {}
    for j, s in enumerate(spec.schemes):
        streams = scheme_streams(s, drop, opt, bcfg)
        res = simulate_ber(streams, N, _rng(spec.seed, d, 2, vi, j), spec.min_errors,
                           spec.max_symbols)
        out[s] = (res.ber, float(res.upper_bound))
    # reference: one AWGN link at the swept SNR
    awgn = StreamSet.build([(0.0, 10 ** (snr / 10), 0.0, 0.0)])
    res = simulate_ber(awgn, N, _rng(spec.seed, d, 3, vi), spec.min_errors, spec.max_symbols)
    out["awgn"] = (res.ber, float(res.upper_bound))
    return out


def run_ber(spec: ExperimentSpec, pam_order: Optional[int] = None,
            scenario: Optional[ScenarioConfig] = None, opt: Optional[OptimizerConfig] = None,
            bcfg: Optional[BaselineConfig] = None, threads: int = 1) -> ResultTable:
    """BER of every scheme plus an AWGN reference and its Q-function value.

    Metrics: ``ber``, ``upper_bound`` (fraction of drops reporting a bound)
    and, for the ``awgn`` row, ``ber_analytic``.
    """
    if spec.kind != "ber":
        raise ExperimentError(f"{spec.name}: run_ber handles BER experiments only")
    if pam_order is not None:
        spec = ExperimentSpec(**{**asdict(spec), "pam_order": pam_order})
    scenario = scenario or ScenarioConfig()
    opt = opt or OptimizerConfig()
    bcfg = bcfg or BaselineConfig()
    tasks = [(spec, scenario, opt, bcfg, v, i, d)
             for i, v in enumerate(spec.values) for d in range(spec.drops)]
    results = _map(_ber_task, tasks, threads)
    table = ResultTable(spec.name, spec.axis)
    for i, v in enumerate(spec.values):
        chunk = results[i * spec.drops:(i + 1) * spec.drops]
        for s in list(spec.schemes) + ["awgn"]:
            table.add(s, v, "ber", [r[s][0] for r in chunk])
            table.add(s, v, "upper_bound", [r[s][1] for r in chunk])
        snr = v if spec.axis == "snr_db" else spec.snr_db
        N = int(v) if spec.axis == "pam_order" else spec.pam_order
        ser = float(pam_ser_awgn(10 ** (snr / 10), N))
        table.add("awgn", v, "ber_analytic", [ser / math.log2(N)])
    return table


# ---------------------------------------------------------------------------
# Convergence traces
# ---------------------------------------------------------------------------

def _trace_task(args):
    spec, scenario, opt, value, d = args
    drop, _ = make_drop(scenario, spec.n_users, spec.snr_db, spec.seed, d, spec.blockage_p,
                        spec.d_th, spec.G_max, spec.overhead_per_ap, spec.group_seed,
                        spec.min_group_rate)
    state = drop.rate_state()
    out = {}
    for s in spec.schemes:
        sid = SchemeId(s)
        if sid is SchemeId.BIA_RS_OPT:
            sol = solve_max_min(state, opt)
        elif sid is SchemeId.BIA_RS_SUBOPT:
            sol = solve_beta_nu_only(state, opt)
        else:
            sol = None
        if sol is None:
            r = network_sum_rate(uniform_allocation(state), state)
            out[s] = ([r.R_total], [float(r.R_sum_g.min())])
        elif sid is SchemeId.BIA_RS_OPT:
            out[s] = best_so_far(sol)
        else:
            # no acceptance step: report the raw iterates
            out[s] = ([row["sum_rate"] for row in sol.trace],
                      [row["min_rate"] for row in sol.trace])
    return out


def best_so_far(sol: Solution) -> Tuple[List[float], List[float]]:
    """Sum and minimum group rate of the incumbent after each iteration.

    The incumbent changes only when an iterate is accepted (a higher minimum
    group rate, ties broken by the sum rate).
    """
    best, sums, mins = None, [], []
    for row in sol.trace:
        key = (round(row["min_rate"], 12), round(row["sum_rate"], 12))
        if best is None or key > best:
            best = key
        sums.append(best[1])
        mins.append(best[0])
    return sums, mins


def run_convergence_trace(spec: ExperimentSpec, scenario: Optional[ScenarioConfig] = None,
                          opt: Optional[OptimizerConfig] = None, threads: int = 1) -> ResultTable:
    """Per-iteration incumbent sum rate of the full and reduced solvers.

    Shorter traces are padded with their final value; ``spec.values`` lists
    the iterations to report.
    """
    if spec.kind != "trace":
        raise ExperimentError(f"{spec.name}: not a trace experiment")
    scenario = scenario or ScenarioConfig()
    opt = opt or OptimizerConfig()
    tasks = [(spec, scenario, opt, None, d) for d in range(spec.drops)]
    results = _map(_trace_task, tasks, threads)
    table = ResultTable(spec.name, "iterations")
    for s in spec.schemes:
        for it in spec.values:
            i = int(it)
            sums = [r[s][0][min(i, len(r[s][0]) - 1)] for r in results]
            mins = [r[s][1][min(i, len(r[s][1]) - 1)] for r in results]
            table.add(s, it, "sum_rate", sums)
            table.add(s, it, "min_rate", mins)
    return table


def run_experiment(spec: ExperimentSpec, scenario=None, opt=None, bcfg=None,
                   threads: int = 1) -> ResultTable:
    if spec.kind == "ber":
        return run_ber(spec, scenario=scenario, opt=opt, bcfg=bcfg, threads=threads)
    if spec.kind == "trace":
        return run_convergence_trace(spec, scenario, opt, threads)
    return run_sweep(spec, scenario, opt, bcfg, threads)
