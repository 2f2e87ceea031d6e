"""Blind interference alignment over reconfigurable photodiode receivers.

The supersymbol has two phases.  In the shared phase every group transmits
and the receivers of group ``g`` cycle through the first ``L - 1`` modes; in
the dedicated phase of group ``g`` only that group transmits while its users
sit in the last mode.  Slot indices are 0-based and modes run ``0..L-1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

MAX_SLOTS = 1_000_000


class BlockTooLargeError(ValueError):
    """The supersymbol would exceed the configured slot cap."""


def block_dimensions(L: int, G: int) -> tuple:
    """Return ``(n_slots, n_alignment_blocks)`` for ``L`` APs and ``G`` groups."""
    if L < 2 or G < 1:
        raise ValueError("need L >= 2 and G >= 1")
    n_ab = (L - 1) ** (G - 1)
    n_slots = (L - 1) ** G + G * n_ab
    return n_slots, n_ab


def alignment_ratio(L: int, G: int) -> float:
    """Fraction of the supersymbol carried by one alignment block, ``1/(G+L-1)``."""
    n_slots, n_ab = block_dimensions(L, G)
    return n_ab / n_slots


@dataclass(frozen=True)
class SlotInfo:
    phase: str          # "shared" or "dedicated"
    owner: int          # dedicated group, -1 for shared slots
    index: tuple        # per-group symbol indices (shared) or foreign indices (dedicated)


@dataclass
class BiaSchedule:
    """Mode pattern and alignment blocks of one supersymbol.

    Attributes
    ----------
    modes : ndarray, shape (G, n_slots)
        Mode selected by the receivers of each group in each slot.
    active : ndarray of bool, shape (G, n_slots)
        Whether a group transmits in a slot.
    symbol : ndarray of int, shape (G, n_slots)
        Index of the alignment block whose symbol a group sends in a slot,
        -1 when the group is silent.
    blocks : list of list of tuple
        ``blocks[g][l]`` holds the ``L`` slot indices of block ``l`` of group ``g``.
    dedicated : list of dict
        ``dedicated[g][r]`` is the dedicated slot of group ``g`` for foreign index ``r``.
    """

    L: int
    G: int
    modes: np.ndarray
    active: np.ndarray
    symbol: np.ndarray
    blocks: List[List[tuple]]
    dedicated: List[Dict[tuple, int]]
    slots: List[SlotInfo] = field(repr=False)

    @property
    def n_slots(self) -> int:
        return self.modes.shape[1]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks[0])

    def precoder(self, g: int) -> np.ndarray:
        """Dense 0/1 precoder of group ``g``, shape ``(n_slots*L, n_ab*L)``."""
        L = self.L
        n_ab = self.n_blocks
        if self.n_slots * L * n_ab * L > 5e7:
            raise BlockTooLargeError("dense precoder too large; use the slot sets")
        B = np.zeros((self.n_slots * L, n_ab * L))
        eye = np.eye(L)
        for l, slots in enumerate(self.blocks[g]):
            for s in slots:
                B[s * L:(s + 1) * L, l * L:(l + 1) * L] = eye
        return B


def _foreign(t: tuple, g: int) -> tuple:
    return t[:g] + t[g + 1:]


def build_group_precoders(L: int, G: int, max_slots: int = MAX_SLOTS) -> BiaSchedule:
    """Build the BIA schedule for ``G`` groups served by ``L`` APs."""
    n_slots, n_ab = block_dimensions(L, G)
    if n_slots > max_slots:
        raise BlockTooLargeError(f"supersymbol of {n_slots} slots exceeds cap {max_slots}")
    modes = np.zeros((G, n_slots), dtype=np.int64)
    active = np.zeros((G, n_slots), dtype=bool)
    symbol = np.full((G, n_slots), -1, dtype=np.int64)
    slots: List[SlotInfo] = []
    foreign_ids = list(itertools.product(range(L - 1), repeat=G - 1))
    block_of = {r: i for i, r in enumerate(foreign_ids)}
    blocks: List[List[list]] = [[[] for _ in range(n_ab)] for _ in range(G)]
    dedicated: List[Dict[tuple, int]] = [dict() for _ in range(G)]

    s = 0
    for t in itertools.product(range(L - 1), repeat=G):
        slots.append(SlotInfo("shared", -1, t))
        for g in range(G):
            modes[g, s] = t[g]
            active[g, s] = True
            l = block_of[_foreign(t, g)]
            symbol[g, s] = l
            blocks[g][l].append(s)
        s += 1
    for g in range(G):
        for r in foreign_ids:
            slots.append(SlotInfo("dedicated", g, r))
            others = [j for j in range(G) if j != g]
            for j, m in zip(others, r):
                modes[j, s] = m
            modes[g, s] = L - 1
            active[g, s] = True
            l = block_of[r]
            symbol[g, s] = l
            blocks[g][l].append(s)
            dedicated[g][r] = s
            s += 1
    return BiaSchedule(L, G, modes, active, symbol,
                       [[tuple(b) for b in bg] for bg in blocks], dedicated, slots)


@dataclass
class DecodabilityReport:
    """Outcome of the alignment checks; ``violations`` is empty on success."""

    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def verify_decodability(schedule: BiaSchedule, user_modes: np.ndarray, group: int,
                        rtol: float = 1e-9, user: int = 0) -> DecodabilityReport:
    """Check the alignment conditions for one user.

    ``user_modes`` is the ``(M, L)`` mode matrix of a user in ``group``; only
    its first ``L`` rows (the modes the schedule uses) matter.  Each desired
    block must be full rank, and every foreign alignment block must reach the
    user through a single channel vector so that it occupies one dimension.
    """
    H = np.asarray(user_modes, dtype=float)
    L = schedule.L
    report = DecodabilityReport()
    for l, slots in enumerate(schedule.blocks[group]):
        D = H[schedule.modes[group, list(slots)]]
        rank = np.linalg.matrix_rank(D, tol=rtol * max(np.linalg.norm(D, 2), 1e-300))
        if rank < L:
            report.violations.append(
                f"user {user}, group {group}, block {l}: desired rank {rank} < {L}")
    for j in range(schedule.G):
        if j == group:
            continue
        for l, slots in enumerate(schedule.blocks[j]):
            used = np.unique(schedule.modes[group, list(slots)])
            rank = np.linalg.matrix_rank(H[used]) if used.size > 1 else 1
            if rank > 1:
                report.violations.append(
                    f"user {user}, group {group}: interference from group {j} "
                    f"block {l} has rank {rank}")
    return report


def verify_all(schedule: BiaSchedule, tensor_gains: np.ndarray, assignment) -> DecodabilityReport:
    """Run :func:`verify_decodability` for every user of a ``(K, M, L)`` tensor."""
    report = DecodabilityReport()
    for k, g in enumerate(assignment):
        report.violations += verify_decodability(schedule, tensor_gains[k], int(g), user=k).violations
    return report


def effective_noise(schedule: BiaSchedule, sigma2: float = 1.0) -> np.ndarray:
    """Diagonal post-cancellation noise covariance of one alignment block.

    Shared slots accumulate the noise of the ``G - 1`` dedicated slots used to
    cancel the foreign symbols; the dedicated slot keeps its own noise.
    """
    blk = schedule.blocks[0][0]
    diag = []
    for s in blk:
        diag.append(schedule.G if schedule.slots[s].phase == "shared" else 1)
    return sigma2 * np.diag(np.asarray(diag, dtype=float))


def _cleaning_slots(schedule: BiaSchedule, group: int, s: int) -> list:
    """Dedicated slots subtracted from shared slot ``s`` by a user of ``group``."""
    info = schedule.slots[s]
    if info.phase != "shared":
        return []
    return [schedule.dedicated[j][_foreign(info.index, j)]
            for j in range(schedule.G) if j != group]


def intergroup_cancel(schedule: BiaSchedule, received: np.ndarray, group: int) -> np.ndarray:
    """Remove foreign-group interference from a user's received slots.

    Parameters
    ----------
    received : ndarray, shape (n_slots,)
        One received sample per slot.

    Returns
    -------
    ndarray, shape (n_ab, L)
        Cleaned samples ordered by alignment block.
    """
    y = np.asarray(received)
    out = np.empty((schedule.n_blocks, schedule.L), dtype=y.dtype)
    for l, slots in enumerate(schedule.blocks[group]):
        for i, s in enumerate(slots):
            out[l, i] = y[s] - sum(y[c] for c in _cleaning_slots(schedule, group, s))
    return out


def simulate_received(schedule: BiaSchedule, user_modes: np.ndarray, group: int,
                      symbols: Sequence[np.ndarray], noise=None) -> np.ndarray:
    """Noisy samples seen by one user over the supersymbol.

    ``symbols[j]`` has shape ``(n_ab, L)``: one ``L``-vector per alignment
    block of group ``j``.
    """
    H = np.asarray(user_modes)
    y = np.zeros(schedule.n_slots, dtype=np.result_type(H, *symbols))
    for s in range(schedule.n_slots):
        h = H[schedule.modes[group, s]]
        for j in range(schedule.G):
            if schedule.active[j, s]:
                y[s] += h @ symbols[j][schedule.symbol[j, s]]
    if noise is not None:
        y = y + noise
    return y


def decode_user(schedule: BiaSchedule, user_modes: np.ndarray, group: int,
                received: np.ndarray) -> np.ndarray:
    """Zero-forcing decode of every alignment block of ``group``."""
    H = np.asarray(user_modes)
    clean = intergroup_cancel(schedule, received, group)
    est = np.empty((schedule.n_blocks, schedule.L), dtype=np.result_type(H, clean))
    for l, slots in enumerate(schedule.blocks[group]):
        D = H[schedule.modes[group, list(slots)]]
        est[l] = np.linalg.solve(D, clean[l])
    return est


def block_report(schedule: BiaSchedule) -> dict:
    """JSON-friendly description of the supersymbol."""
    return {
        "L": schedule.L,
        "G": schedule.G,
        "n_slots": schedule.n_slots,
        "n_alignment_blocks": schedule.n_blocks,
        "alignment_ratio": alignment_ratio(schedule.L, schedule.G),
        "slots": [
            {"slot": s, "phase": info.phase, "owner": info.owner,
             "active_groups": np.flatnonzero(schedule.active[:, s]).tolist(),
             "modes": schedule.modes[:, s].tolist()}
            for s, info in enumerate(schedule.slots)
        ],
        "blocks": [[list(b) for b in bg] for bg in schedule.blocks],
    }


def dump_block(schedule: BiaSchedule, path=None) -> str:
    text = json.dumps(block_report(schedule), indent=2)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
