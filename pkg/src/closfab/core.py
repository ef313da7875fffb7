"""
Core domain types shared by every fabric: port addressing, packets,
switch configuration and the slot clock.

All indices are 0-based. A switch has N = n*k external ports; port
``g`` lives on module ``g // n`` at local position ``g % n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates structural constraints.

    Carries the complete list of violations in ``errors``.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Architecture(str, Enum):
    CLOS_UDN = "clos_udn"
    MSM = "msm"
    MMM = "mmm"


class DispatchMode(str, Enum):
    DYNAMIC = "dynamic"
    STATIC = "static"


@dataclass(frozen=True)
class PortAddress:
    """External port identified both globally and as (module, local) pair."""

    module_index: int
    local_port: int
    global_index: int

    def __str__(self):
        return f"{self.global_index}({self.module_index}.{self.local_port})"


def decompose(global_port: int, n: int, k: Optional[int] = None) -> PortAddress:
    """Split a global port index into its (module, local) address.

    ``n`` is the number of ports per module; when ``k`` is given the
    index is also checked against the switch size N = n*k.
    """
    if n < 1:
        raise ConfigError([f"n must be >= 1, got {n}"])
    if global_port < 0 or (k is not None and global_port >= n * k):
        bound = n * k if k is not None else "n*k"
        raise ConfigError([f"global port {global_port} outside [0, {bound})"])
    return PortAddress(global_port // n, global_port % n, global_port)


@dataclass
class Packet:
    """One fixed-size cell travelling through a fabric.

    ``flow_seq`` numbers packets of the same (src, dst) flow consecutively
    from 0 in arrival order; ``turn_column`` is assigned when the packet
    is injected into a UDN mesh.
    """

    id: int
    src: PortAddress
    dst: PortAddress
    flow_seq: int
    arrival_slot: int
    departure_slot: Optional[int] = None
    turn_column: Optional[int] = None


@dataclass
class SwitchConfig:
    """Full parameterization of one switch instance.

    Defaults follow the reference setup: m = n central modules, square
    meshes (M = k) and 4-packet router buffers.
    """

    n: int = 8
    k: int = 8
    m: Optional[int] = None
    M: Optional[int] = None
    SP: int = 1
    BD: int = 4
    architecture: Architecture = Architecture.CLOS_UDN
    dispatch: DispatchMode = DispatchMode.DYNAMIC
    crosspoint_b: int = 1
    iterations: int = 1
    mmm_input_policy: str = "lqf"
    im_fifo_capacity: Optional[int] = None
    seed: int = 1

    @property
    def N(self) -> int:
        return self.n * self.k


def validation_errors(cfg: SwitchConfig) -> list[str]:
    """Return every constraint the configuration violates (empty if valid)."""
    errors = []
    if cfg.n < 1:
        errors.append(f"n must be >= 1, got {cfg.n}")
    if cfg.k < 1:
        errors.append(f"k must be >= 1, got {cfg.k}")
    m = cfg.m if cfg.m is not None else cfg.n
    M = cfg.M if cfg.M is not None else cfg.k
    if m < cfg.n:
        errors.append(f"m < n is blocking: m={m}, n={cfg.n}")
    if cfg.k >= 1 and not (1 <= M <= cfg.k):
        errors.append(f"mesh depth M must satisfy 1 <= M <= k: M={M}, k={cfg.k}")
    if cfg.SP < 1:
        errors.append(f"speedup SP must be >= 1, got {cfg.SP}")
    if cfg.BD < 1:
        errors.append(f"buffer depth BD must be >= 1, got {cfg.BD}")
    try:
        Architecture(cfg.architecture)
    except ValueError:
        errors.append(f"unknown architecture {cfg.architecture!r}")
    try:
        DispatchMode(cfg.dispatch)
    except ValueError:
        errors.append(f"unknown dispatch mode {cfg.dispatch!r}")
    if (
        cfg.architecture == Architecture.CLOS_UDN
        and cfg.dispatch == DispatchMode.STATIC
        and m != cfg.n
    ):
        errors.append(f"static dispatch hard-wires FIFO(i,r) to CM(r) and needs m = n: m={m}, n={cfg.n}")
    if cfg.architecture == Architecture.MMM and cfg.crosspoint_b < 1:
        errors.append(f"mmm crosspoint buffer must be >= 1, got {cfg.crosspoint_b}")
    if not (1 <= cfg.iterations <= max(m, 1)):
        errors.append(f"iterations must satisfy 1 <= iter <= m: iter={cfg.iterations}, m={m}")
    if cfg.mmm_input_policy not in ("rr", "lqf"):
        errors.append(f"mmm_input_policy must be 'rr' or 'lqf', got {cfg.mmm_input_policy!r}")
    if cfg.im_fifo_capacity is not None and cfg.im_fifo_capacity < 1:
        errors.append(f"im_fifo_capacity must be >= 1 or unbounded, got {cfg.im_fifo_capacity}")
    return errors


def validate(cfg: SwitchConfig) -> SwitchConfig:
    """Normalize a configuration (fill m, M defaults) or raise ConfigError.

    Validation is idempotent: validating the result again returns an
    equal configuration.
    """
    errors = validation_errors(cfg)
    if errors:
        raise ConfigError(errors)
    return replace(
        cfg,
        m=cfg.m if cfg.m is not None else cfg.n,
        M=cfg.M if cfg.M is not None else cfg.k,
        architecture=Architecture(cfg.architecture),
        dispatch=DispatchMode(cfg.dispatch),
    )


@dataclass
class SlotClock:
    """External time-slot counter; statistics accumulate from warmup on."""

    slot: int = 0
    warmup_slots: int = 0
    total_slots: int = 0

    @property
    def measuring(self) -> bool:
        return self.slot >= self.warmup_slots

    def advance(self) -> None:
        self.slot += 1


class PacketStore:
    """Columnar packet table.

    Fabric engines address packets by integer id (pid) and read their
    fields from numpy columns, which keeps the per-slot mesh stepping
    vectorizable.  ``recycle=True`` returns departed pids to a free list
    so long saturated runs stay within a bounded footprint.
    """

    _GROW = 1 << 14

    def __init__(self, n: int, k: int, M: int, recycle: bool = False):
        self.n = n
        self.k = k
        self.N = n * k
        self.M = M
        self.recycle = recycle
        self._cap = self._GROW
        self._free: list[int] = []
        self.count = 0
        self.src = np.zeros(self._cap, dtype=np.int32)
        self.dst = np.zeros(self._cap, dtype=np.int32)
        self.flow_seq = np.zeros(self._cap, dtype=np.int64)
        self.arrival = np.zeros(self._cap, dtype=np.int64)
        self.departure = np.full(self._cap, -1, dtype=np.int64)
        self.stamp = np.full(self._cap, -1, dtype=np.int64)
        self.hopped = np.zeros(self._cap, dtype=bool)
        self.turn_col = np.zeros(self._cap, dtype=np.int16)
        self.dst_row = np.zeros(self._cap, dtype=np.int16)
        self.dst_local = np.zeros(self._cap, dtype=np.int16)

    def _grow(self, need: int) -> None:
        new_cap = self._cap
        while new_cap < need:
            new_cap *= 2
        for name in ("src", "dst", "flow_seq", "arrival", "departure",
                     "stamp", "hopped", "turn_col", "dst_row", "dst_local"):
            old = getattr(self, name)
            fresh = np.full(new_cap, -1, dtype=old.dtype) if name in ("departure", "stamp") \
                else np.zeros(new_cap, dtype=old.dtype)
            fresh[: self._cap] = old
            setattr(self, name, fresh)
        self._cap = new_cap

    def alloc_batch(self, srcs: np.ndarray, dsts: np.ndarray,
                    seqs: np.ndarray, slot: int) -> np.ndarray:
        """Allocate one pid per (src, dst) pair arriving this slot."""
        cnt = len(srcs)
        if cnt == 0:
            return np.empty(0, dtype=np.int64)
        reuse = min(len(self._free), cnt)
        pids = np.empty(cnt, dtype=np.int64)
        if reuse:
            pids[:reuse] = self._free[-reuse:]
            del self._free[-reuse:]
        fresh = cnt - reuse
        if fresh:
            if self.count + fresh > self._cap:
                self._grow(self.count + fresh)
            pids[reuse:] = np.arange(self.count, self.count + fresh, dtype=np.int64)
            self.count += fresh
        self.src[pids] = srcs
        self.dst[pids] = dsts
        self.flow_seq[pids] = seqs
        self.arrival[pids] = slot
        self.departure[pids] = -1
        self.stamp[pids] = -1
        self.hopped[pids] = False
        self.turn_col[pids] = dsts % self.M
        self.dst_row[pids] = dsts // self.n
        self.dst_local[pids] = dsts % self.n
        return pids

    def alloc(self, src: int, dst: int, flow_seq: int, slot: int) -> int:
        return int(self.alloc_batch(np.array([src]), np.array([dst]),
                                    np.array([flow_seq]), slot)[0])

    def release(self, pid: int) -> None:
        if self.recycle:
            self._free.append(pid)

    def packet(self, pid: int) -> Packet:
        """Materialize a Packet view for inspection and tests."""
        dep = int(self.departure[pid])
        return Packet(
            id=pid,
            src=decompose(int(self.src[pid]), self.n),
            dst=decompose(int(self.dst[pid]), self.n),
            flow_seq=int(self.flow_seq[pid]),
            arrival_slot=int(self.arrival[pid]),
            departure_slot=None if dep < 0 else dep,
            turn_column=int(self.turn_col[pid]),
        )


def allocate_arrivals(store: PacketStore, flow_counters: np.ndarray, N: int,
                      srcs, dsts, slot: int) -> np.ndarray:
    """Allocate pids for one slot of arrivals, numbering each flow
    consecutively.  At most one packet per source per slot, so flow ids
    within the batch are distinct."""
    srcs = np.asarray(srcs, dtype=np.int64)
    dsts = np.asarray(dsts, dtype=np.int64)
    if len(srcs) == 0:
        return np.empty(0, dtype=np.int64)
    fids = srcs * N + dsts
    seqs = flow_counters[fids]
    flow_counters[fids] += 1
    return store.alloc_batch(srcs, dsts, seqs, slot)
