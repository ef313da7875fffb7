"""
The Clos-UDN switch: k input modules holding m FIFOs each, dynamic
round-robin or static dispatch onto m UDN meshes, and k output modules
with per-port output buffers.

Dynamic dispatch keeps the m selection pointers of one input module
pairwise distinct by initializing pointer r to r and advancing every
pointer by one at the end of each slot, so LI links never conflict.
Static dispatch hard-wires FIFO(i,r) to mesh r, which makes every flow
follow one deterministic path end to end.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import PacketStore, SwitchConfig, allocate_arrivals, validate
from .udn import MeshBank, W


@dataclass
class StepResult:
    """Per-slot accounting returned by a fabric step."""

    arrivals: int = 0
    dispatched: int = 0
    delivered: list = field(default_factory=list)
    dropped: int = 0
    in_flight: int = 0


class InputModule:
    """One first-stage module: m FIFOs, FIFO(i, r) fed by input port r."""

    def __init__(self, index: int, m: int, capacity=None):
        self.index = index
        self.m = m
        self.capacity = capacity
        self.fifos = [deque() for _ in range(m)]
        self.dropped = 0

    def enqueue(self, r: int, pid: int) -> bool:
        q = self.fifos[r]
        if self.capacity is not None and len(q) >= self.capacity:
            self.dropped += 1
            return False
        q.append(pid)
        return True

    def backlog(self) -> int:
        return sum(len(q) for q in self.fifos)


class OutputModule:
    """One third-stage module: an unbounded FIFO buffer per output port.

    A buffer can absorb up to m deposits per slot and emits at most one
    packet per slot; a packet deposited this slot leaves next slot at the
    earliest (the output line transmits whole cells per slot).
    """

    def __init__(self, index: int, n: int):
        self.index = index
        self.n = n
        self.buffers = [deque() for _ in range(n)]

    def deposit(self, h: int, pid: int, slot: int) -> None:
        self.buffers[h].append((pid, slot))

    def emit(self, slot: int) -> list[int]:
        out = []
        for q in self.buffers:
            if q and q[0][1] < slot:
                out.append(q.popleft()[0])
        return out

    def backlog(self) -> int:
        return sum(len(q) for q in self.buffers)

    def nonempty_ports(self) -> int:
        return sum(1 for q in self.buffers if q)


class ClosUdnFabric:
    """One Clos-UDN instance advanced slot by slot."""

    def __init__(self, cfg: SwitchConfig, store: PacketStore | None = None,
                 count_hops: bool = False, check: bool = False):
        cfg = validate(cfg)
        self.cfg = cfg
        self.n, self.k, self.m, self.M = cfg.n, cfg.k, cfg.m, cfg.M
        self.N = cfg.N
        self.SP = cfg.SP
        self.BD = cfg.BD
        self.static = cfg.dispatch == "static"
        self.check = check
        self.store = store or PacketStore(cfg.n, cfg.k, cfg.M)
        self.bank = MeshBank(self.m, self.k, self.M, self.BD, self.store,
                             count_hops=count_hops)
        self.ims = [InputModule(i, self.m, cfg.im_fifo_capacity) for i in range(self.k)]
        self.oms = [OutputModule(j, self.n) for j in range(self.k)]
        self.flow_counters = np.zeros(self.N * self.N, dtype=np.int64)
        self.arrivals_total = 0
        self.delivered_total = 0
        self.dispatched_total = 0
        self.im_wait_sum = 0
        self.im_wait_count = 0
        self.measure_from = 0

    # ---- introspection ----

    def pointers(self, i: int, slot: int) -> list[int]:
        """Dynamic selection pointers of IM(i) as seen during ``slot``."""
        if self.static:
            return list(range(self.m))
        return [(r + slot) % self.m for r in range(self.m)]

    def im_backlog(self) -> int:
        return sum(im.backlog() for im in self.ims)

    def om_backlog(self) -> int:
        return sum(om.backlog() for om in self.oms)

    def om_nonempty_ports(self) -> int:
        return sum(om.nonempty_ports() for om in self.oms)

    def dropped_total(self) -> int:
        return sum(im.dropped for im in self.ims)

    def in_flight(self) -> int:
        return self.im_backlog() + self.bank.in_flight() + self.om_backlog()

    def check_conservation(self) -> None:
        expect = self.delivered_total + self.dropped_total() + self.in_flight()
        if self.arrivals_total != expect:
            raise AssertionError(
                f"fabric conservation broken: arrivals={self.arrivals_total}, "
                f"delivered+dropped+in_flight={expect}"
            )
        self.bank.check_conservation()

    # ---- the five phases of one external slot ----

    def _arrive(self, slot: int, srcs, dsts) -> tuple[int, int]:
        cnt = len(srcs)
        if cnt == 0:
            return 0, 0
        pids = allocate_arrivals(self.store, self.flow_counters, self.N, srcs, dsts, slot)
        n = self.n
        dropped = 0
        ims = self.ims
        for idx in range(cnt):
            s = int(srcs[idx])
            if not ims[s // n].enqueue(s % n, int(pids[idx])):
                dropped += 1
                self.store.release(int(pids[idx]))
        self.arrivals_total += cnt
        return cnt, dropped

    def _dispatch(self, slot: int) -> list[tuple[int, int]]:
        """Offer every non-empty FIFO's head to its pointer's mesh; returns
        the accepted (mesh, packet id) pairs."""
        bank = self.bank
        occ_l = bank.occ[:, :, 0, W].tolist()
        BD = self.BD
        m = self.m
        static = self.static
        meshes: list[int] = []
        rows: list[int] = []
        pids: list[int] = []
        for i in range(self.k):
            fifos = self.ims[i].fifos
            for r in range(m):
                q = fifos[r]
                if not q:
                    continue
                p = r if static else (r + slot) % m
                if occ_l[p][i] >= BD:
                    continue
                occ_l[p][i] += 1
                meshes.append(p)
                rows.append(i)
                pids.append(q.popleft())
        if self.check:
            assert len({(p, i) for p, i in zip(meshes, rows)}) == len(meshes), \
                "LI link carried more than one packet in a slot"
        bank.commit_injections(meshes, rows, pids, slot)
        if pids and slot >= self.measure_from:
            waits = slot - self.store.arrival[np.asarray(pids)] + 1
            self.im_wait_sum += int(waits.sum())
            self.im_wait_count += len(pids)
        self.dispatched_total += len(pids)
        return list(zip(meshes, pids))

    def dispatch_dynamic(self, slot: int) -> list[tuple[int, int]]:
        """Round-robin dispatch phase: each FIFO offers its head to the
        mesh its pointer names; pointers advance whether or not the mesh
        accepted.  Only valid in dynamic mode."""
        if self.static:
            raise ValueError("fabric is statically wired; use dispatch_static")
        return self._dispatch(slot)

    def dispatch_static(self, slot: int) -> list[tuple[int, int]]:
        """Hard-wired dispatch phase: FIFO(i, r) offers its head to mesh r."""
        if not self.static:
            raise ValueError("fabric uses dynamic dispatch; use dispatch_dynamic")
        return self._dispatch(slot)

    def step(self, slot: int, srcs, dsts) -> StepResult:
        """Run one external slot: arrivals, dispatch, SP mesh sub-phases,
        egress collection, output emission."""
        arrivals, dropped = self._arrive(slot, srcs, dsts)
        dispatched = len(self._dispatch(slot))
        for _ in range(self.SP):
            self.bank.subphase(slot, check=self.check)
        for mesh, row, pid in self.bank.collect_egress(slot):
            self.oms[row].deposit(int(self.store.dst_local[pid]), pid, slot)
        delivered = []
        for om in self.oms:
            delivered.extend(om.emit(slot))
        if delivered:
            self.store.departure[delivered] = slot
            self.delivered_total += len(delivered)
        if self.check:
            self.check_conservation()
        return StepResult(arrivals=arrivals, dispatched=dispatched,
                          delivered=delivered, dropped=dropped,
                          in_flight=self.in_flight())


def slot_step(fabric: ClosUdnFabric, slot: int, arrivals) -> StepResult:
    """Advance a fabric by one slot.

    ``arrivals`` is a sequence of (src_global, dst_global) pairs with at
    most one entry per input port.
    """
    if len(arrivals):
        srcs, dsts = zip(*arrivals)
    else:
        srcs, dsts = (), ()
    return fabric.step(slot, np.asarray(srcs, dtype=np.int64), np.asarray(dsts, dtype=np.int64))
