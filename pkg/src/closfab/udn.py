"""
Unidirectional NoC mesh used as a central module: a k x M grid of
input-queued mini-routers with per-ingress FIFOs of depth BD, modulo-XY
routing, round-robin output arbiters and credit-based room checks.

Timing model (one external slot):
  * a packet injected over an LI link this slot takes its first in-mesh
    hop no earlier than the next slot (the LI crossing occupies the slot);
  * each of the SP mesh sub-phases moves head-of-line packets one hop:
    a packet advances at most one hop and a link carries at most one
    packet per sub-phase, with room checks against live occupancy
    (credits propagate inside the slot, so a hole opened at the east
    side admits the whole chain behind it);
  * east-column routers hold an egress FIFO stage feeding the LC link;
    the LC drains at most one packet per row per slot and never one that
    entered the stage in the same slot.

``MeshBank`` steps all m meshes of a switch as stacked numpy arrays;
``UdnMesh`` wraps a bank of one for standalone use.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(**kwargs):
        def wrap(fn):
            return fn

        return wrap

from .core import Packet, PacketStore

# Ingress FIFO indices: packets from the west (or the injection link),
# from the north neighbour, from the south neighbour.
W, N, S = 0, 1, 2
# Output link indices.
EAST, NORTH_OUT, SOUTH_OUT, EXIT_OUT = 0, 1, 2, 3

# Capacity of the egress stage between an east-column router and its LC
# link.  The LC drains one packet per slot while exit grants may deliver
# up to SP per slot, so this output queue absorbs the transient surplus
# of destination-row bursts; only the mini-router ingress FIFOs are
# bounded by BD.  Saturation throughput is insensitive beyond ~256.
DEFAULT_EGRESS_DEPTH = 4096


class Direction(Enum):
    EAST = "east"
    NORTH = "north"
    SOUTH = "south"
    EXIT = "exit"


@njit(cache=True)
def _subphase_kernel(occ, hp, ring, ptr, link_done, egress_ring, egress_occ,
                     egress_hp, stamp, hopped, turn_col, dst_row, pop_east,
                     head_dir, moved_buf, slot, BD, egress_depth):
    """Compiled twin of the reference sub-phase.

    Per fixpoint iteration: snapshot every FIFO's head direction, then
    grant each output link at most once (round-robin from its pointer)
    with live room checks, processing exits first, east links by
    descending column and vertical links downstream-first so freed slots
    chain within the iteration.  Each packet moves at most one hop per
    sub-phase (hopped marks, cleared on return).
    """
    m, k, M, _ = occ.shape
    link_done[:] = False
    moved = 0
    cM = M - 1
    progress = True
    while progress:
        progress = False
        # snapshot head directions: -1 none, 0 east, 1 north, 2 south, 3 exit
        for mm in range(m):
            for r in range(k):
                for c in range(M):
                    for d in range(3):
                        if occ[mm, r, c, d] == 0:
                            head_dir[mm, r, c, d] = -1
                            continue
                        pid = ring[mm, r, c, d, hp[mm, r, c, d]]
                        if stamp[pid] == slot or hopped[pid]:
                            head_dir[mm, r, c, d] = -1
                            continue
                        drw = dst_row[pid]
                        if c < turn_col[pid]:
                            head_dir[mm, r, c, d] = 0
                        elif drw == r:
                            head_dir[mm, r, c, d] = 0 if c < cM else 3
                        elif drw < r:
                            head_dir[mm, r, c, d] = 1
                        else:
                            head_dir[mm, r, c, d] = 2

        # exits first: they open holes at the east column
        for mm in range(m):
            for r in range(k):
                if link_done[mm, r, cM, 3] or egress_occ[mm, r] >= egress_depth:
                    continue
                p0 = ptr[mm, r, cM, 3]
                for off in range(3):
                    d = (p0 + off) % 3
                    if head_dir[mm, r, cM, d] != 3:
                        continue
                    h = hp[mm, r, cM, d]
                    pid = ring[mm, r, cM, d, h]
                    occ[mm, r, cM, d] -= 1
                    hp[mm, r, cM, d] = (h + 1) % BD
                    ptr[mm, r, cM, 3] = (d + 1) % 3
                    link_done[mm, r, cM, 3] = True
                    head_dir[mm, r, cM, d] = -1
                    w = (egress_hp[mm, r] + egress_occ[mm, r]) % egress_depth
                    egress_ring[mm, r, w] = pid
                    egress_occ[mm, r] += 1
                    stamp[pid] = slot
                    hopped[pid] = True
                    moved_buf[moved] = pid
                    moved += 1
                    progress = True
                    break

        # east links, descending columns (a hop frees room for the column behind)
        for c in range(M - 2, -1, -1):
            for mm in range(m):
                for r in range(k):
                    if link_done[mm, r, c, 0] or occ[mm, r, c + 1, 0] >= BD:
                        continue
                    p0 = ptr[mm, r, c, 0]
                    for off in range(3):
                        d = (p0 + off) % 3
                        if head_dir[mm, r, c, d] != 0:
                            continue
                        h = hp[mm, r, c, d]
                        pid = ring[mm, r, c, d, h]
                        occ[mm, r, c, d] -= 1
                        hp[mm, r, c, d] = (h + 1) % BD
                        ptr[mm, r, c, 0] = (d + 1) % 3
                        link_done[mm, r, c, 0] = True
                        head_dir[mm, r, c, d] = -1
                        w = (hp[mm, r, c + 1, 0] + occ[mm, r, c + 1, 0]) % BD
                        ring[mm, r, c + 1, 0, w] = pid
                        occ[mm, r, c + 1, 0] += 1
                        pop_east[mm, r, c] += 1
                        hopped[pid] = True
                        moved_buf[moved] = pid
                        moved += 1
                        progress = True
                        break

        # north links, ascending rows (destination row handled first)
        for r in range(1, k):
            for mm in range(m):
                for c in range(M):
                    if link_done[mm, r, c, 1] or occ[mm, r - 1, c, 2] >= BD:
                        continue
                    p0 = ptr[mm, r, c, 1]
                    for off in range(3):
                        d = (p0 + off) % 3
                        if head_dir[mm, r, c, d] != 1:
                            continue
                        h = hp[mm, r, c, d]
                        pid = ring[mm, r, c, d, h]
                        occ[mm, r, c, d] -= 1
                        hp[mm, r, c, d] = (h + 1) % BD
                        ptr[mm, r, c, 1] = (d + 1) % 3
                        link_done[mm, r, c, 1] = True
                        head_dir[mm, r, c, d] = -1
                        w = (hp[mm, r - 1, c, 2] + occ[mm, r - 1, c, 2]) % BD
                        ring[mm, r - 1, c, 2, w] = pid
                        occ[mm, r - 1, c, 2] += 1
                        hopped[pid] = True
                        moved_buf[moved] = pid
                        moved += 1
                        progress = True
                        break

        # south links, descending rows
        for r in range(k - 2, -1, -1):
            for mm in range(m):
                for c in range(M):
                    if link_done[mm, r, c, 2] or occ[mm, r + 1, c, 1] >= BD:
                        continue
                    p0 = ptr[mm, r, c, 2]
                    for off in range(3):
                        d = (p0 + off) % 3
                        if head_dir[mm, r, c, d] != 2:
                            continue
                        h = hp[mm, r, c, d]
                        pid = ring[mm, r, c, d, h]
                        occ[mm, r, c, d] -= 1
                        hp[mm, r, c, d] = (h + 1) % BD
                        ptr[mm, r, c, 2] = (d + 1) % 3
                        link_done[mm, r, c, 2] = True
                        head_dir[mm, r, c, d] = -1
                        w = (hp[mm, r + 1, c, 1] + occ[mm, r + 1, c, 1]) % BD
                        ring[mm, r + 1, c, 1, w] = pid
                        occ[mm, r + 1, c, 1] += 1
                        hopped[pid] = True
                        moved_buf[moved] = pid
                        moved += 1
                        progress = True
                        break

    for i in range(moved):
        hopped[moved_buf[i]] = False
    return moved


class RoutingError(RuntimeError):
    """A packet reached a cell its deterministic route cannot produce."""


def turn_column_for(dst_global: int, M: int) -> int:
    """Column where a packet leaves its horizontal run: dst mod M.

    Hashing the full destination port (not just the output module)
    spreads the flows that share an output module across mesh columns
    while staying constant within a flow.
    """
    return dst_global % M


def route_hop(turn_col: int, dst_row: int, row: int, col: int, M: int) -> Direction:
    """Next hop of the deterministic minimal-path rule at cell (row, col)."""
    if col < turn_col:
        return Direction.EAST
    if row != dst_row:
        if col > turn_col:
            raise RoutingError(
                f"cell (row={row}, col={col}) past turn column {turn_col} with dst row {dst_row}"
            )
        return Direction.NORTH if dst_row < row else Direction.SOUTH
    if col < M - 1:
        return Direction.EAST
    return Direction.EXIT


def route_next_hop(pkt: Packet, at: tuple[int, int], dims: tuple[int, int]) -> Direction:
    """Route a packet object sitting at ``at=(row, col)`` in a (k, M) mesh."""
    if pkt.turn_column is None:
        raise RoutingError(f"packet {pkt.id} has no turn column assigned")
    row, col = at
    _, M = dims
    return route_hop(pkt.turn_column, pkt.dst.module_index, row, col, M)


@dataclass
class MiniRouter:
    """Read-only snapshot of one router's queues and arbiter pointers."""

    row: int
    col: int
    ingress_fifos: dict
    output_pointers: dict


class MeshBank:
    """State of m unidirectional meshes stepped together.

    FIFO contents are rings of packet ids into a shared PacketStore.
    Sub-phases run grant passes over live head-of-line state until no
    packet can move: room freed by a downstream hop is usable in the
    same sub-phase, and a queue whose head departed may offer its next
    packet to a still-idle link, while each packet advances at most one
    hop and each link carries at most one packet.
    """

    def __init__(self, m: int, k: int, M: int, BD: int, store: PacketStore,
                 count_hops: bool = False, egress_depth: int = DEFAULT_EGRESS_DEPTH):
        self.m = m
        self.k = k
        self.M = M
        self.BD = BD
        self.store = store
        self.count_hops = count_hops
        self.egress_depth = egress_depth
        self.ring = np.zeros((m, k, M, 3, BD), dtype=np.int64)
        self.occ = np.zeros((m, k, M, 3), dtype=np.int64)
        self.hp = np.zeros((m, k, M, 3), dtype=np.int64)
        self.ptr = np.zeros((m, k, M, 4), dtype=np.int64)
        self.link_done = np.zeros((m, k, M, 4), dtype=bool)
        self.egress_ring = np.zeros((m, k, egress_depth), dtype=np.int64)
        self.egress_occ = np.zeros((m, k), dtype=np.int64)
        self.egress_hp = np.zeros((m, k), dtype=np.int64)
        self.egress_emitted = np.zeros((m, k), dtype=bool)
        self.pop_east = np.zeros((m, k, max(M - 1, 0)), dtype=np.int64)
        self.injected = np.zeros(m, dtype=np.int64)
        self.exited = np.zeros(m, dtype=np.int64)
        self._moved_pids: list = []
        self._head_dir = np.zeros((m, k, M, 3), dtype=np.int8)
        self._moved_buf = np.zeros(m * k * M * 3 * BD + 1, dtype=np.int64)
        if count_hops:
            self.hops = {}
        self._rowg = np.arange(k).reshape(1, k, 1, 1)
        self._colg = np.arange(M).reshape(1, 1, M, 1)
        self._dgrid = np.arange(3).reshape(1, 1, 1, 3)

    # ---- injection (LI side) ----

    def inject(self, mesh: int, row: int, pid: int, slot: int) -> bool:
        """Offer a packet to the row's injection FIFO; False means full."""
        occ = self.occ[mesh, row, 0, W]
        if occ >= self.BD:
            return False
        w = (self.hp[mesh, row, 0, W] + occ) % self.BD
        self.ring[mesh, row, 0, W, w] = pid
        self.occ[mesh, row, 0, W] = occ + 1
        self.store.stamp[pid] = slot
        self.injected[mesh] += 1
        if self.count_hops:
            self.hops[pid] = 0
        return True

    def commit_injections(self, meshes, rows, pids, slot: int) -> None:
        """Batched inject for offers already checked against this slot's
        occupancy; at most one offer per (mesh, row)."""
        if not meshes:
            return
        mi = np.asarray(meshes)
        ri = np.asarray(rows)
        pa = np.asarray(pids)
        occ = self.occ[mi, ri, 0, W]
        w = (self.hp[mi, ri, 0, W] + occ) % self.BD
        self.ring[mi, ri, 0, W, w] = pa
        self.occ[mi, ri, 0, W] = occ + 1
        self.store.stamp[pa] = slot
        np.add.at(self.injected, mi, 1)
        if self.count_hops:
            for p in pids:
                self.hops[p] = 0

    # ---- one mesh sub-phase ----

    def _heads(self, slot: int, check: bool = False):
        """Head-of-line pid and requested direction per FIFO, from live state."""
        store = self.store
        Mm = self.M
        has = self.occ > 0
        hol = np.take_along_axis(self.ring, self.hp[..., None], axis=4)[..., 0]
        pid = np.where(has, hol, 0)
        elig = has & (store.stamp[pid] != slot) & ~store.hopped[pid]
        tc = store.turn_col[pid]
        dr = store.dst_row[pid]
        row = self._rowg
        col = self._colg
        east = elig & ((col < tc) | ((dr == row) & (col < Mm - 1)))
        exit_req = elig & (dr == row) & (col == Mm - 1)
        vert = elig & (col >= tc) & (dr != row)
        if check and np.any(vert & (col > tc)):
            raise RoutingError("packet past its turn column off its destination row")
        north = vert & (dr < row)
        south = vert & (dr > row)
        return pid, east, exit_req, north, south

    def _rr_select(self, req3, out_idx: int):
        """Round-robin winner among requesting ingress FIFOs per link."""
        score = np.where(req3, (self._dgrid - self.ptr[..., out_idx : out_idx + 1]) % 3, 3)
        return score.argmin(axis=3), score.min(axis=3) < 3

    def _move(self, out_idx: int, mi, ki, ci, di, pid3, slot: int) -> int:
        """Pop the granted heads, then push them one hop on; update the
        arbiter pointers, per-sub-phase marks and hop counters."""
        if len(mi) == 0:
            return 0
        moving = pid3[mi, ki, ci, di]
        store = self.store
        BD = self.BD
        store.hopped[moving] = True
        self._moved_pids.append(moving)
        self.occ[mi, ki, ci, di] -= 1
        self.hp[mi, ki, ci, di] = (self.hp[mi, ki, ci, di] + 1) % BD
        self.ptr[mi, ki, ci, out_idx] = (di + 1) % 3
        self.link_done[mi, ki, ci, out_idx] = True
        if out_idx == EAST:
            w = (self.hp[mi, ki, ci + 1, W] + self.occ[mi, ki, ci + 1, W]) % BD
            self.ring[mi, ki, ci + 1, W, w] = moving
            self.occ[mi, ki, ci + 1, W] += 1
            np.add.at(self.pop_east, (mi, ki, ci), 1)
        elif out_idx == NORTH_OUT:
            w = (self.hp[mi, ki - 1, ci, S] + self.occ[mi, ki - 1, ci, S]) % BD
            self.ring[mi, ki - 1, ci, S, w] = moving
            self.occ[mi, ki - 1, ci, S] += 1
        elif out_idx == SOUTH_OUT:
            w = (self.hp[mi, ki + 1, ci, N] + self.occ[mi, ki + 1, ci, N]) % BD
            self.ring[mi, ki + 1, ci, N, w] = moving
            self.occ[mi, ki + 1, ci, N] += 1
        else:  # EXIT_OUT: into the egress stage feeding the LC link
            w = (self.egress_hp[mi, ki] + self.egress_occ[mi, ki]) % self.egress_depth
            self.egress_ring[mi, ki, w] = moving
            self.egress_occ[mi, ki] += 1
            store.stamp[moving] = slot
        if self.count_hops:
            for p in moving.tolist():
                self.hops[p] = self.hops.get(p, 0) + 1
        return len(mi)

    def subphase(self, slot: int, check: bool = False) -> int:
        """Arbitrate the output links and move the granted packets.

        One sub-phase enforces: at most one packet crosses each link and
        each packet advances at most one hop.  Room checks use live
        occupancy, and grants cascade backwards along a blocked chain
        (a hole opened downstream admits the packet behind it within the
        same sub-phase); passes repeat until no further packet can move.
        Returns the number of packets moved.

        The compiled kernel and this reference implementation are
        behaviorally identical; checked or hop-counting runs use the
        reference.
        """
        if _HAVE_NUMBA and not (check or self.count_hops):
            store = self.store
            return int(_subphase_kernel(
                self.occ, self.hp, self.ring, self.ptr, self.link_done,
                self.egress_ring, self.egress_occ, self.egress_hp,
                store.stamp, store.hopped, store.turn_col, store.dst_row,
                self.pop_east, self._head_dir, self._moved_buf,
                slot, self.BD, self.egress_depth))
        return self._subphase_reference(slot, check)

    def _subphase_reference(self, slot: int, check: bool = False) -> int:
        BD = self.BD
        Mm = self.M
        self.link_done[:] = False
        self._moved_pids.clear()
        moved = 0
        while True:
            before = moved
            pid3, east, exit_req, north, south = self._heads(slot, check=check)

            # exits first: they open holes at the east column
            d_x, any_x = self._rr_select(exit_req, EXIT_OUT)
            can_x = (any_x[:, :, Mm - 1]
                     & ~self.link_done[:, :, Mm - 1, EXIT_OUT]
                     & (self.egress_occ < self.egress_depth))
            freed_w = can_x & (d_x[:, :, Mm - 1] == W)
            mi, ki = np.nonzero(can_x)
            moved += self._move(EXIT_OUT, mi, ki, np.full(len(mi), Mm - 1), d_x[mi, ki, Mm - 1], pid3, slot)

            # east links, backward room cascade over columns
            if Mm > 1 and east.any():
                d_e, any_e = self._rr_select(east, EAST)
                grantable = np.zeros((self.m, self.k, Mm), dtype=bool)
                for c in range(Mm - 2, -1, -1):
                    room = (self.occ[:, :, c + 1, W] < BD) | freed_w
                    grantable[:, :, c] = any_e[:, :, c] & ~self.link_done[:, :, c, EAST] & room
                    freed_w = grantable[:, :, c] & (d_e[:, :, c] == W)
                mi, ki, ci = np.nonzero(grantable)
                moved += self._move(EAST, mi, ki, ci, d_e[mi, ki, ci], pid3, slot)

            # vertical links, backward cascade over rows
            if north.any():
                d_n, any_n = self._rr_select(north, NORTH_OUT)
                gr_n = np.zeros((self.m, self.k, Mm), dtype=bool)
                freed_s = np.zeros((self.m, Mm), dtype=bool)
                for r in range(1, self.k):
                    room = (self.occ[:, r - 1, :, S] < BD) | freed_s
                    gr_n[:, r, :] = any_n[:, r, :] & ~self.link_done[:, r, :, NORTH_OUT] & room
                    freed_s = gr_n[:, r, :] & (d_n[:, r, :] == S)
                mi, ki, ci = np.nonzero(gr_n)
                moved += self._move(NORTH_OUT, mi, ki, ci, d_n[mi, ki, ci], pid3, slot)
            if south.any():
                d_s, any_s = self._rr_select(south, SOUTH_OUT)
                gr_s = np.zeros((self.m, self.k, Mm), dtype=bool)
                freed_n = np.zeros((self.m, Mm), dtype=bool)
                for r in range(self.k - 2, -1, -1):
                    room = (self.occ[:, r + 1, :, N] < BD) | freed_n
                    gr_s[:, r, :] = any_s[:, r, :] & ~self.link_done[:, r, :, SOUTH_OUT] & room
                    freed_n = gr_s[:, r, :] & (d_s[:, r, :] == N)
                mi, ki, ci = np.nonzero(gr_s)
                moved += self._move(SOUTH_OUT, mi, ki, ci, d_s[mi, ki, ci], pid3, slot)

            if moved == before:
                break

        if self._moved_pids:
            self.store.hopped[np.concatenate(self._moved_pids)] = False
            self._moved_pids.clear()
        if check:
            assert np.all(self.occ <= BD), "ingress FIFO exceeded BD"
            assert np.all(self.egress_occ <= self.egress_depth)
        return moved

    # ---- egress (LC side) ----

    def collect_egress(self, slot: int) -> list[tuple[int, int, int]]:
        """Drain at most one packet per (mesh, row) across the LC links.

        Only heads that entered the egress stage in an earlier slot may
        cross (the LC link transmits one whole cell per slot).  Per-row
        emitted flags guard the cap and are reset before returning.
        """
        out = []
        if self.egress_occ.any():
            mi, ki = np.nonzero((self.egress_occ > 0) & ~self.egress_emitted)
            heads = self.egress_ring[mi, ki, self.egress_hp[mi, ki]]
            old = self.store.stamp[heads] < slot
            mi, ki, heads = mi[old], ki[old], heads[old]
            if len(mi):
                self.egress_hp[mi, ki] = (self.egress_hp[mi, ki] + 1) % self.egress_depth
                self.egress_occ[mi, ki] -= 1
                self.egress_emitted[mi, ki] = True
                np.add.at(self.exited, mi, 1)
                out = list(zip(mi.tolist(), ki.tolist(), heads.tolist()))
        self.egress_emitted[:] = False
        return out

    # ---- introspection ----

    def in_flight(self) -> int:
        return int(self.occ.sum() + self.egress_occ.sum())

    def in_flight_per_mesh(self) -> np.ndarray:
        return self.occ.sum(axis=(1, 2, 3)) + self.egress_occ.sum(axis=1)

    def check_conservation(self) -> None:
        flight = self.in_flight_per_mesh()
        if not np.array_equal(self.injected, self.exited + flight):
            raise AssertionError(
                f"mesh conservation broken: injected={self.injected.tolist()} "
                f"exited={self.exited.tolist()} in_flight={flight.tolist()}"
            )

    def fifo_contents(self, mesh: int, row: int, col: int, d: int) -> list[int]:
        occ = int(self.occ[mesh, row, col, d])
        hp = int(self.hp[mesh, row, col, d])
        return [int(self.ring[mesh, row, col, d, (hp + i) % self.BD]) for i in range(occ)]


class UdnMesh:
    """One unidirectional mesh, addressable as a standalone central module."""

    def __init__(self, k: int, M: int, BD: int, store: PacketStore,
                 cm_index: int = 0, count_hops: bool = False,
                 egress_depth: int = DEFAULT_EGRESS_DEPTH):
        self.k = k
        self.M = M
        self.BD = BD
        self.cm_index = cm_index
        self.store = store
        self.bank = MeshBank(1, k, M, BD, store, count_hops=count_hops,
                             egress_depth=egress_depth)

    def inject(self, row: int, pid: int, slot: int) -> bool:
        return self.bank.inject(0, row, pid, slot)

    def mesh_subphase(self, slot: int, check: bool = False) -> int:
        return self.bank.subphase(slot, check=check)

    def collect_egress(self, slot: int) -> list[tuple[int, int]]:
        return [(row, pid) for _, row, pid in self.bank.collect_egress(slot)]

    def in_flight(self) -> int:
        return self.bank.in_flight()

    @property
    def injected(self) -> int:
        return int(self.bank.injected[0])

    @property
    def exited(self) -> int:
        return int(self.bank.exited[0])

    def router(self, row: int, col: int) -> MiniRouter:
        names = {W: "west", N: "north", S: "south"}
        fifos = {names[d]: self.bank.fifo_contents(0, row, col, d) for d in (W, N, S)}
        ptrs = {
            "east": int(self.bank.ptr[0, row, col, EAST]),
            "north": int(self.bank.ptr[0, row, col, NORTH_OUT]),
            "south": int(self.bank.ptr[0, row, col, SOUTH_OUT]),
            "exit": int(self.bank.ptr[0, row, col, EXIT_OUT]),
        }
        return MiniRouter(row=row, col=col, ingress_fifos=fifos, output_pointers=ptrs)
