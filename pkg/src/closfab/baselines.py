"""
Comparison architectures: MSM with concurrent round-robin dispatching
(two-phase iterative matching, bufferless central modules) and the fully
buffered MMM (VOQ -> VCMQ -> CM crosspoint -> OM crosspoint -> output,
every stage credit-gated).

Dispatching-time complexity, for reference against the Clos-UDN's single
non-iterative phase of m arbiters (O(log m) per input module):
  * CRRD runs iter iterations of link/VOQ arbitration over n*k queues,
    O(iter * log(nk)) in phase 1, plus one O(log k) grant per central
    output link in phase 2; its arbiter interconnect needs
    3/4 * nkm(nk-1)(m-1) crosspoints (see analysis.crrd_crosspoints).
  * MMM selects per-port among n*k VOQs and per-IM among n VCMQs,
    O(log nN) per input module, with O(log k^2) central and O(log nm)
    output-module arbitration.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import PacketStore, SwitchConfig, allocate_arrivals, validate
from .closudn import OutputModule, StepResult


def rr_next(mask: int, start: int) -> int:
    """Index of the lowest set bit at or cyclically after ``start``; -1 if
    the mask is empty."""
    if mask == 0:
        return -1
    shifted = mask >> start
    if shifted:
        return start + (shifted & -shifted).bit_length() - 1
    return (mask & -mask).bit_length() - 1


def crrd_match(nonempty: int, link_ptrs: list[int], voq_ptrs: list[int],
               iterations: int) -> list[tuple[int, int]]:
    """Iterative VOQ <-> output-link matching inside one input module.

    Each iteration every unmatched link arbiter grants one requesting
    unmatched VOQ (round-robin from its pointer) and every VOQ accepts
    one grant (round-robin from its pointer).  Returns conflict-free
    (voq_index, link_index) pairs; pointer updates are the caller's
    responsibility because they depend on the central-module phase.
    """
    m = len(link_ptrs)
    unmatched = nonempty
    free_links = list(range(m))
    matches: list[tuple[int, int]] = []
    for _ in range(iterations):
        if unmatched == 0 or not free_links:
            break
        grants: dict[int, list[int]] = {}
        for r in free_links:
            d = rr_next(unmatched, link_ptrs[r])
            if d >= 0:
                grants.setdefault(d, []).append(r)
        if not grants:
            break
        for d, rs in grants.items():
            r = min(rs, key=lambda x: (x - voq_ptrs[d]) % m)
            matches.append((d, r))
            unmatched &= ~(1 << d)
            free_links.remove(r)
    return matches

def msm_cm_match(requests: dict[tuple[int, int], list[int]],
                 cm_ptrs, k: int) -> dict[tuple[int, int], int]:
    """Grant one request per central-module output link.

    ``requests`` maps (cm_index, om_index) to the list of requesting
    input-module indices (0..k-1); each LC arbiter picks round-robin from
    its pointer.  Returns the granted IM per link; pointers advance past
    the grant.
    """
    grants = {}
    for (r, j), ims in requests.items():
        if not ims:
            continue
        ptr = cm_ptrs[r][j]
        win = min(ims, key=lambda i: (i - ptr) % k)
        grants[(r, j)] = win
        cm_ptrs[r][j] = (win + 1) % k
    return grants


class MsmFabric:
    """Memory-space-memory switch with CRRD dispatching.

    Central modules are bufferless: a packet matched in phase 1 and
    granted in phase 2 crosses IM -> CM -> OM within the slot.  VOQ and
    link pointers advance only on a full two-phase grant, which keeps
    them desynchronized under backlog.
    """

    def __init__(self, cfg: SwitchConfig, store: PacketStore | None = None,
                 check: bool = False):
        cfg = validate(cfg)
        self.cfg = cfg
        self.n, self.k, self.m = cfg.n, cfg.k, cfg.m
        self.N = cfg.N
        self.iterations = cfg.iterations
        self.check = check
        self.store = store or PacketStore(cfg.n, cfg.k, cfg.M)
        self.voqs = [[deque() for _ in range(self.N)] for _ in range(self.k)]
        self.nonempty = [0] * self.k
        # Staggered start: link r of IM i begins at a VOQ of output module
        # (r + i) mod k, so initial requests form a conflict-free pattern
        # both inside each IM and across IMs per central module.
        self.link_ptrs = [[((r + i) % self.k) * self.n for r in range(self.m)]
                          for i in range(self.k)]
        self.voq_ptrs = [[0] * self.N for _ in range(self.k)]
        self.cm_ptrs = [[0] * self.k for _ in range(self.m)]
        self.oms = [OutputModule(j, self.n) for j in range(self.k)]
        self.flow_counters = np.zeros(self.N * self.N, dtype=np.int64)
        self.arrivals_total = 0
        self.delivered_total = 0

    def _arrive(self, slot: int, srcs, dsts) -> int:
        pids = allocate_arrivals(self.store, self.flow_counters, self.N, srcs, dsts, slot)
        n = self.n
        for idx, pid in enumerate(pids):
            s = int(srcs[idx])
            d = int(dsts[idx])
            i = s // n
            self.voqs[i][d].append(int(pid))
            self.nonempty[i] |= 1 << d
        self.arrivals_total += len(pids)
        return len(pids)

    def step(self, slot: int, srcs, dsts) -> StepResult:
        arrivals = self._arrive(slot, srcs, dsts)
        n = self.n

        # Phase 1: matching within each IM.
        matches = [crrd_match(self.nonempty[i], self.link_ptrs[i],
                              self.voq_ptrs[i], self.iterations)
                   for i in range(self.k)]
        if self.check:
            for per_im in matches:
                ds = [d for d, _ in per_im]
                rs = [r for _, r in per_im]
                assert len(set(ds)) == len(ds) and len(set(rs)) == len(rs), \
                    "CRRD produced a conflicting matching"

        # Phase 2: one grant per LC(r, j) arbiter.
        requests: dict[tuple[int, int], list[int]] = {}
        match_of: dict[tuple[int, int], int] = {}
        for i, per_im in enumerate(matches):
            for d, r in per_im:
                requests.setdefault((r, d // n), []).append(i)
                match_of[(r, i)] = d
        grants = msm_cm_match(requests, self.cm_ptrs, self.k)

        transferred = 0
        for (r, j), i in grants.items():
            d = match_of[(r, i)]
            pid = self.voqs[i][d].popleft()
            if not self.voqs[i][d]:
                self.nonempty[i] &= ~(1 << d)
            self.oms[j].deposit(d % n, pid, slot)
            self.link_ptrs[i][r] = (d + 1) % self.N
            self.voq_ptrs[i][d] = (r + 1) % self.m
            transferred += 1

        delivered = []
        for om in self.oms:
            delivered.extend(om.emit(slot))
        if delivered:
            self.store.departure[delivered] = slot
            self.delivered_total += len(delivered)
        return StepResult(arrivals=arrivals, dispatched=transferred,
                          delivered=delivered, dropped=0,
                          in_flight=self.in_flight())

    def in_flight(self) -> int:
        voq = sum(len(q) for per_im in self.voqs for q in per_im)
        return voq + sum(om.backlog() for om in self.oms)


class MmmFabric:
    """Fully buffered memory-memory-memory switch.

    Cells advance one stage per slot: port VOQs, per-CM virtual queues
    (VCMQs), CM crosspoints of size b, OM crosspoints of size b, output.
    Stages run in reverse order each slot so transfers never leapfrog,
    and VOQ -> VCMQ moves reserve crosspoint credits so no crosspoint
    ever exceeds b.
    """

    def __init__(self, cfg: SwitchConfig, store: PacketStore | None = None,
                 check: bool = False):
        cfg = validate(cfg)
        self.cfg = cfg
        self.n, self.k, self.m = cfg.n, cfg.k, cfg.m
        self.N = cfg.N
        self.b = cfg.crosspoint_b
        self.lqf = cfg.mmm_input_policy == "lqf"
        self.check = check
        self.store = store or PacketStore(cfg.n, cfg.k, cfg.M)
        k, n, m = self.k, self.n, self.m
        # voq[i][h][j], vcmq[i][h][r], xp[r][i][j], oxp[j][r][h]
        self.voq = [[[deque() for _ in range(k)] for _ in range(n)] for _ in range(k)]
        self.voq_mask = [[0] * n for _ in range(k)]
        self.vcmq = [[[deque() for _ in range(m)] for _ in range(n)] for _ in range(k)]
        self.vcmq_mask = [[0] * m for _ in range(k)]          # [i][r] over ports h
        self.xp = [[[deque() for _ in range(k)] for _ in range(k)] for _ in range(m)]
        self.xp_mask = [[0] * k for _ in range(m)]            # [r][j] over IMs i
        self.oxp = [[[deque() for _ in range(n)] for _ in range(m)] for _ in range(k)]
        self.oxp_mask = [[0] * n for _ in range(k)]           # [j][h] over CMs r
        # crosspoint credits: b minus cells in flight (VCMQ + crosspoint)
        # per (input module, CM, OM); reserved on VOQ departure
        self.credits = [[[self.b] * k for _ in range(m)] for _ in range(k)]
        self.port_voq_ptr = [[0] * n for _ in range(k)]
        self.port_cm_ptr = [[0] * n for _ in range(k)]
        self.li_ptr = [[0] * m for _ in range(k)]
        self.lc_ptr = [[0] * k for _ in range(m)]
        self.op_ptr = [[0] * n for _ in range(k)]
        self.flow_counters = np.zeros(self.N * self.N, dtype=np.int64)
        self.arrivals_total = 0
        self.delivered_total = 0

    # -- stage 1 (runs last in wall-clock order of a cell's life): output --

    def _emit(self, slot: int) -> list[int]:
        delivered = []
        for j in range(self.k):
            for h in range(self.n):
                mask = self.oxp_mask[j][h]
                if mask == 0:
                    continue
                r = rr_next(mask, self.op_ptr[j][h])
                q = self.oxp[j][r][h]
                pid = q.popleft()
                if not q:
                    self.oxp_mask[j][h] &= ~(1 << r)
                self.op_ptr[j][h] = (r + 1) % self.m
                delivered.append(pid)
        return delivered

    def _cm_forward(self) -> None:
        # One cell per LC(r, j) into the OM crosspoint, skipping candidates
        # whose OM crosspoint is full, round-robin; forwarding releases the
        # input module's reservation.
        b = self.b
        for r in range(self.m):
            for j in range(self.k):
                mask = self.xp_mask[r][j]
                if mask == 0:
                    continue
                ptr = self.lc_ptr[r][j]
                mm = mask
                while mm:
                    i = rr_next(mm, ptr)
                    q = self.xp[r][i][j]
                    pid = q[0]
                    h = int(self.store.dst_local[pid])
                    if len(self.oxp[j][r][h]) < b:
                        q.popleft()
                        if not q:
                            self.xp_mask[r][j] &= ~(1 << i)
                        self.oxp[j][r][h].append(pid)
                        self.oxp_mask[j][h] |= 1 << r
                        self.credits[i][r][j] += 1
                        self.lc_ptr[r][j] = (i + 1) % self.k
                        break
                    mm &= ~(1 << i)

    def _vcmq_forward(self) -> None:
        # One cell per LI(i, r) into its reserved crosspoint; room is
        # guaranteed by the reservation taken at the VOQ stage.
        for i in range(self.k):
            for r in range(self.m):
                mask = self.vcmq_mask[i][r]
                if mask == 0:
                    continue
                h = rr_next(mask, self.li_ptr[i][r])
                q = self.vcmq[i][h][r]
                pid = q.popleft()
                if not q:
                    self.vcmq_mask[i][r] &= ~(1 << h)
                j = int(self.store.dst_row[pid])
                if self.check:
                    assert len(self.xp[r][i][j]) < self.b, "crosspoint overflow"
                self.xp[r][i][j].append(pid)
                self.xp_mask[r][j] |= 1 << i
                self.li_ptr[i][r] = (h + 1) % self.n

    def _voq_forward(self) -> None:
        # Per input port: pick a VOQ (RR or LQF order) and the first CM
        # holding a free reservation for its crosspoint; one cell per port
        # per slot, skipping fully blocked VOQs.
        m = self.m
        for i in range(self.k):
            credits = self.credits[i]
            for h in range(self.n):
                mask = self.voq_mask[i][h]
                if mask == 0:
                    continue
                if self.lqf:
                    order = []
                    mm = mask
                    while mm:
                        j = (mm & -mm).bit_length() - 1
                        order.append((-len(self.voq[i][h][j]), j))
                        mm &= mm - 1
                    order.sort()
                    candidates = [j for _, j in order]
                else:
                    start = rr_next(mask, self.port_voq_ptr[i][h])
                    candidates = []
                    mm = mask
                    while mm:
                        j = (mm & -mm).bit_length() - 1
                        candidates.append(j)
                        mm &= mm - 1
                    candidates.sort(key=lambda j: (j - start) % self.k)
                ptr = self.port_cm_ptr[i][h]
                for j_sel in candidates:
                    done = False
                    for off in range(m):
                        r = (ptr + off) % m
                        if credits[r][j_sel] > 0:
                            q = self.voq[i][h][j_sel]
                            pid = q.popleft()
                            if not q:
                                self.voq_mask[i][h] &= ~(1 << j_sel)
                            credits[r][j_sel] -= 1
                            self.vcmq[i][h][r].append(pid)
                            self.vcmq_mask[i][r] |= 1 << h
                            self.port_cm_ptr[i][h] = (r + 1) % m
                            if not self.lqf:
                                self.port_voq_ptr[i][h] = (j_sel + 1) % self.k
                            done = True
                            break
                    if done:
                        break

    def _arrive(self, slot: int, srcs, dsts) -> int:
        pids = allocate_arrivals(self.store, self.flow_counters, self.N, srcs, dsts, slot)
        n = self.n
        for idx, pid in enumerate(pids):
            s = int(srcs[idx])
            i, h = s // n, s % n
            j = int(self.store.dst_row[pid])
            self.voq[i][h][j].append(int(pid))
            self.voq_mask[i][h] |= 1 << j
        self.arrivals_total += len(pids)
        return len(pids)

    def step(self, slot: int, srcs, dsts) -> StepResult:
        delivered = self._emit(slot)
        self._cm_forward()
        self._vcmq_forward()
        self._voq_forward()
        arrivals = self._arrive(slot, srcs, dsts)
        if delivered:
            self.store.departure[delivered] = slot
            self.delivered_total += len(delivered)
        return StepResult(arrivals=arrivals, dispatched=0,
                          delivered=delivered, dropped=0,
                          in_flight=self.in_flight())

    def in_flight(self) -> int:
        total = 0
        for i in range(self.k):
            for h in range(self.n):
                total += sum(len(q) for q in self.voq[i][h])
                total += sum(len(q) for q in self.vcmq[i][h])
        for r in range(self.m):
            for i in range(self.k):
                total += sum(len(q) for q in self.xp[r][i])
        for j in range(self.k):
            for r in range(self.m):
                total += sum(len(q) for q in self.oxp[j][r])
        return total

    def max_crosspoint_occupancy(self) -> int:
        mx = 0
        for r in range(self.m):
            for i in range(self.k):
                for q in self.xp[r][i]:
                    mx = max(mx, len(q))
        for j in range(self.k):
            for r in range(self.m):
                for q in self.oxp[j][r]:
                    mx = max(mx, len(q))
        return mx


def mmm_slot_step(fabric: MmmFabric, slot: int, arrivals) -> StepResult:
    """Advance an MMM fabric by one slot with (src, dst) pair arrivals."""
    if len(arrivals):
        srcs, dsts = zip(*arrivals)
    else:
        srcs, dsts = (), ()
    return fabric.step(slot, np.asarray(srcs, dtype=np.int64),
                       np.asarray(dsts, dtype=np.int64))
