"""
Closed-form models and the run-metrics engine.

The blocking model estimates the average wait a packet spends in an
input-module FIFO when dispatch is throttled by the finite buffers of
the left-most mesh routers: a feedback-control signal fires when a
packet meets a saturated buffer, thinning the FIFO service rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class BlockingModelInput:
    """Inputs of the blocking-delay estimate.

    ``rho`` is the traffic intensity (must be < 1), ``mu`` the mean
    service rate of the FIFO, ``BD`` the router ingress-buffer depth and
    ``n_ingr`` the router ingress count (4 for intermediate-column
    routers, which is the default).
    """

    rho: float
    mu: float = 1.0
    BD: int = 4
    n_ingr: int = 4


def p_ctr(P_p: float, P_serv: float, BD: int) -> float:
    """Probability the flow-control signal blocks a dispatch attempt:
    [P_p (1 - P_serv)]^BD."""
    if not (0.0 <= P_p <= 1.0 and 0.0 <= P_serv <= 1.0):
        raise ValueError(f"P_p and P_serv must lie in [0, 1], got {P_p}, {P_serv}")
    if BD < 1:
        raise ValueError(f"BD must be >= 1, got {BD}")
    return (P_p * (1.0 - P_serv)) ** BD

def blocking_delay(inp: BlockingModelInput) -> float:
    """Average blocking wait in an input FIFO, in slots.

    P_p is instantiated as rho (the server-busy probability of the
    M/D/1 abstraction); P_serv = 1/n_ingr models fair round-robin
    resolution among the router's ingresses.  The FIFO's effective
    service rate is thinned to mu' = P_fwd * mu with
    P_fwd = P_p (1 - P_ctr), and the wait is (1/(2 mu')) rho/(1-rho).
    """
    if not (0.0 <= inp.rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {inp.rho}")
    if inp.mu <= 0.0:
        raise ValueError(f"mu must be > 0, got {inp.mu}")
    if inp.n_ingr < 1:
        raise ValueError(f"n_ingr must be >= 1, got {inp.n_ingr}")
    if inp.rho == 0.0:
        return 0.0
    p_present = inp.rho
    p_serv = 1.0 / inp.n_ingr
    ctr = p_ctr(p_present, p_serv, inp.BD)
    p_fwd = p_present * (1.0 - ctr)
    mu_eff = p_fwd * inp.mu
    return (1.0 / (2.0 * mu_eff)) * (inp.rho / (1.0 - inp.rho))


def md1_wait(rho: float) -> float:
    """Mean M/D/1 queueing wait with unit service time: rho / (2(1-rho))."""
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    return rho / (2.0 * (1.0 - rho))


def crrd_crosspoints(n: int, k: int, m: int) -> int:
    """Crosspoint count of the iterative-dispatch arbiter interconnect:
    (3/4) n k m (nk - 1)(m - 1), evaluated exactly."""
    if min(n, k, m) < 1:
        raise ValueError("n, k, m must be positive")
    return 3 * n * k * m * (n * k - 1) * (m - 1) // 4


class InversionTracker:
    """Counts out-of-sequence departures per flow.

    A departure whose flow sequence number is smaller than the largest
    already departed for that flow counts as one inversion.
    """

    def __init__(self, n_flows: int):
        self.max_seq = np.full(n_flows, -1, dtype=np.int64)
        self.inversions = 0

    def record(self, flow_id: int, seq: int) -> bool:
        if seq < self.max_seq[flow_id]:
            self.inversions += 1
            return True
        self.max_seq[flow_id] = seq
        return False


@dataclass
class RunMetrics:
    """Accumulated statistics of one run (post-warmup unless noted)."""

    n: int
    k: int
    warmup_slots: int
    total_slots: int
    injected: int = 0            # arrivals offered, whole run
    delivered: int = 0           # departures inside the measured window
    dropped: int = 0
    delay_sum: int = 0
    delay_hist: dict = field(default_factory=dict)
    ooo_inversions: int = 0
    im_wait_sum: int = 0
    im_wait_count: int = 0
    pop_east: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.n * self.k

    @property
    def measured_slots(self) -> int:
        return self.total_slots - self.warmup_slots


def finalize(metrics: RunMetrics) -> dict:
    """Reduce accumulated counters to one flat summary record.

    With zero deliveries the delay is reported as NaN, never zero.
    """
    measured = max(metrics.measured_slots, 1)
    throughput = metrics.delivered / (metrics.N * measured)
    if metrics.delivered > 0:
        mean_delay = metrics.delay_sum / metrics.delivered
        ooo_fraction = metrics.ooo_inversions / metrics.delivered
    else:
        mean_delay = math.nan
        ooo_fraction = math.nan
    record = {
        "throughput": throughput,
        "mean_delay": mean_delay,
        "delivered": metrics.delivered,
        "injected": metrics.injected,
        "dropped": metrics.dropped,
        "ooo_inversions": metrics.ooo_inversions,
        "ooo_fraction": ooo_fraction,
        "mean_im_wait": (metrics.im_wait_sum / metrics.im_wait_count)
        if metrics.im_wait_count else math.nan,
    }
    if metrics.pop_east is not None:
        total = metrics.pop_east.sum(axis=(1, 2), keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            record["pop_east_proportions"] = np.where(
                total > 0, metrics.pop_east / total, 0.0
            )
        record["pop_east_counts"] = metrics.pop_east
    return record
