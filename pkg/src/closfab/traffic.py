"""
Per-slot packet generation: Bernoulli uniform, bursty on/off, unbalanced
(hot-spot) and diagonal arrival processes with exact offered-load
semantics.  At most one packet is generated per input port per slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ConfigError


class TrafficKind(str, Enum):
    BERNOULLI_UNIFORM = "bernoulli_uniform"
    BURSTY_UNIFORM = "bursty_uniform"
    UNBALANCED = "unbalanced"
    DIAGONAL = "diagonal"


@dataclass
class BurstState:
    """On/off phase of one input of the bursty model."""

    on: bool
    current_dst: int


@dataclass
class TrafficModel:
    """Traffic pattern and its load parameters.

    ``load`` is the offered load per input port.  ``omega`` is the
    unbalanced coefficient (0 = uniform, 1 = fully diagonal, 0.5 =
    hot-spot).  ``mean_burst`` is the average on-period length of the
    bursty model.
    """

    kind: TrafficKind = TrafficKind.BERNOULLI_UNIFORM
    load: float = 0.5
    omega: float = 0.0
    mean_burst: float = 10.0


def validate_model(model: TrafficModel) -> TrafficModel:
    errors = []
    try:
        kind = TrafficKind(model.kind)
    except ValueError:
        errors.append(f"unknown traffic kind {model.kind!r}")
        kind = None
    if not (0.0 <= model.load <= 1.0):
        errors.append(f"load must lie in [0, 1], got {model.load}")
    if not (0.0 <= model.omega <= 1.0):
        errors.append(f"omega must lie in [0, 1], got {model.omega}")
    if model.mean_burst < 1.0:
        errors.append(f"mean burst length must be >= 1, got {model.mean_burst}")
    if kind == TrafficKind.BURSTY_UNIFORM:
        if model.load >= 1.0:
            errors.append("bursty load must be < 1 (off->on probability diverges)")
        else:
            limit = model.mean_burst / (model.mean_burst + 1.0)
            if model.load > limit + 1e-12:
                errors.append(
                    f"bursty load {model.load} exceeds B/(B+1) = {limit:.6f}; "
                    "the off->on probability would exceed 1"
                )
    if errors:
        raise ConfigError(errors)
    return TrafficModel(TrafficKind(model.kind), model.load, model.omega, model.mean_burst)


def burst_probabilities(load: float, mean_burst: float) -> tuple[float, float]:
    """(p_on, p_off) for the two-state on/off chain.

    The on-dwell is geometric with mean B (leave probability 1/B) and the
    off->on probability is solved from the load identity
    rho = B / (B + mean_off), i.e. mean_off = B(1-rho)/rho.
    """
    if load >= 1.0:
        raise ConfigError(["bursty load must be < 1"])
    p_off = 1.0 / mean_burst
    if load <= 0.0:
        return 0.0, p_off
    p_on = load / (mean_burst * (1.0 - load))
    if p_on > 1.0:
        raise ConfigError([f"off->on probability {p_on:.4f} exceeds 1; reduce load"])
    return p_on, p_off


class TrafficGenerator:
    """Stateful per-run generator driven by one seeded RNG.

    ``generate_slot`` returns the (src, dst) global port index arrays for
    the packets arriving this slot; a (model, seed) pair fully determines
    the sequence.
    """

    def __init__(self, model: TrafficModel, n: int, k: int, rng: np.random.Generator):
        self.model = validate_model(model)
        self.n = n
        self.k = k
        self.N = n * k
        self.rng = rng
        self.ports = np.arange(self.N, dtype=np.int64)
        if self.model.kind == TrafficKind.BURSTY_UNIFORM:
            self.p_on, self.p_off = burst_probabilities(model.load, model.mean_burst)
            self.burst_on = np.zeros(self.N, dtype=bool)
            self.burst_dst = np.zeros(self.N, dtype=np.int64)

    def generate_slot(self, slot: int) -> tuple[np.ndarray, np.ndarray]:
        model = self.model
        if model.kind == TrafficKind.BURSTY_UNIFORM:
            return self._bursty_slot()
        fire = self.rng.random(self.N) < model.load
        srcs = self.ports[fire]
        if model.kind == TrafficKind.BERNOULLI_UNIFORM:
            dsts = self.rng.integers(0, self.N, size=len(srcs))
        elif model.kind == TrafficKind.DIAGONAL:
            dsts = srcs.copy()
        else:  # unbalanced
            uniform = self.rng.integers(0, self.N, size=len(srcs))
            diag = self.rng.random(len(srcs)) < model.omega
            dsts = np.where(diag, srcs, uniform)
        return srcs, dsts

    def burst_state(self, port: int) -> BurstState:
        if self.model.kind != TrafficKind.BURSTY_UNIFORM:
            raise ConfigError(["burst state only exists for the bursty model"])
        return BurstState(bool(self.burst_on[port]), int(self.burst_dst[port]))

    def _bursty_slot(self) -> tuple[np.ndarray, np.ndarray]:
        # Emission uses the state held at slot start; transitions apply
        # afterwards, so a fresh burst first emits in the following slot
        # and off-dwells last at least one slot (mean_off = 1/p_on).
        srcs = self.ports[self.burst_on]
        dsts = self.burst_dst[self.burst_on].copy()
        u = self.rng.random(self.N)
        leaving = self.burst_on & (u < self.p_off)
        entering = (~self.burst_on) & (u < self.p_on)
        self.burst_on[leaving] = False
        n_new = int(entering.sum())
        if n_new:
            self.burst_dst[entering] = self.rng.integers(0, self.N, size=n_new)
            self.burst_on[entering] = True
        return srcs, dsts
