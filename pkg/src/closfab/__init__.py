"""Slot-synchronous simulator for multistage Clos packet-switch fabrics:
Clos-UDN with NoC-mesh central modules, plus MSM/CRRD and MMM baselines."""

from .core import (
    Architecture,
    ConfigError,
    DispatchMode,
    Packet,
    PacketStore,
    PortAddress,
    SlotClock,
    SwitchConfig,
    decompose,
    validate,
)
from .traffic import BurstState, TrafficGenerator, TrafficKind, TrafficModel, validate_model
from .udn import Direction, MeshBank, MiniRouter, RoutingError, UdnMesh, route_next_hop, turn_column_for
from .closudn import ClosUdnFabric, InputModule, OutputModule, slot_step
from .baselines import MmmFabric, MsmFabric, crrd_match, mmm_slot_step, msm_cm_match
from .analysis import (
    BlockingModelInput,
    InversionTracker,
    RunMetrics,
    blocking_delay,
    crrd_crosspoints,
    finalize,
    md1_wait,
    p_ctr,
)
from .cli import ExperimentSpec, parse_config, run, run_single

__all__ = [
    "Architecture", "BlockingModelInput", "BurstState", "ClosUdnFabric", "ConfigError",
    "Direction", "DispatchMode", "ExperimentSpec", "InputModule",
    "InversionTracker", "MeshBank", "MiniRouter", "MmmFabric", "MsmFabric",
    "OutputModule", "Packet", "PacketStore", "PortAddress", "RoutingError",
    "RunMetrics", "SlotClock", "SwitchConfig", "TrafficGenerator",
    "TrafficKind", "TrafficModel", "UdnMesh", "blocking_delay",
    "crrd_crosspoints", "crrd_match", "decompose", "finalize", "md1_wait",
    "mmm_slot_step", "msm_cm_match", "p_ctr", "parse_config", "route_next_hop",
    "run", "run_single", "slot_step", "turn_column_for", "validate",
    "validate_model",
]
