"""Gossip-based file location simulator."""

from .config import ConfigError, dump_config, load_config, parse_config
from .engine import STRATEGIES, ChurnConfig, Event, Resolution, SimConfig, SimMetrics, Simulator, sim_run
from .node import (
    ClusterView,
    GossipConfig,
    NodeState,
    SimError,
    expiry_sweep,
    gossip_receive,
    gossip_round,
    merge_scanned,
    start_epoch,
)
from .traffic import estimate_traffic
from .wire import Payload, PayloadError, decode, encode, payload_size

__all__ = [
    "STRATEGIES", "ChurnConfig", "ClusterView", "ConfigError", "decode", "dump_config",
    "encode", "estimate_traffic", "Event", "expiry_sweep", "gossip_receive", "gossip_round",
    "GossipConfig", "load_config", "merge_scanned", "NodeState", "parse_config", "Payload",
    "payload_size", "PayloadError", "Resolution", "sim_run", "SimConfig", "SimError",
    "SimMetrics", "Simulator", "start_epoch",
]
