from calflow.frontend.network import ActorInstance, Connection, NetworkGraph, parse_program
from calflow.frontend.parser import parse_source
from calflow.frontend.xcf import ChannelConfig, Partition, PartitionPlan, emit_xcf, parse_xcf

__all__ = [
    "ActorInstance",
    "ChannelConfig",
    "Connection",
    "NetworkGraph",
    "Partition",
    "PartitionPlan",
    "emit_xcf",
    "parse_program",
    "parse_source",
    "parse_xcf",
]
