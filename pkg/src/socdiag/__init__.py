"""Deterministic simulator for on-chip diagnosis of multi-core SoC software.

Synthetic per-CPU trace streams are monitored by configurable event
generators; the resulting events flow through a dataflow application
mapped onto modeled on-chip and host-side processing nodes, and every
byte crossing the off-chip boundary is accounted for.
"""

from .events import (
    Event,
    EventTypeRegistry,
    builtin_registry,
    decode_event,
    encode_event,
    wire_size,
)
from .workloads import (
    GroundTruth,
    TraceRecord,
    WorkloadKind,
    WorkloadSpec,
    generate_workload,
    interleaved_fraction,
    read_event_log,
    write_event_log,
)

__version__ = "0.1.0"

__all__ = [
    "Event",
    "EventTypeRegistry",
    "builtin_registry",
    "encode_event",
    "decode_event",
    "wire_size",
    "TraceRecord",
    "WorkloadKind",
    "WorkloadSpec",
    "GroundTruth",
    "generate_workload",
    "interleaved_fraction",
    "read_event_log",
    "write_event_log",
    "__version__",
]
