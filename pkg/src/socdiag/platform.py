"""Execution platform: processing nodes, mapping, and timed execution.

A diagnosis application is deployed by assigning every actor to a
processing node (n:1 is allowed). On-chip nodes are diagnosis
processors or fixed-function blocks with a bounded hardware run queue
and a cycles-per-firing cost; host-side soft nodes have unbounded
queues and, by default, zero modeled cost. Event sources (the event
generators) sit on-chip unless stated otherwise; sinks live on the
host.

Execution advances on a single logical clock. Events arrive at their
generation cycle, a node runs one firing to completion at a time, and
outputs appear when the firing finishes. Every channel counts the
events and wire bytes it carries; channels whose producer is on-chip
and whose consumer is host-side form the off-chip cut and are
additionally metered on the off-chip link, which can optionally be
capped at a configured bandwidth (crossing events then queue at the
boundary and serialize).

When an event arrives at a full run queue, the overload policy
decides:

* stall: the event waits at the node's ingress and is admitted once
  space frees up; nothing is lost, and the time spent waiting is
  accounted as stall cycles. The observed system's own timeline is not
  perturbed, so a stalled run processes exactly the reference events.
* discard: the event is dropped at ingress and counted per node.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .dataflow import (
    ActorGraph,
    BehaviorRegistry,
    EndpointKind,
    NoProgressReport,
    RuleKind,
    instantiate,
    validate_graph,
)
from .errors import UnmappedActor, UnsupportedBehavior, ValidationError
from .events import Event, EventTypeRegistry, wire_size
from .metering import BandwidthReport, CutCounter, compute_rates

DEFAULT_RUN_QUEUE = 16
DEFAULT_COST_CYCLES = 200
USB2_BANDWIDTH_BPS = 480_000_000


class NodeLocation(Enum):
    ON_CHIP = "on_chip"
    HOST = "host"


class NodeKind(Enum):
    DIAGNOSIS_PROCESSOR = "diagnosis_processor"
    FIXED_FUNCTION = "fixed_function"
    SOFT = "soft"


class OverloadPolicy(Enum):
    STALL = "stall"
    DISCARD = "discard"


@dataclass(frozen=True)
class ProcessingNode:
    node_id: str
    location: NodeLocation
    kind: NodeKind = NodeKind.DIAGNOSIS_PROCESSOR
    queue_capacity: int | None = None   # on-chip default applied in map_actors
    cost: int | dict[str, int] | None = None  # cycles per firing (on-chip)
    supports: tuple[str, ...] = ()      # fixed-function: allowed behaviors

    def cost_for(self, behavior: str) -> int:
        if self.location is NodeLocation.HOST:
            return 0
        if self.cost is None:
            return DEFAULT_COST_CYCLES
        if isinstance(self.cost, dict):
            return self.cost.get(behavior, self.cost.get("default", DEFAULT_COST_CYCLES))
        return self.cost


@dataclass
class DeployedPlatform:
    graph: ActorGraph
    nodes: dict[str, ProcessingNode]
    mapping: dict[str, str]                  # actor -> node id
    registry: EventTypeRegistry
    behaviors: BehaviorRegistry | None = None
    source_locations: dict[str, NodeLocation] = field(default_factory=dict)
    # derived below
    channel_producer_loc: list[NodeLocation] = field(default_factory=list)
    channel_consumer_loc: list[NodeLocation] = field(default_factory=list)
    boundary_up: set[int] = field(default_factory=set)    # chip -> host channels
    boundary_down: set[int] = field(default_factory=set)  # host -> chip channels

    def channel_labels(self) -> list[str]:
        return [ch.label for ch in self.graph.channels]


def map_actors(graph: ActorGraph, nodes, mapping: dict[str, str],
               registry: EventTypeRegistry, *,
               behaviors: BehaviorRegistry | None = None,
               source_locations: dict[str, NodeLocation] | None = None
               ) -> DeployedPlatform:
    """Deploy a validated graph onto processing nodes.

    Marks every channel that crosses the chip boundary for off-chip
    metering. Raises UnmappedActor / UnsupportedBehavior / ValidationError
    on a bad deployment.
    """
    problems = validate_graph(graph, behaviors=behaviors, registry=registry)
    if problems:
        raise ValidationError("; ".join(problems))

    node_map = {n.node_id: n for n in nodes}
    if len(node_map) != len(list(nodes)):
        raise ValidationError("duplicate node ids")
    normalized = {}
    for node in node_map.values():
        cap = node.queue_capacity
        if node.location is NodeLocation.HOST:
            cap = None  # host queues are unbounded
        elif cap is None:
            cap = DEFAULT_RUN_QUEUE
        normalized[node.node_id] = ProcessingNode(
            node.node_id, node.location, node.kind, cap, node.cost, node.supports)
    node_map = normalized

    for actor in graph.actors:
        if actor.name not in mapping:
            raise UnmappedActor(f"actor {actor.name!r} has no node assignment")
        node_id = mapping[actor.name]
        if node_id not in node_map:
            raise ValidationError(f"actor {actor.name!r} mapped to unknown node {node_id!r}")
        node = node_map[node_id]
        if node.kind is NodeKind.FIXED_FUNCTION and actor.behavior not in node.supports:
            raise UnsupportedBehavior(
                f"fixed-function node {node_id!r} cannot execute {actor.behavior!r}"
            )
    extra = set(mapping) - {a.name for a in graph.actors}
    if extra:
        raise ValidationError(f"mapping references unknown actors: {sorted(extra)}")

    src_loc = dict(source_locations or {})
    for s in graph.sources:
        src_loc.setdefault(s, NodeLocation.ON_CHIP)

    platform = DeployedPlatform(
        graph=graph, nodes=node_map, mapping=dict(mapping),
        registry=registry, behaviors=behaviors, source_locations=src_loc)

    def loc_of(ep) -> NodeLocation:
        if ep.kind is EndpointKind.SOURCE:
            return src_loc[ep.name]
        if ep.kind is EndpointKind.SINK:
            return NodeLocation.HOST
        return node_map[mapping[ep.name]].location

    for idx, ch in enumerate(graph.channels):
        p, c = loc_of(ch.producer), loc_of(ch.consumer)
        platform.channel_producer_loc.append(p)
        platform.channel_consumer_loc.append(c)
        if p is NodeLocation.ON_CHIP and c is NodeLocation.HOST:
            platform.boundary_up.add(idx)
        elif p is NodeLocation.HOST and c is NodeLocation.ON_CHIP:
            platform.boundary_down.add(idx)
    return platform


# --- timed execution ---------------------------------------------------------

@dataclass
class NodeStats:
    offered: int = 0      # events that arrived at the node's ingress
    admitted: int = 0     # events accepted into the run queue
    processed: int = 0    # events consumed by firings
    discarded: int = 0    # events dropped at ingress (discard policy)
    stalled_events: int = 0
    stall_cycles: int = 0
    residual: int = 0     # admitted events never consumed by run end
    unadmitted: int = 0   # stalled events never admitted by run end
    firings: int = 0


@dataclass
class LinkStats:
    up_events: int = 0
    up_bytes: int = 0
    down_events: int = 0
    down_bytes: int = 0


@dataclass
class ExecResult:
    sink_outputs: dict[str, list[Event]]
    node_stats: dict[str, NodeStats]
    channel_events: list[int]
    channel_bytes: list[int]
    link: LinkStats
    faults: list
    no_progress: list[NoProgressReport]
    last_cycle: int
    firing_intervals: dict[str, list[tuple[int, int]]] | None = None

    def channel_counters(self, platform: DeployedPlatform) -> dict[str, tuple[int, int]]:
        return {
            ch.label: (self.channel_events[i], self.channel_bytes[i])
            for i, ch in enumerate(platform.graph.channels)
        }


class _NodeState:
    __slots__ = ("node", "actors", "rr", "busy_until", "queue_len", "stalled",
                 "stats", "intervals")

    def __init__(self, node: ProcessingNode, record_intervals: bool):
        self.node = node
        self.actors: list[str] = []
        self.rr = 0
        self.busy_until = 0
        self.queue_len = 0
        self.stalled: deque = deque()  # (channel idx, arrival cycle, event)
        self.stats = NodeStats()
        self.intervals: list[tuple[int, int]] | None = [] if record_intervals else None


def execute(platform: DeployedPlatform,
            source_events: dict[str, list[tuple[int, Event]]],
            policy: OverloadPolicy | None = OverloadPolicy.STALL, *,
            link_bandwidth_bps: int | None = None,
            clock_hz: int = 50_000_000,
            deferred_sources: dict[str, list[Event]] | None = None,
            record_intervals: bool = False) -> ExecResult:
    """Run the deployed application over timestamped source events.

    policy=None ignores all queue capacities (the unbounded reference
    run used to judge the stall policy's losslessness).
    deferred_sources deliver once the platform has gone quiescent,
    one cycle after the last activity (end-of-run control events).
    """
    graph = platform.graph
    instances = instantiate(graph, platform.behaviors)
    registry = platform.registry

    n_ch = len(graph.channels)
    # queue entries are (admission number, event); admission numbers give
    # any_input its consumer-side arrival order
    queues: list[deque[tuple[int, Event]]] = [deque() for _ in range(n_ch)]
    ch_events = [0] * n_ch
    ch_bytes = [0] * n_ch
    link = LinkStats()

    in_channels: dict[str, list[int]] = {a.name: [-1] * a.n_inputs for a in graph.actors}
    out_channels: dict[str, list[int]] = {a.name: [-1] * a.n_outputs for a in graph.actors}
    sink_of_channel: dict[int, str] = {}
    consumer_node_of_channel: dict[int, str] = {}
    source_channel: dict[str, int] = {}
    for idx, ch in enumerate(graph.channels):
        if ch.producer.kind is EndpointKind.ACTOR:
            out_channels[ch.producer.name][ch.producer.port] = idx
        elif ch.producer.kind is EndpointKind.SOURCE:
            source_channel[ch.producer.name] = idx
        if ch.consumer.kind is EndpointKind.ACTOR:
            in_channels[ch.consumer.name][ch.consumer.port] = idx
            consumer_node_of_channel[idx] = platform.mapping[ch.consumer.name]
        else:
            sink_of_channel[idx] = ch.consumer.name

    node_ids = sorted(platform.nodes)
    node_index = {nid: i for i, nid in enumerate(node_ids)}
    nodes: list[_NodeState] = [
        _NodeState(platform.nodes[nid], record_intervals) for nid in node_ids
    ]
    for actor in graph.actors:
        nodes[node_index[platform.mapping[actor.name]]].actors.append(actor.name)

    sink_outputs: dict[str, list[Event]] = {s: [] for s in graph.sinks}

    # calendar actions: arrivals carry (channel, event); node-free
    # actions carry the node index in the channel slot
    _ARRIVE, _FREE = 0, 1
    calendar: list[tuple[int, int, int, int, Event | None]] = []
    seq = 0
    admit_seq = 0
    last_cycle = 0

    def push(cycle: int, kind: int, channel: int, event: Event | None) -> None:
        nonlocal seq
        heapq.heappush(calendar, (cycle, seq, kind, channel, event))
        seq += 1

    link_free = 0

    def emit(channel_idx: int, cycle: int, event: Event) -> None:
        """Meter the event on its channel and schedule its arrival."""
        nonlocal link_free
        size = wire_size(registry, event)
        ch_events[channel_idx] += 1
        ch_bytes[channel_idx] += size
        arrival = cycle
        if channel_idx in platform.boundary_up or channel_idx in platform.boundary_down:
            if channel_idx in platform.boundary_up:
                link.up_events += 1
                link.up_bytes += size
            else:
                link.down_events += 1
                link.down_bytes += size
            if link_bandwidth_bps:
                # events serialize over the capped link, FIFO
                start = max(cycle, link_free)
                delay = max(1, -(-size * 8 * clock_hz // link_bandwidth_bps))
                arrival = start + delay
                link_free = arrival
        push(arrival, _ARRIVE, channel_idx, event)

    bounded = policy is not None

    def admit(ns: _NodeState, channel_idx: int, event: Event) -> None:
        nonlocal admit_seq
        queues[channel_idx].append((admit_seq, event))
        admit_seq += 1
        ns.queue_len += 1
        ns.stats.admitted += 1

    def try_admit_stalled(ns: _NodeState, now: int) -> None:
        cap = ns.node.queue_capacity
        while ns.stalled and ns.queue_len < cap:
            channel_idx, arrived, event = ns.stalled.popleft()
            admit(ns, channel_idx, event)
            ns.stats.stall_cycles += now - arrived

    def rule_ready(name: str) -> bool:
        spec = instances[name].spec
        chans = in_channels[name]
        rule = spec.rule
        if rule.kind is RuleKind.ALL_INPUTS:
            return all(queues[c] for c in chans)
        if rule.kind is RuleKind.COUNTS:
            return all(len(queues[c]) >= n for c, n in zip(chans, rule.counts))
        return any(queues[c] for c in chans)

    def consume(name: str) -> list[Event]:
        spec = instances[name].spec
        chans = in_channels[name]
        rule = spec.rule
        taken: list[Event] = []
        if rule.kind is RuleKind.ALL_INPUTS:
            for c in chans:
                taken.append(queues[c].popleft()[1])
        elif rule.kind is RuleKind.COUNTS:
            for c, n in zip(chans, rule.counts):
                for _ in range(n):
                    taken.append(queues[c].popleft()[1])
        else:
            # earliest admission across this actor's inputs
            best = min(
                (c for c in chans if queues[c]),
                key=lambda c: queues[c][0][0],
            )
            taken.append(queues[best].popleft()[1])
        return taken

    def try_fire(ns: _NodeState, now: int) -> None:
        if now < ns.busy_until:
            return
        guard = 0
        while True:
            guard += 1
            if guard > 1_000_000:
                raise RuntimeError("runaway zero-cost firing loop")
            chosen = None
            n_actors = len(ns.actors)
            for k in range(n_actors):
                name = ns.actors[(ns.rr + k) % n_actors]
                if rule_ready(name):
                    chosen = name
                    ns.rr = (ns.rr + k + 1) % n_actors
                    break
            if chosen is None:
                return
            inst = instances[chosen]
            inputs = consume(chosen)
            ns.queue_len -= len(inputs)
            ns.stats.processed += len(inputs)
            ns.stats.firings += 1
            cost = ns.node.cost_for(inst.spec.behavior)
            done = now + cost
            if ns.intervals is not None:
                ns.intervals.append((now, done))
            outputs = inst.fire(inputs)
            for port, event in outputs:
                emit(out_channels[chosen][port], done, event)
            if bounded:
                try_admit_stalled(ns, now)
            if cost > 0:
                ns.busy_until = done
                push(done, _FREE, node_index[ns.node.node_id], None)
                return
            # zero-cost node: keep firing at the same cycle

    # sources deliver at their generation cycles; same-cycle events from
    # different sources are ordered by source declaration order
    for name in graph.sources:
        channel_idx = source_channel[name]
        for cycle, event in source_events.get(name, ()):
            emit(channel_idx, cycle, event)

    deferred_pending = bool(deferred_sources)
    while calendar or deferred_pending:
        if not calendar:
            for name in graph.sources:
                for event in (deferred_sources or {}).get(name, ()):
                    emit(source_channel[name], last_cycle + 1, event)
            deferred_pending = False
            continue
        cycle, _, kind, channel_idx, event = heapq.heappop(calendar)
        last_cycle = max(last_cycle, cycle)
        if kind == _ARRIVE:
            sink = sink_of_channel.get(channel_idx)
            if sink is not None:
                sink_outputs[sink].append(event)
                continue
            ns = nodes[node_index[consumer_node_of_channel[channel_idx]]]
            ns.stats.offered += 1
            cap = ns.node.queue_capacity
            if bounded and cap is not None and ns.queue_len >= cap:
                if policy is OverloadPolicy.DISCARD:
                    ns.stats.discarded += 1
                else:
                    ns.stalled.append((channel_idx, cycle, event))
                    ns.stats.stalled_events += 1
                continue
            admit(ns, channel_idx, event)
            try_fire(ns, cycle)
        else:  # _FREE
            ns = nodes[channel_idx]
            if bounded:
                try_admit_stalled(ns, cycle)
            try_fire(ns, cycle)

    no_progress = []
    for actor in graph.actors:
        pending = {
            port: len(queues[c])
            for port, c in enumerate(in_channels[actor.name])
            if queues[c]
        }
        if pending:
            no_progress.append(NoProgressReport(actor.name, pending))

    for ns in nodes:
        ns.stats.residual = sum(
            len(queues[c])
            for name in ns.actors
            for c in in_channels[name]
        )
        ns.stats.unadmitted = len(ns.stalled)

    faults = [f for inst in instances.values() for f in inst.faults]
    result = ExecResult(
        sink_outputs=sink_outputs,
        node_stats={nid: nodes[node_index[nid]].stats for nid in node_ids},
        channel_events=ch_events,
        channel_bytes=ch_bytes,
        link=link,
        faults=faults,
        no_progress=no_progress,
        last_cycle=last_cycle,
    )
    if record_intervals:
        result.firing_intervals = {
            nid: nodes[node_index[nid]].intervals or [] for nid in node_ids
        }
    return result


# --- reports -----------------------------------------------------------------

def bandwidth_report(platform: DeployedPlatform, result: ExecResult, *,
                     duration_cycles: int, clock_hz: int = 50_000_000,
                     cuts: dict[str, list[str]] | None = None,
                     ratios: dict[str, tuple[str, str]] | None = None,
                     full_trace_estimate_bits: int | None = None) -> BandwidthReport:
    """Aggregate channel counters into named cuts and derived rates.

    The "offchip" cut (all chip-to-host channels) is always present;
    extra cuts name groups of channels by label.
    """
    label_to_idx = {ch.label: i for i, ch in enumerate(platform.graph.channels)}
    cut_defs: dict[str, list[int]] = {
        "offchip": sorted(platform.boundary_up),
    }
    for name, labels in (cuts or {}).items():
        idxs = []
        for label in labels:
            if label not in label_to_idx:
                raise ValidationError(f"cut {name!r}: unknown channel {label!r}")
            idxs.append(label_to_idx[label])
        cut_defs[name] = idxs

    counters = []
    for name, idxs in cut_defs.items():
        counters.append(CutCounter(
            name=name,
            events=sum(result.channel_events[i] for i in idxs),
            bytes=sum(result.channel_bytes[i] for i in idxs),
        ))
    return compute_rates(
        counters, duration_cycles, clock_hz,
        ratios=ratios, full_trace_estimate_bits=full_trace_estimate_bits)


def estimate_full_trace(n_instructions: int, n_data_accesses: int) -> int:
    """Estimated upper-bound conventional trace size in bits: a program
    trace at 2 bit/instruction plus a data trace at 16 bit/access."""
    if n_instructions < 0 or n_data_accesses < 0:
        raise ValueError("counts must be >= 0")
    return 2 * n_instructions + 16 * n_data_accesses
