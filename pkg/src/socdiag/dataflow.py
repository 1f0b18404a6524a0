"""Dataflow model of computation for diagnosis applications.

A diagnosis application is a directed graph: transformation actors
connected by FIFO channels, fed by named sources (event-generator
bindings) and drained by named sinks. An actor fires when its firing
rule is satisfied, consumes exactly the events the rule declares, and
may emit events on its output ports; its output depends only on the
consumed events, their order, and the actor's private state. Actors
share nothing except channels.

Firing rules:

* all_inputs: one event from every input, read in port order.
* counts(c0, c1, ...): ci events from input i, read in port order.
* any_input: one event from whichever input received data first
  (by arrival order at the consumer; ties cannot occur because
  arrival numbers are globally unique).

A graph is classified deterministic when every actor reads its inputs
in fixed order (all_inputs/counts), every behavior is flagged
deterministic, and no sink merges more than one channel; such graphs
produce byte-identical sink output under any scheduler. any_input
merges are the sanctioned source of nondeterminism and are reported as
such.

The reference engine is a single-threaded discrete scheduler with
unbounded channels. Timed execution on bounded processing nodes lives
in the platform module and reuses the same graph and behaviors.
"""

from __future__ import annotations

import traceback
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import ValidationError
from .events import Event, EventTypeRegistry
from .rng import SplitMix64


# --- behaviors -------------------------------------------------------------

class Behavior:
    """Base class for transformation functions.

    Subclasses set `deterministic = False` if their output depends on
    anything besides consumed inputs, input order, and private state.
    fire() returns (output port, event) pairs in emission order.
    """

    deterministic = True

    def fire(self, inputs: list[Event]) -> list[tuple[int, Event]]:
        raise NotImplementedError


class BehaviorRegistry:
    """Maps behavior names to Behavior subclasses."""

    def __init__(self):
        self._classes: dict[str, type[Behavior]] = {}

    def register(self, name: str, cls: type[Behavior]) -> None:
        if name in self._classes:
            raise ValidationError(f"behavior {name!r} already registered")
        self._classes[name] = cls

    def get(self, name: str) -> type[Behavior]:
        try:
            return self._classes[name]
        except KeyError:
            raise ValidationError(f"unknown behavior {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._classes


# populated by the apps module at import time
default_behaviors = BehaviorRegistry()


# --- graph description ------------------------------------------------------

class RuleKind(Enum):
    ALL_INPUTS = "all_inputs"
    COUNTS = "counts"
    ANY_INPUT = "any_input"


@dataclass(frozen=True, slots=True)
class FiringRule:
    kind: RuleKind
    counts: tuple[int, ...] = ()

    @staticmethod
    def all_inputs() -> "FiringRule":
        return FiringRule(RuleKind.ALL_INPUTS)

    @staticmethod
    def of_counts(*counts: int) -> "FiringRule":
        return FiringRule(RuleKind.COUNTS, tuple(counts))

    @staticmethod
    def any_input() -> "FiringRule":
        return FiringRule(RuleKind.ANY_INPUT)


@dataclass(frozen=True)
class ActorSpec:
    name: str
    behavior: str                  # name in a BehaviorRegistry
    n_inputs: int = 1
    n_outputs: int = 1
    rule: FiringRule = FiringRule.all_inputs()
    params: dict = field(default_factory=dict)
    input_names: tuple[str, ...] = ()   # optional port names for configs


class EndpointKind(Enum):
    SOURCE = "source"
    ACTOR = "actor"
    SINK = "sink"


@dataclass(frozen=True, slots=True)
class Endpoint:
    kind: EndpointKind
    name: str
    port: int = 0


def source_ep(name: str) -> Endpoint:
    return Endpoint(EndpointKind.SOURCE, name)


def actor_out(name: str, port: int = 0) -> Endpoint:
    return Endpoint(EndpointKind.ACTOR, name, port)


def actor_in(name: str, port: int = 0) -> Endpoint:
    return Endpoint(EndpointKind.ACTOR, name, port)


def sink_ep(name: str) -> Endpoint:
    return Endpoint(EndpointKind.SINK, name)


@dataclass(frozen=True)
class ChannelSpec:
    producer: Endpoint
    consumer: Endpoint
    event_types: tuple[str, ...] = ()  # optional, validated if given

    @property
    def label(self) -> str:
        p = self.producer
        c = self.consumer
        pp = p.name if p.kind is not EndpointKind.ACTOR else f"{p.name}.{p.port}"
        cc = c.name if c.kind is not EndpointKind.ACTOR else f"{c.name}.{c.port}"
        return f"{pp}->{cc}"


@dataclass(frozen=True)
class ActorGraph:
    actors: tuple[ActorSpec, ...]
    channels: tuple[ChannelSpec, ...]
    sources: tuple[str, ...]
    sinks: tuple[str, ...]


# --- validation -------------------------------------------------------------

def validate_graph(graph: ActorGraph, *,
                   behaviors: BehaviorRegistry | None = None,
                   registry: EventTypeRegistry | None = None) -> list[str]:
    """Structural checks; returns a list of error strings (empty = ok)."""
    errors: list[str] = []
    actor_by_name = {}
    names_seen: set[str] = set()

    for a in graph.actors:
        if a.name in names_seen:
            errors.append(f"duplicate name {a.name!r}")
        names_seen.add(a.name)
        actor_by_name[a.name] = a
        if a.n_inputs < 1:
            errors.append(f"actor {a.name!r} has no inputs")
        if a.rule.kind is RuleKind.COUNTS:
            if len(a.rule.counts) != a.n_inputs:
                errors.append(f"actor {a.name!r}: counts arity != n_inputs")
            elif min(a.rule.counts, default=0) < 0 or sum(a.rule.counts) == 0:
                errors.append(f"actor {a.name!r}: counts must be >= 0 and consume something")
        if a.input_names and len(a.input_names) != a.n_inputs:
            errors.append(f"actor {a.name!r}: input_names arity != n_inputs")
        if behaviors is not None and a.behavior not in behaviors:
            errors.append(f"actor {a.name!r}: unknown behavior {a.behavior!r}")

    for s in list(graph.sources) + list(graph.sinks):
        if s in names_seen:
            errors.append(f"duplicate name {s!r}")
        names_seen.add(s)

    in_use: dict[tuple[str, int], int] = {}
    out_use: dict[tuple[str, int], int] = {}
    source_use: dict[str, int] = {}
    sink_use: dict[str, int] = {}

    for ch in graph.channels:
        p, c = ch.producer, ch.consumer
        if p.kind is EndpointKind.SOURCE:
            if p.name not in graph.sources:
                errors.append(f"{ch.label}: unknown source {p.name!r}")
            else:
                source_use[p.name] = source_use.get(p.name, 0) + 1
        elif p.kind is EndpointKind.ACTOR:
            a = actor_by_name.get(p.name)
            if a is None:
                errors.append(f"{ch.label}: unknown actor {p.name!r}")
            elif not (0 <= p.port < a.n_outputs):
                errors.append(f"{ch.label}: output port {p.port} out of range for {p.name!r}")
            else:
                out_use[(p.name, p.port)] = out_use.get((p.name, p.port), 0) + 1
        else:
            errors.append(f"{ch.label}: a sink cannot produce")

        if c.kind is EndpointKind.SINK:
            if c.name not in graph.sinks:
                errors.append(f"{ch.label}: unknown sink {c.name!r}")
            else:
                sink_use[c.name] = sink_use.get(c.name, 0) + 1
        elif c.kind is EndpointKind.ACTOR:
            a = actor_by_name.get(c.name)
            if a is None:
                errors.append(f"{ch.label}: unknown actor {c.name!r}")
            elif not (0 <= c.port < a.n_inputs):
                errors.append(f"{ch.label}: input port {c.port} out of range for {c.name!r}")
            else:
                in_use[(c.name, c.port)] = in_use.get((c.name, c.port), 0) + 1
        else:
            errors.append(f"{ch.label}: a source cannot consume")

        if registry is not None:
            for tname in ch.event_types:
                try:
                    registry.by_name(tname)
                except Exception:
                    errors.append(f"{ch.label}: event type {tname!r} not registered")

    for a in graph.actors:
        for port in range(a.n_inputs):
            n = in_use.get((a.name, port), 0)
            if n == 0:
                errors.append(f"actor {a.name!r}: input port {port} unconnected")
            elif n > 1:
                errors.append(f"actor {a.name!r}: input port {port} has {n} producers")
        for port in range(a.n_outputs):
            n = out_use.get((a.name, port), 0)
            if n == 0:
                errors.append(f"actor {a.name!r}: output port {port} unconnected")
            elif n > 1:
                errors.append(f"actor {a.name!r}: output port {port} feeds {n} channels")
    for s in graph.sources:
        n = source_use.get(s, 0)
        if n == 0:
            errors.append(f"source {s!r} unconnected")
        elif n > 1:
            errors.append(f"source {s!r} feeds {n} channels")
    for s in graph.sinks:
        if sink_use.get(s, 0) == 0:
            errors.append(f"sink {s!r} unconnected")

    return errors


# --- determinism classification ---------------------------------------------

@dataclass(frozen=True)
class DeterminismResult:
    deterministic: bool
    reasons: tuple[tuple[str, str], ...]  # (actor or sink name, reason)


def classify_determinism(graph: ActorGraph, *,
                         behaviors: BehaviorRegistry | None = None) -> DeterminismResult:
    """Static check of the three determinism conditions.

    Deterministic means: fixed-order blocking reads everywhere, only
    deterministic behaviors, and no merge points (any_input rules or
    sinks fed by more than one channel).
    """
    behaviors = behaviors if behaviors is not None else default_behaviors
    reasons: list[tuple[str, str]] = []
    for a in graph.actors:
        if a.rule.kind is RuleKind.ANY_INPUT:
            reasons.append((a.name, "any-input merge"))
        if a.behavior in behaviors and not behaviors.get(a.behavior).deterministic:
            reasons.append((a.name, "impure behavior"))
    fan_in: dict[str, int] = {}
    for ch in graph.channels:
        if ch.consumer.kind is EndpointKind.SINK:
            fan_in[ch.consumer.name] = fan_in.get(ch.consumer.name, 0) + 1
    for name, n in sorted(fan_in.items()):
        if n > 1:
            reasons.append((name, "multi-channel merge at sink"))
    return DeterminismResult(deterministic=not reasons, reasons=tuple(reasons))


# --- instantiation and execution ---------------------------------------------

@dataclass
class ActorFault:
    actor: str
    firing: int
    error: str


class ActorInstance:
    """A live actor: spec plus behavior object plus fault log."""

    def __init__(self, spec: ActorSpec, behavior: Behavior):
        self.spec = spec
        self.behavior = behavior
        self.firings = 0
        self.faults: list[ActorFault] = []

    def fire(self, inputs: list[Event]) -> list[tuple[int, Event]]:
        """One firing. A raising behavior consumes its inputs, logs the
        fault, emits nothing, and stays usable."""
        self.firings += 1
        try:
            outputs = self.behavior.fire(inputs)
        except Exception:
            self.faults.append(ActorFault(
                self.spec.name, self.firings,
                traceback.format_exc(limit=2).strip().splitlines()[-1]))
            return []
        for port, event in outputs:
            if not (0 <= port < self.spec.n_outputs):
                self.faults.append(ActorFault(
                    self.spec.name, self.firings, f"emitted on bad port {port}"))
                return []
            if not isinstance(event, Event):
                self.faults.append(ActorFault(
                    self.spec.name, self.firings, "emitted a non-event"))
                return []
        return list(outputs)


def instantiate(graph: ActorGraph,
                behaviors: BehaviorRegistry | None = None) -> dict[str, ActorInstance]:
    behaviors = behaviors if behaviors is not None else default_behaviors
    out = {}
    for spec in graph.actors:
        cls = behaviors.get(spec.behavior)
        out[spec.name] = ActorInstance(spec, cls(**spec.params))
    return out


class _Queue:
    """FIFO channel state: (arrival number, event) pairs."""

    __slots__ = ("items", "produced", "consumed", "history_in", "history_out")

    def __init__(self, record_history: bool):
        self.items: deque[tuple[int, Event]] = deque()
        self.produced = 0
        self.consumed = 0
        self.history_in: list[Event] | None = [] if record_history else None
        self.history_out: list[Event] | None = [] if record_history else None

    def push(self, seq: int, event: Event) -> None:
        self.items.append((seq, event))
        self.produced += 1
        if self.history_in is not None:
            self.history_in.append(event)

    def pop(self) -> tuple[int, Event]:
        seq, event = self.items.popleft()
        self.consumed += 1
        if self.history_out is not None:
            self.history_out.append(event)
        return seq, event


@dataclass
class NoProgressReport:
    actor: str
    pending: dict[int, int]  # input port -> queued events


@dataclass
class RunResult:
    sink_outputs: dict[str, list[Event]]
    firings: dict[str, int]
    faults: list[ActorFault]
    no_progress: list[NoProgressReport]
    channel_stats: dict[str, tuple[int, int]]  # label -> (produced, consumed)
    channel_history: dict[str, tuple[list[Event], list[Event]]] | None = None


_MAX_FIRINGS = 10_000_000


def run_schedule(graph: ActorGraph, source_events: dict[str, list[Event]], *,
                 scheduler: str = "fifo_round_robin", seed: int = 0,
                 behaviors: BehaviorRegistry | None = None,
                 deferred_sources: dict[str, list[Event]] | None = None,
                 record_history: bool = False) -> RunResult:
    """Run the graph until sources are exhausted and no actor can fire.

    Sources deliver their events up front, in graph order. Channels are
    unbounded; per-channel FIFO order holds under either scheduler.
    deferred_sources deliver only once the graph has gone quiescent
    (end-of-run control events such as a profile flush). Leftover
    events an actor can never consume (a partially satisfied firing
    rule at end of input) are reported as NoProgress diagnostics, not
    errors.
    """
    problems = validate_graph(graph, behaviors=behaviors)
    if problems:
        raise ValidationError("; ".join(problems))
    if scheduler not in ("fifo_round_robin", "seeded_random"):
        raise ValidationError(f"unknown scheduler {scheduler!r}")

    instances = instantiate(graph, behaviors)
    queues = [_Queue(record_history) for _ in graph.channels]
    in_channels: dict[str, list[int]] = {a.name: [-1] * a.n_inputs for a in graph.actors}
    out_channels: dict[str, list[int]] = {a.name: [-1] * a.n_outputs for a in graph.actors}
    sink_buffers: dict[str, list[tuple[int, Event]]] = {s: [] for s in graph.sinks}
    sink_of_channel: dict[int, str] = {}
    for idx, ch in enumerate(graph.channels):
        if ch.producer.kind is EndpointKind.ACTOR:
            out_channels[ch.producer.name][ch.producer.port] = idx
        if ch.consumer.kind is EndpointKind.ACTOR:
            in_channels[ch.consumer.name][ch.consumer.port] = idx
        elif ch.consumer.kind is EndpointKind.SINK:
            sink_of_channel[idx] = ch.consumer.name
    source_channel = {
        ch.producer.name: idx for idx, ch in enumerate(graph.channels)
        if ch.producer.kind is EndpointKind.SOURCE
    }

    seq = 0

    def deliver(channel_idx: int, event: Event) -> None:
        nonlocal seq
        sink = sink_of_channel.get(channel_idx)
        if sink is not None:
            queues[channel_idx].push(seq, event)
            queues[channel_idx].pop()
            sink_buffers[sink].append((seq, event))
        else:
            queues[channel_idx].push(seq, event)
        seq += 1

    for name in graph.sources:
        for event in source_events.get(name, ()):
            deliver(source_channel[name], event)

    def ready(name: str) -> bool:
        spec = instances[name].spec
        chans = in_channels[name]
        rule = spec.rule
        if rule.kind is RuleKind.ALL_INPUTS:
            return all(queues[c].items for c in chans)
        if rule.kind is RuleKind.COUNTS:
            return all(len(queues[c].items) >= n for c, n in zip(chans, rule.counts))
        return any(queues[c].items for c in chans)

    def consume(name: str) -> list[Event]:
        spec = instances[name].spec
        chans = in_channels[name]
        rule = spec.rule
        taken: list[Event] = []
        if rule.kind is RuleKind.ALL_INPUTS:
            for c in chans:
                taken.append(queues[c].pop()[1])
        elif rule.kind is RuleKind.COUNTS:
            for c, n in zip(chans, rule.counts):
                for _ in range(n):
                    taken.append(queues[c].pop()[1])
        else:
            # earliest arrival across inputs; arrival numbers are unique
            best = min(
                (c for c in chans if queues[c].items),
                key=lambda c: queues[c].items[0][0],
            )
            taken.append(queues[best].pop()[1])
        return taken

    def fire_one(name: str) -> None:
        inst = instances[name]
        outputs = inst.fire(consume(name))
        for port, event in outputs:
            deliver(out_channels[name][port], event)

    order = [a.name for a in graph.actors]
    total_firings = 0
    rng = SplitMix64(seed)

    def drain() -> None:
        nonlocal total_firings
        if scheduler == "fifo_round_robin":
            progress = True
            while progress:
                progress = False
                for name in order:
                    if ready(name):
                        fire_one(name)
                        total_firings += 1
                        if total_firings > _MAX_FIRINGS:
                            raise RuntimeError("firing limit exceeded; runaway graph?")
                        progress = True
        else:
            while True:
                fireable = [name for name in order if ready(name)]
                if not fireable:
                    break
                fire_one(rng.choice(fireable))
                total_firings += 1
                if total_firings > _MAX_FIRINGS:
                    raise RuntimeError("firing limit exceeded; runaway graph?")

    drain()
    if deferred_sources:
        for name in graph.sources:
            for event in deferred_sources.get(name, ()):
                deliver(source_channel[name], event)
        drain()

    no_progress = []
    for name in order:
        pending = {
            port: len(queues[c].items)
            for port, c in enumerate(in_channels[name])
            if queues[c].items
        }
        if pending:
            no_progress.append(NoProgressReport(name, pending))

    faults = [f for inst in instances.values() for f in inst.faults]
    result = RunResult(
        sink_outputs={
            s: [e for _, e in sorted(buf, key=lambda t: t[0])]
            for s, buf in sink_buffers.items()
        },
        firings={name: instances[name].firings for name in order},
        faults=faults,
        no_progress=no_progress,
        channel_stats={
            ch.label: (queues[i].produced, queues[i].consumed)
            for i, ch in enumerate(graph.channels)
        },
    )
    if record_history:
        result.channel_history = {
            ch.label: (queues[i].history_in or [], queues[i].history_out or [])
            for i, ch in enumerate(graph.channels)
        }
    return result
