"""Command-line front end.

`socdiag run CONFIG` loads a TOML run configuration (workload,
per-CPU trigger setup, actor graph, node mapping, policies), validates
all of it before anything executes, runs the simulation, and emits the
sinks' output plus a bandwidth report. `socdiag replay LOG CONFIG`
runs a diagnosis application over a recorded JSON Lines event log,
bypassing workload generation and the event generators.

Exit codes are stable for scripting: 0 success, 1 runtime fault,
2 configuration or validation failure. The SOCDIAG_LOG environment
variable sets the diagnostic logging level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import events as ev
from . import workloads as wl
from .apps import sink_event_log, sink_profile_table
from .dataflow import (
    ActorGraph,
    ActorSpec,
    ChannelSpec,
    Endpoint,
    EndpointKind,
    FiringRule,
    default_behaviors,
    run_schedule,
    validate_graph,
)
from .errors import ConfigError, SocdiagError, ValidationError
from .eventgen import CaptureSpec, EventGenerator, TriggerCondition, TriggerKind, run_generator
from .events import Event, builtin_registry
from .metering import CutCounter, compute_rates
from .platform import (
    NodeKind,
    NodeLocation,
    OverloadPolicy,
    ProcessingNode,
    bandwidth_report,
    estimate_full_trace,
    execute,
    map_actors,
)

log = logging.getLogger("socdiag")

PRESET_DIR = Path(__file__).parent / "presets"


# --- configuration objects ---------------------------------------------------

@dataclass(frozen=True)
class TriggerConfig:
    trigger_id: int
    kind: str            # pc_match | function_return
    pc: int | str        # address or workload symbol
    emit: str            # event type name
    args: int = 0
    registers: tuple[int, ...] = ()
    timestamp: bool = True


@dataclass(frozen=True)
class GeneratorConfig:
    name: str
    cpu: int
    triggers: tuple[TriggerConfig, ...]


@dataclass(frozen=True)
class SpecialSourceConfig:
    name: str
    kind: str            # profile_flush
    period: int = 0      # 0 = end-of-run only
    location: str = "host"


@dataclass(frozen=True)
class ActorConfig:
    name: str
    behavior: str
    inputs: int = 1
    input_names: tuple[str, ...] = ()
    outputs: int = 1
    rule: str | tuple[int, ...] = "all"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ChannelConfig:
    src: str
    dst: str
    types: tuple[str, ...] = ()


@dataclass(frozen=True)
class SinkConfig:
    name: str
    kind: str = "event_log"  # event_log | profile_table | jsonl
    top: int = 10


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    location: str = "on_chip"
    kind: str = "diagnosis_processor"
    queue: int | None = None
    cost: int | None = None
    supports: tuple[str, ...] = ()


@dataclass(frozen=True)
class ReplayBinding:
    source: str
    types: tuple[str, ...] = ()  # empty = all events


@dataclass(frozen=True)
class RunConfig:
    workload: wl.WorkloadSpec
    workload_preset: str | None
    generators: tuple[GeneratorConfig, ...]
    special_sources: tuple[SpecialSourceConfig, ...]
    actors: tuple[ActorConfig, ...]
    channels: tuple[ChannelConfig, ...]
    sinks: tuple[SinkConfig, ...]
    nodes: tuple[NodeConfig, ...]
    mapping: dict[str, str]
    policy: str = "stall"
    clock_hz: int = 50_000_000
    link_bandwidth_bps: int = 0
    cuts: dict[str, tuple[str, ...]] = field(default_factory=dict)
    ratios: dict[str, tuple[str, str]] = field(default_factory=dict)
    estimate: bool = False
    replay_bindings: tuple[ReplayBinding, ...] = ()

    def to_dict(self) -> dict:
        """Config as the TOML document shape; parse_config() on the
        result yields an equal RunConfig."""
        workload: dict = {"kind": self.workload.kind.value}
        if self.workload_preset is not None:
            workload["preset"] = self.workload_preset
        for key in ("seed", "cpus", "duration", "n_transactions", "max_wait",
                    "atm_think", "n_threads", "n_mutexes", "n_acquisitions",
                    "mean_hold", "mean_arrival", "path"):
            value = getattr(self.workload, key)
            if value is not None:
                workload[key] = value
        doc: dict = {"workload": workload}
        if self.generators:
            doc["generators"] = [
                {
                    "name": g.name,
                    "cpu": g.cpu,
                    "triggers": [
                        {
                            "id": t.trigger_id,
                            "kind": t.kind,
                            "pc": t.pc,
                            "emit": t.emit,
                            "capture": {
                                "args": t.args,
                                "registers": list(t.registers),
                                "timestamp": t.timestamp,
                            },
                        }
                        for t in g.triggers
                    ],
                }
                for g in self.generators
            ]
        if self.special_sources:
            doc["sources"] = [
                {"name": s.name, "kind": s.kind, "period": s.period,
                 "location": s.location}
                for s in self.special_sources
            ]
        if self.actors:
            doc["actors"] = [
                {
                    "name": a.name,
                    "behavior": a.behavior,
                    "inputs": list(a.input_names) if a.input_names else a.inputs,
                    "outputs": a.outputs,
                    "rule": list(a.rule) if isinstance(a.rule, tuple) else a.rule,
                    "params": dict(a.params),
                }
                for a in self.actors
            ]
        if self.channels:
            doc["channels"] = [
                {"from": c.src, "to": c.dst, "types": list(c.types)}
                for c in self.channels
            ]
        if self.sinks:
            doc["sinks"] = [
                {"name": s.name, "kind": s.kind, "top": s.top} for s in self.sinks
            ]
        if self.nodes:
            doc["nodes"] = [
                {k: v for k, v in (
                    ("id", n.node_id), ("location", n.location), ("kind", n.kind),
                    ("queue", n.queue), ("cost", n.cost),
                    ("supports", list(n.supports)),
                ) if v is not None}
                for n in self.nodes
            ]
        if self.mapping:
            doc["mapping"] = dict(self.mapping)
        doc["policy"] = {"kind": self.policy}
        doc["clock"] = {"hz": self.clock_hz}
        if self.link_bandwidth_bps:
            doc["link"] = {"bandwidth_bps": self.link_bandwidth_bps}
        metering: dict = {}
        if self.cuts:
            metering["cuts"] = [
                {"name": name, "channels": list(chs)}
                for name, chs in self.cuts.items()
            ]
        if self.ratios:
            metering["ratios"] = [
                {"name": name, "numerator": num, "denominator": den}
                for name, (num, den) in self.ratios.items()
            ]
        if self.estimate:
            metering["estimate"] = True
        if metering:
            doc["metering"] = metering
        if self.replay_bindings:
            doc["replay"] = {"bindings": [
                {"source": b.source, "types": list(b.types)}
                for b in self.replay_bindings
            ]}
        return doc


def _need(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigError(f"{context}: missing {key!r}")
    return table[key]


def _as_int(value, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{context}: expected an integer, got {value!r}")
    return value


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed TOML document into a RunConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a table")

    wtab = dict(doc.get("workload", {}))
    preset_name = wtab.pop("preset", None)
    if preset_name is not None:
        spec = wl.preset(preset_name)
        wtab.pop("kind", None)
    else:
        kind_name = _need(wtab, "kind", "[workload]")
        try:
            kind = wl.WorkloadKind(kind_name)
        except ValueError:
            raise ConfigError(f"[workload]: unknown kind {kind_name!r}") from None
        spec = wl.WorkloadSpec(kind=kind)
        wtab.pop("kind")
    try:
        spec = replace(spec, **wtab)
    except TypeError as exc:
        raise ConfigError(f"[workload]: {exc}") from None

    generators = []
    for g in doc.get("generators", []):
        name = _need(g, "name", "[[generators]]")
        triggers = []
        for t in g.get("triggers", []):
            cap = t.get("capture", {})
            kind = _need(t, "kind", f"generator {name!r} trigger")
            if kind not in ("pc_match", "function_return"):
                raise ConfigError(f"generator {name!r}: unknown trigger kind {kind!r}")
            triggers.append(TriggerConfig(
                trigger_id=_as_int(_need(t, "id", f"generator {name!r} trigger"), "trigger id"),
                kind=kind,
                pc=_need(t, "pc", f"generator {name!r} trigger"),
                emit=_need(t, "emit", f"generator {name!r} trigger"),
                args=_as_int(cap.get("args", 0), "capture.args"),
                registers=tuple(cap.get("registers", ())),
                timestamp=bool(cap.get("timestamp", True)),
            ))
        generators.append(GeneratorConfig(
            name=name,
            cpu=_as_int(_need(g, "cpu", f"generator {name!r}"), "generator cpu"),
            triggers=tuple(triggers),
        ))

    special = []
    for s in doc.get("sources", []):
        name = _need(s, "name", "[[sources]]")
        kind = s.get("kind", "profile_flush")
        if kind != "profile_flush":
            raise ConfigError(f"source {name!r}: unknown kind {kind!r}")
        special.append(SpecialSourceConfig(
            name=name, kind=kind,
            period=_as_int(s.get("period", 0), "source period"),
            location=s.get("location", "host"),
        ))

    actors = []
    for a in doc.get("actors", []):
        name = _need(a, "name", "[[actors]]")
        inputs = a.get("inputs", 1)
        if isinstance(inputs, list):
            input_names = tuple(inputs)
            n_inputs = len(input_names)
        else:
            input_names = ()
            n_inputs = _as_int(inputs, f"actor {name!r} inputs")
        rule = a.get("rule", "all")
        if isinstance(rule, list):
            rule = tuple(_as_int(x, "rule count") for x in rule)
        elif rule not in ("all", "any"):
            raise ConfigError(f"actor {name!r}: rule must be 'all', 'any', or counts")
        actors.append(ActorConfig(
            name=name,
            behavior=_need(a, "behavior", f"actor {name!r}"),
            inputs=n_inputs,
            input_names=input_names,
            outputs=_as_int(a.get("outputs", 1), f"actor {name!r} outputs"),
            rule=rule,
            params=dict(a.get("params", {})),
        ))

    channels = []
    for c in doc.get("channels", []):
        channels.append(ChannelConfig(
            src=_need(c, "from", "[[channels]]"),
            dst=_need(c, "to", "[[channels]]"),
            types=tuple(c.get("types", ())),
        ))

    sinks = []
    for s in doc.get("sinks", []):
        kind = s.get("kind", "event_log")
        if kind not in ("event_log", "profile_table", "jsonl"):
            raise ConfigError(f"sink: unknown kind {kind!r}")
        sinks.append(SinkConfig(
            name=_need(s, "name", "[[sinks]]"),
            kind=kind,
            top=_as_int(s.get("top", 10), "sink top"),
        ))

    nodes = []
    for n in doc.get("nodes", []):
        loc = n.get("location", "on_chip")
        if loc not in ("on_chip", "host"):
            raise ConfigError(f"node: unknown location {loc!r}")
        kind = n.get("kind", "diagnosis_processor" if loc == "on_chip" else "soft")
        if kind not in ("diagnosis_processor", "fixed_function", "soft"):
            raise ConfigError(f"node: unknown kind {kind!r}")
        nodes.append(NodeConfig(
            node_id=_need(n, "id", "[[nodes]]"),
            location=loc,
            kind=kind,
            queue=n.get("queue"),
            cost=n.get("cost"),
            supports=tuple(n.get("supports", ())),
        ))

    mapping = {k: str(v) for k, v in doc.get("mapping", {}).items()}

    policy = doc.get("policy", {}).get("kind", "stall")
    if policy not in ("stall", "discard"):
        raise ConfigError(f"[policy]: unknown kind {policy!r}")

    clock_hz = _as_int(doc.get("clock", {}).get("hz", 50_000_000), "[clock] hz")
    if clock_hz <= 0:
        raise ConfigError("[clock]: hz must be positive")
    link_bps = _as_int(doc.get("link", {}).get("bandwidth_bps", 0), "[link] bandwidth_bps")

    metering = doc.get("metering", {})
    cuts = {}
    for c in metering.get("cuts", []):
        cuts[_need(c, "name", "[[metering.cuts]]")] = tuple(
            _need(c, "channels", "[[metering.cuts]]"))
    ratios = {}
    for r in metering.get("ratios", []):
        ratios[_need(r, "name", "[[metering.ratios]]")] = (
            _need(r, "numerator", "[[metering.ratios]]"),
            _need(r, "denominator", "[[metering.ratios]]"),
        )
    estimate = bool(metering.get("estimate", False))

    bindings = []
    for b in doc.get("replay", {}).get("bindings", []):
        bindings.append(ReplayBinding(
            source=_need(b, "source", "[[replay.bindings]]"),
            types=tuple(b.get("types", ())),
        ))

    return RunConfig(
        workload=spec,
        workload_preset=preset_name,
        generators=tuple(generators),
        special_sources=tuple(special),
        actors=tuple(actors),
        channels=tuple(channels),
        sinks=tuple(sinks),
        nodes=tuple(nodes),
        mapping=mapping,
        policy=policy,
        clock_hz=clock_hz,
        link_bandwidth_bps=link_bps,
        cuts=cuts,
        ratios=ratios,
        estimate=estimate,
        replay_bindings=tuple(bindings),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc)


# --- graph construction --------------------------------------------------------

def _build_graph(cfg: RunConfig) -> ActorGraph:
    source_names = [g.name for g in cfg.generators] + [s.name for s in cfg.special_sources]
    sink_names = [s.name for s in cfg.sinks]
    actor_cfg = {a.name: a for a in cfg.actors}

    specs = []
    for a in cfg.actors:
        if a.rule == "all":
            rule = FiringRule.all_inputs()
        elif a.rule == "any":
            rule = FiringRule.any_input()
        else:
            rule = FiringRule.of_counts(*a.rule)
        specs.append(ActorSpec(
            name=a.name, behavior=a.behavior, n_inputs=a.inputs,
            n_outputs=a.outputs, rule=rule, params=a.params,
            input_names=a.input_names,
        ))

    def parse_endpoint(text: str, producing: bool) -> Endpoint:
        name, _, port_text = text.partition(".")
        if name in source_names:
            if not producing:
                raise ConfigError(f"channel endpoint {text!r}: a source cannot consume")
            return Endpoint(EndpointKind.SOURCE, name)
        if name in sink_names:
            if producing:
                raise ConfigError(f"channel endpoint {text!r}: a sink cannot produce")
            return Endpoint(EndpointKind.SINK, name)
        if name not in actor_cfg:
            raise ConfigError(f"channel endpoint {text!r}: unknown name {name!r}")
        a = actor_cfg[name]
        if not port_text:
            return Endpoint(EndpointKind.ACTOR, name, 0)
        prefix = "out" if producing else "in"
        if not producing and port_text in a.input_names:
            return Endpoint(EndpointKind.ACTOR, name, a.input_names.index(port_text))
        if port_text == prefix:
            return Endpoint(EndpointKind.ACTOR, name, 0)
        if port_text.startswith(prefix) and port_text[len(prefix):].isdigit():
            return Endpoint(EndpointKind.ACTOR, name, int(port_text[len(prefix):]))
        if port_text.isdigit():
            return Endpoint(EndpointKind.ACTOR, name, int(port_text))
        raise ConfigError(f"channel endpoint {text!r}: cannot resolve port {port_text!r}")

    channels = []
    for c in cfg.channels:
        channels.append(ChannelSpec(
            producer=parse_endpoint(c.src, producing=True),
            consumer=parse_endpoint(c.dst, producing=False),
            event_types=c.types,
        ))

    return ActorGraph(
        actors=tuple(specs),
        channels=tuple(channels),
        sources=tuple(source_names),
        sinks=tuple(sink_names),
    )


def _build_generators(cfg: RunConfig, registry, symbols) -> dict[str, EventGenerator]:
    gens = {}
    for g in cfg.generators:
        gen = EventGenerator(registry, cpu_id=g.cpu)
        for t in g.triggers:
            if isinstance(t.pc, str):
                if t.pc not in symbols:
                    raise ConfigError(
                        f"generator {g.name!r}: unknown symbol {t.pc!r} "
                        f"(workload defines: {', '.join(sorted(symbols))})"
                    )
                pc = symbols[t.pc]
            else:
                pc = t.pc
            gen.configure_trigger(TriggerCondition(
                trigger_id=t.trigger_id,
                kind=TriggerKind(t.kind),
                pc=pc,
                emit_type=registry.by_name(t.emit).type_id,
                capture=CaptureSpec(
                    arg_count=t.args,
                    registers=t.registers,
                    include_timestamp=t.timestamp,
                ),
            ))
        gens[g.name] = gen
    return gens


def _build_platform(cfg: RunConfig, graph: ActorGraph, registry):
    if cfg.nodes:
        nodes = [
            ProcessingNode(
                node_id=n.node_id,
                location=NodeLocation(n.location),
                kind=NodeKind(n.kind),
                queue_capacity=n.queue,
                cost=n.cost,
                supports=n.supports,
            )
            for n in cfg.nodes
        ]
        mapping = dict(cfg.mapping)
    else:
        # degenerate deployment: everything on one host node, so the
        # metered cut sits right at the event generators
        nodes = [ProcessingNode("host", NodeLocation.HOST, NodeKind.SOFT)]
        mapping = {a.name: "host" for a in graph.actors}
    source_locations = {
        s.name: NodeLocation(s.location) for s in cfg.special_sources
    }
    return map_actors(graph, nodes, mapping, registry,
                      behaviors=default_behaviors,
                      source_locations=source_locations)


# --- output rendering ----------------------------------------------------------

def _render_sinks(cfg: RunConfig, registry, sink_outputs, clock_hz,
                  out_dir: Path | None) -> dict[str, str]:
    rendered = {}
    for sink in cfg.sinks:
        events = sink_outputs.get(sink.name, [])
        if sink.kind == "profile_table":
            profiles = [e for e in events if e.type_id == ev.EV_LOCK_PROFILE]
            current = profiles[-1] if profiles else Event(ev.EV_LOCK_PROFILE, {"rows": ()})
            text = sink_profile_table(current, top=sink.top,
                                      ns_per_cycle=1e9 / clock_hz)
        elif sink.kind == "jsonl":
            lines = [json.dumps(wl.event_to_json(registry, e), separators=(",", ":"))
                     for e in events]
            text = "\n".join(lines)
        else:
            text = "\n".join(sink_event_log(registry, events))
        rendered[sink.name] = text
        if out_dir is not None:
            suffix = ".jsonl" if sink.kind == "jsonl" else ".txt"
            (out_dir / f"{sink.name}{suffix}").write_text(
                text + ("\n" if text else ""), encoding="utf-8")
    return rendered


def _overload_summary(node_stats) -> str:
    lines = [f"{'node':<10} {'offered':>8} {'processed':>10} {'discarded':>10} "
             f"{'stalled':>8} {'stall cyc':>10} {'residual':>9}"]
    for nid, st in sorted(node_stats.items()):
        lines.append(
            f"{nid:<10} {st.offered:>8} {st.processed:>10} {st.discarded:>10} "
            f"{st.stalled_events:>8} {st.stall_cycles:>10} {st.residual:>9}"
        )
    return "\n".join(lines)


# --- commands -------------------------------------------------------------------

def _prepare(cfg: RunConfig):
    registry = builtin_registry()
    graph = _build_graph(cfg)
    problems = validate_graph(graph, behaviors=default_behaviors, registry=registry)
    if problems:
        raise ValidationError("; ".join(problems))
    return registry, graph


def cmd_run(cfg: RunConfig, *, report_format: str = "text",
            out_dir: str | None = None, stdout=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    registry, graph = _prepare(cfg)

    if cfg.workload.kind is wl.WorkloadKind.EVENT_LOG_REPLAY:
        events = wl.load_replay_events(cfg.workload, registry)
        return _run_replay(cfg, registry, graph, events,
                           report_format=report_format, out_dir=out_dir, stdout=stdout)

    platform = _build_platform(cfg, graph, registry)
    output = wl.generate_workload(cfg.workload)
    generators = _build_generators(cfg, registry, output.symbols)

    sources: dict[str, list[tuple[int, Event]]] = {}
    for g in cfg.generators:
        if g.cpu not in output.streams:
            raise ValidationError(f"generator {g.name!r}: workload has no CPU {g.cpu}")
        sources[g.name] = run_generator(generators[g.name], output.streams[g.cpu])

    deferred: dict[str, list[Event]] = {}
    span = output.ground_truth.span_cycles
    for s in cfg.special_sources:
        timed = []
        if s.period > 0:
            for cycle in range(s.period, span + 1, s.period):
                timed.append((cycle, Event(ev.EV_SEND_LOCK_PROFILE, {})))
        sources[s.name] = timed
        deferred[s.name] = [Event(ev.EV_SEND_LOCK_PROFILE, {})]

    policy = OverloadPolicy(cfg.policy)
    result = execute(
        platform, sources, policy,
        link_bandwidth_bps=cfg.link_bandwidth_bps or None,
        clock_hz=cfg.clock_hz,
        deferred_sources=deferred,
    )

    out_path = Path(out_dir) if out_dir else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    rendered = _render_sinks(cfg, registry, result.sink_outputs, cfg.clock_hz, out_path)
    for name, text in rendered.items():
        print(f"== sink {name} ==", file=stdout)
        if text:
            print(text, file=stdout)

    estimate_bits = None
    if cfg.estimate:
        gt = output.ground_truth
        estimate_bits = estimate_full_trace(gt.n_instructions, gt.n_data_accesses)

    duration = max(result.last_cycle, span, 1)
    report = bandwidth_report(
        platform, result,
        duration_cycles=duration,
        clock_hz=cfg.clock_hz,
        cuts={name: list(chs) for name, chs in cfg.cuts.items()},
        ratios=cfg.ratios,
        full_trace_estimate_bits=estimate_bits,
    )

    print("== bandwidth report ==", file=stdout)
    if report_format == "json":
        report_text = report.to_json()
    else:
        report_text = report.format_table()
    print(report_text, file=stdout)
    if out_path is not None:
        name = "report.json" if report_format == "json" else "report.txt"
        (out_path / name).write_text(report_text + "\n", encoding="utf-8")

    overloaded = any(
        st.discarded or st.stalled_events for st in result.node_stats.values())
    if overloaded:
        print("== overload ==", file=stdout)
        print(_overload_summary(result.node_stats), file=stdout)
    for fault in result.faults:
        log.warning("actor %s firing %d faulted: %s", fault.actor, fault.firing, fault.error)
    for np_report in result.no_progress:
        log.warning("no progress: actor %s still holds events %s",
                    np_report.actor, np_report.pending)
    return 0


def _run_replay(cfg: RunConfig, registry, graph, events,
                *, report_format: str, out_dir: str | None, stdout) -> int:
    binding_types = {b.source: b.types for b in cfg.replay_bindings}
    gen_names = [g.name for g in cfg.generators]

    source_events: dict[str, list[Event]] = {}
    for name in gen_names:
        types = binding_types.get(name, ())
        if types:
            ids = {registry.by_name(t).type_id for t in types}
            source_events[name] = [e for e in events if e.type_id in ids]
        else:
            source_events[name] = list(events)

    deferred: dict[str, list[Event]] = {}
    for s in cfg.special_sources:
        source_events[s.name] = []
        deferred[s.name] = [Event(ev.EV_SEND_LOCK_PROFILE, {})]

    result = run_schedule(graph, source_events, deferred_sources=deferred)

    out_path = Path(out_dir) if out_dir else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    rendered = _render_sinks(cfg, registry, result.sink_outputs, cfg.clock_hz, out_path)
    for name, text in rendered.items():
        print(f"== sink {name} ==", file=stdout)
        if text:
            print(text, file=stdout)

    # replays have no simulated clock; report counts only
    counters = [CutCounter(
        "all_sinks",
        sum(len(v) for v in result.sink_outputs.values()),
        sum(ev.wire_size(registry, e)
            for v in result.sink_outputs.values() for e in v),
    )]
    report = compute_rates(counters, None, cfg.clock_hz)
    print("== bandwidth report ==", file=stdout)
    report_text = report.to_json() if report_format == "json" else report.format_table()
    print(report_text, file=stdout)
    if out_path is not None:
        name = "report.json" if report_format == "json" else "report.txt"
        (out_path / name).write_text(report_text + "\n", encoding="utf-8")
    return 0


def cmd_replay(log_path: str, cfg: RunConfig, *, report_format: str = "text",
               out_dir: str | None = None, stdout=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    registry, graph = _prepare(cfg)
    events = wl.read_event_log(registry, log_path)
    return _run_replay(cfg, registry, graph, events,
                       report_format=report_format, out_dir=out_dir, stdout=stdout)


# --- entry point -----------------------------------------------------------------

def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    updates = {}
    if args.seed is not None:
        updates["workload"] = replace(cfg.workload, seed=args.seed)
    if args.policy is not None:
        updates["policy"] = args.policy
    if args.clock_hz is not None:
        updates["clock_hz"] = args.clock_hz
    return replace(cfg, **updates) if updates else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socdiag",
        description="simulate on-chip diagnosis applications over synthetic workloads",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configuration end to end")
    run_p.add_argument("config", help="TOML run configuration")
    run_p.add_argument("--seed", type=int, default=None, help="override workload seed")
    run_p.add_argument("--report", choices=("text", "json"), default="text")
    run_p.add_argument("--policy", choices=("stall", "discard"), default=None)
    run_p.add_argument("--clock-hz", type=int, default=None)
    run_p.add_argument("--out-dir", default=None, help="write sink and report files here")

    replay_p = sub.add_parser("replay", help="run a graph over a recorded event log")
    replay_p.add_argument("event_log", help="JSON Lines event log")
    replay_p.add_argument("config", help="TOML configuration with the graph to run")
    replay_p.add_argument("--report", choices=("text", "json"), default="text")
    replay_p.add_argument("--out-dir", default=None)

    sub.add_parser("presets", help="list shipped example configurations")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SOCDIAG_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "presets":
        print("workload presets:")
        for name in sorted(wl.PRESETS):
            print(f"  {name}")
        print("example configurations:")
        for path in sorted(PRESET_DIR.glob("*.toml")):
            print(f"  {path}")
        return 0

    try:
        cfg = load_config(args.config)
        if args.command == "run":
            cfg = _apply_flags(cfg, args)
            return cmd_run(cfg, report_format=args.report, out_dir=args.out_dir)
        return cmd_replay(args.event_log, cfg,
                          report_format=args.report, out_dir=args.out_dir)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SocdiagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
