"""Shared builders for the test suite: canned graphs and pipelines."""

from __future__ import annotations

from socdiag import events as ev
from socdiag.dataflow import (
    ActorGraph,
    ActorSpec,
    ChannelSpec,
    FiringRule,
    actor_in,
    actor_out,
    sink_ep,
    source_ep,
)
from socdiag.eventgen import CaptureSpec, EventGenerator, TriggerCondition, TriggerKind, run_generator
from socdiag.events import Event, builtin_registry, encode_event
from socdiag.workloads import WorkloadKind, WorkloadSpec, generate_workload


def race_graph() -> ActorGraph:
    """eg0 -> transaction checker -> races sink (single channels)."""
    return ActorGraph(
        actors=(ActorSpec("check", "ta_check_balance_trans", 1, 1),),
        channels=(
            ChannelSpec(source_ep("eg0"), actor_in("check", 0)),
            ChannelSpec(actor_out("check", 0), sink_ep("races")),
        ),
        sources=("eg0",),
        sinks=("races",),
    )


def lock_graph(n_cpus: int) -> ActorGraph:
    """Per-CPU call/return sources and diff stages feeding one stat."""
    actors = [
        ActorSpec(f"diff{c}", "ta_diff", 2, 1, FiringRule.all_inputs(),
                  input_names=("call", "ret"))
        for c in range(n_cpus)
    ]
    actors.append(ActorSpec("stat", "ta_stat", n_cpus + 1, 1, FiringRule.any_input()))
    channels = []
    for c in range(n_cpus):
        channels.append(ChannelSpec(source_ep(f"egc{c}"), actor_in(f"diff{c}", 0)))
        channels.append(ChannelSpec(source_ep(f"egr{c}"), actor_in(f"diff{c}", 1)))
        channels.append(ChannelSpec(actor_out(f"diff{c}", 0), actor_in("stat", c)))
    channels.append(ChannelSpec(source_ep("flush"), actor_in("stat", n_cpus)))
    channels.append(ChannelSpec(actor_out("stat", 0), sink_ep("profile")))
    sources = tuple(
        name for c in range(n_cpus) for name in (f"egc{c}", f"egr{c}")
    ) + ("flush",)
    return ActorGraph(tuple(actors), tuple(channels), sources, ("profile",))


def race_generator(registry, symbols) -> EventGenerator:
    gen = EventGenerator(registry, cpu_id=0)
    gen.configure_trigger(TriggerCondition(
        0, TriggerKind.PC_MATCH, symbols["get_balance"],
        ev.EV_GET_BALANCE_CALL, CaptureSpec(arg_count=1)))
    gen.configure_trigger(TriggerCondition(
        1, TriggerKind.FUNCTION_RETURN, symbols["set_balance"],
        ev.EV_SET_BALANCE_RETURN, CaptureSpec(arg_count=1)))
    return gen


def lock_generators(registry, symbols, cpu: int):
    call_gen = EventGenerator(registry, cpu_id=cpu)
    call_gen.configure_trigger(TriggerCondition(
        0, TriggerKind.PC_MATCH, symbols["mutex_lock"],
        ev.EV_LOCK_CALL, CaptureSpec(arg_count=1)))
    ret_gen = EventGenerator(registry, cpu_id=cpu)
    ret_gen.configure_trigger(TriggerCondition(
        0, TriggerKind.FUNCTION_RETURN, symbols["mutex_lock"],
        ev.EV_LOCK_RETURN, CaptureSpec(arg_count=0)))
    return call_gen, ret_gen


def bank_run(seed: int, n_transactions: int, *, max_wait: int = 400,
             atm_think: int = 150, cpus: int = 3):
    """Workload plus the bank CPU's primary-event stream."""
    registry = builtin_registry()
    spec = WorkloadSpec(kind=WorkloadKind.BANK_ATM, seed=seed, cpus=cpus,
                        duration=50_000_000, n_transactions=n_transactions,
                        max_wait=max_wait, atm_think=atm_think)
    output = generate_workload(spec)
    gen = race_generator(registry, output.symbols)
    events = [e for _, e in run_generator(gen, output.streams[0])]
    return registry, output, events


def lock_run(seed: int, *, cpus: int = 2, n_mutexes: int = 3,
             n_acquisitions: int = 20, mean_hold: int = 100,
             mean_arrival: int = 300):
    """Workload plus per-CPU (cycle, event) source streams."""
    registry = builtin_registry()
    spec = WorkloadSpec(kind=WorkloadKind.LOCK_BENCH, seed=seed, cpus=cpus,
                        duration=50_000_000, n_threads=cpus,
                        n_mutexes=n_mutexes, n_acquisitions=n_acquisitions,
                        mean_hold=mean_hold, mean_arrival=mean_arrival)
    output = generate_workload(spec)
    sources = {}
    for cpu in range(cpus):
        call_gen, ret_gen = lock_generators(registry, output.symbols, cpu)
        sources[f"egc{cpu}"] = run_generator(call_gen, output.streams[cpu])
        sources[f"egr{cpu}"] = run_generator(ret_gen, output.streams[cpu])
    return registry, output, sources


def flush_event() -> Event:
    return Event(ev.EV_SEND_LOCK_PROFILE, {})


def race_oracle(transactions) -> int:
    """Brute-force conflicting-arrival count from transaction intervals."""
    timeline = sorted(
        [(t.get_cycle, 0, t.owner) for t in transactions]
        + [(t.set_cycle, 1, t.owner) for t in transactions]
    )
    open_owners: set[int] = set()
    races = 0
    for _, kind, owner in timeline:
        if kind == 0:
            if open_owners - {owner}:
                races += 1
            open_owners.add(owner)
        else:
            open_owners.discard(owner)
    return races


def overlap_pairs_oracle(transactions) -> set[tuple[int, int]]:
    """Independent O(n^2) pairwise interval-overlap scan."""
    pairs = set()
    for i in range(len(transactions)):
        for j in range(i + 1, len(transactions)):
            a, b = transactions[i], transactions[j]
            if a.get_cycle < b.set_cycle and b.get_cycle < a.set_cycle:
                pairs.add((i, j))
    return pairs


def sink_bytes(registry, events) -> bytes:
    """Canonical byte serialization of a sink's output."""
    return b"".join(encode_event(registry, e) for e in events)
