"""Built-in diagnosis applications and event sinks.

Transformation actors:

* ta_check_balance_trans: watches the bank task's get/set events and
  reports a race whenever a transaction starts while another owner's
  transaction is still open. One race event per conflicting arrival,
  stamped with the arriving event's timestamp.
* ta_diff: pairs each lock-call event with the following lock-return
  event from the same stream (blocking reads: call, then return) and
  emits the acquisition time with a 16-bit hash of the mutex.
* ta_stat: folds acquisition times into per-lock (count, total) cells
  and, on a flush event, emits the cumulative profile. Totals are never
  reset; successive profiles include everything seen so far.
* passthrough, count: identity and every-Nth-event forwarding.

Sinks render events for humans: a one-line-per-event log and the
ranked lock-profile table.
"""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal

from . import events as ev
from .dataflow import Behavior, default_behaviors
from .events import Event, EventTypeRegistry

U16_MAX = 0xFFFF
U32_MAX = 0xFFFFFFFF

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3


def hash16(value: int) -> int:
    """16-bit lock hash: FNV-1a over the 8 little-endian value bytes,
    xor-folded 64 -> 32 -> 16 bits. Collisions are possible; profiles
    report hash values unless the wide-id debug mode is used."""
    h = _FNV64_OFFSET
    for b in int(value & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"):
        h ^= b
        h = (h * _FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 32
    h ^= h >> 16
    return h & U16_MAX


class BalanceTransactionChecker(Behavior):
    """State machine over EV_GET_BALANCE_CALL / EV_SET_BALANCE_RETURN.

    A get opens a transaction for its source; the matching set-return
    closes it. A get arriving while any other source is open is a race.
    """

    def __init__(self):
        self.open_owners: set[int] = set()
        self.races = 0
        self.unknown_sources = 0

    def fire(self, inputs):
        event = inputs[0]
        out = []
        src = event.payload.get("src")
        if event.type_id == ev.EV_GET_BALANCE_CALL:
            if self.open_owners - {src}:
                self.races += 1
                out.append((0, Event(ev.EV_RACE_DETECTED,
                                     {"timestamp": event.payload["timestamp"]})))
            self.open_owners.add(src)
        elif event.type_id == ev.EV_SET_BALANCE_RETURN:
            if src in self.open_owners:
                self.open_owners.discard(src)
            else:
                self.unknown_sources += 1
        return out


class LockAcquireTimeDiff(Behavior):
    """inputs[0] is the lock-call event, inputs[1] the lock-return.

    time = (return.ts - call.ts) mod 2^32, saturated to 16 bits (the
    wire width); saturations are counted. With full_ids=True the event
    carries the unhashed 64-bit mutex value at a larger wire size.
    """

    def __init__(self, full_ids: bool = False):
        self.full_ids = full_ids
        self.saturations = 0

    def fire(self, inputs):
        call, ret = inputs
        time = (ret.payload["timestamp"] - call.payload["timestamp"]) & U32_MAX
        if time > U16_MAX:
            time = U16_MAX
            self.saturations += 1
        mutex = call.payload["mutex"]
        if self.full_ids:
            return [(0, Event(ev.EV_LOCK_ACQ_TIME_FULL, {"time": time, "lock": mutex}))]
        return [(0, Event(ev.EV_LOCK_ACQ_TIME, {"time": time, "lock": hash16(mutex)}))]


class LockStatAggregator(Behavior):
    """Cumulative per-lock (count, total time) statistics.

    Accepts acquisition-time events on any input; a flush event emits
    the profile with rows sorted by lock id. Counts saturate at the
    32-bit row width on the wire.
    """

    def __init__(self):
        self.stat: dict[int, list[int]] = {}

    def fire(self, inputs):
        event = inputs[0]
        if event.type_id in (ev.EV_LOCK_ACQ_TIME, ev.EV_LOCK_ACQ_TIME_FULL):
            cell = self.stat.setdefault(event.payload["lock"], [0, 0])
            cell[0] += 1
            cell[1] = (cell[1] + event.payload["time"]) & 0xFFFFFFFFFFFFFFFF
            return []
        if event.type_id == ev.EV_SEND_LOCK_PROFILE:
            rows = tuple(
                (lock, min(cnt, U32_MAX), total)
                for lock, (cnt, total) in sorted(self.stat.items())
            )
            return [(0, Event(ev.EV_LOCK_PROFILE, {"rows": rows}))]
        return []


class Passthrough(Behavior):
    def fire(self, inputs):
        return [(0, e) for e in inputs]


class CountingForwarder(Behavior):
    """Forwards every `threshold`-th event; pure decimation."""

    def __init__(self, threshold: int = 1):
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        self.threshold = threshold
        self.count = 0

    def fire(self, inputs):
        out = []
        for e in inputs:
            self.count += 1
            if self.count % self.threshold == 0:
                out.append((0, e))
        return out


default_behaviors.register("ta_check_balance_trans", BalanceTransactionChecker)
default_behaviors.register("ta_diff", LockAcquireTimeDiff)
default_behaviors.register("ta_stat", LockStatAggregator)
default_behaviors.register("passthrough", Passthrough)
default_behaviors.register("count", CountingForwarder)


# --- sinks ------------------------------------------------------------------

_HEX_FIELDS = {"mutex", "lock", "pc"}


def _format_payload(et, payload) -> str:
    parts = []
    for f in et.fields:
        if f.name == "timestamp":
            continue
        value = payload.get(f.name)
        if f.name == "rows":
            parts.append(f"rows={len(value or ())}")
        elif f.name in _HEX_FIELDS:
            parts.append(f"{f.name}={value:#x}")
        else:
            parts.append(f"{f.name}={value}")
    return " ".join(parts)


def sink_event_log(registry: EventTypeRegistry, events) -> list[str]:
    """One line per event: timestamp, type name, payload fields."""
    lines = []
    for event in events:
        et = registry.get(event.type_id)
        ts = event.timestamp
        lines.append(
            f"{ts if ts is not None else '-':>10}  {et.name}  {_format_payload(et, event.payload)}".rstrip()
        )
    return lines


def _round2(total: int, count: int) -> Decimal:
    return (Decimal(total) / Decimal(count)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def sink_profile_table(profile_event: Event, *, top: int = 10,
                       ns_per_cycle: float | None = None) -> str:
    """Render a lock profile as the ranked contention table.

    Rows are ordered by acquisition count, highest first; ties are
    broken by ascending lock id. With ns_per_cycle given, times are
    printed in nanoseconds instead of cycles.
    """
    rows = list(profile_event.payload.get("rows", ()))
    rows.sort(key=lambda r: (-r[1], r[0]))
    unit = "ns" if ns_per_cycle is not None else "cycles"
    lines = [f"     {'mutex':<16} {'# acq.':>8} {'sum [' + unit + ']':>12} {'avg [' + unit + ']':>12}"]
    for rank, (lock, count, total) in enumerate(rows[:top], start=1):
        if ns_per_cycle is not None:
            total_out = int(total * ns_per_cycle)
        else:
            total_out = total
        avg = _round2(total_out, count) if count else Decimal("0.00")
        lines.append(f"({rank:02d}) {lock:#016x} {count:>8} {total_out:>12} {avg:>12}")
    return "\n".join(lines)
