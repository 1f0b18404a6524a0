"""CPU event generators: trigger conditions over one trace stream.

A generator monitors a single CPU's TraceRecord stream against up to K
concurrent trigger conditions (default 12, the modeled hardware limit)
and emits primary events carrying a partial state snapshot taken at the
trigger instant.

Two trigger kinds exist:

* pc_match(pc): fires whenever the monitored pc retires.
* function_return(entry_pc): a pc comparator on the function's first
  instruction; when it fires, the link (return) address is pushed onto a
  bounded return-address stack. A later record whose pc equals the
  topmost stacked address is the return to the caller and emits the
  event. Only the topmost entry is compared, so recursive functions
  match innermost returns first. Returns taken through a pc that never
  retires (tail calls) leave unmatched pushes, visible in diagnostics.

Snapshots are served from shadows maintained from the stream itself: a
copy of the register file (updated on every writeback) and a copy of
the current stack frame (updated on stack-pointer-relative store words,
cleared when a monitored function is entered). Arguments 1-6 come from
registers r3-r8; higher argument numbers come from the stack shadow.

The generator is passive: it consumes records and produces events, and
holds no handle through which anything could flow back into the
observed system. One instance per CPU stream; step() is not reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError, TriggerCapacityExceeded
from .events import Event, EventTypeRegistry
from .workloads import RecordKind, TraceRecord

DEFAULT_MAX_TRIGGERS = 12
DEFAULT_RAS_DEPTH = 32

_STACK_POINTER_REG = 1  # r1 per the modeled calling convention
_ARG_REGS = (3, 4, 5, 6, 7, 8)  # r3..r8 hold arguments 1..6


class TriggerKind(Enum):
    PC_MATCH = "pc_match"
    FUNCTION_RETURN = "function_return"


@dataclass(frozen=True, slots=True)
class CaptureSpec:
    """Which state to attach to an emitted event.

    arg_count leading function arguments are captured (1-6 from the
    register shadow, 7+ from the stack shadow), then any explicitly
    listed registers. include_timestamp must match whether the emitted
    event type carries a timestamp field.
    """

    arg_count: int = 0
    registers: tuple[int, ...] = ()
    include_timestamp: bool = True


@dataclass(frozen=True, slots=True)
class TriggerCondition:
    trigger_id: int
    kind: TriggerKind
    pc: int  # comparator value: matched pc, or the function entry pc
    emit_type: int
    capture: CaptureSpec = CaptureSpec()


class EventGenerator:
    """Monitors one CPU's trace stream; see module docstring."""

    def __init__(self, registry: EventTypeRegistry, *, cpu_id: int = 0,
                 max_triggers: int = DEFAULT_MAX_TRIGGERS,
                 ras_depth: int = DEFAULT_RAS_DEPTH):
        self.registry = registry
        self.cpu_id = cpu_id
        self.max_triggers = max_triggers
        self.ras_depth = ras_depth
        self.register_shadow = [0] * 32
        self.stack_shadow: dict[int, int] = {}
        # bounded stack of (link address, trigger id); index -1 is the top
        self.return_address_stack: list[tuple[int, int]] = []
        self.diagnostics = {
            "ras_overflow_drops": 0,
            "stack_shadow_misses": 0,
            "events_emitted": 0,
        }
        self._triggers: dict[int, TriggerCondition] = {}
        self._pc_match: dict[int, list[TriggerCondition]] = {}
        self._entries: dict[int, TriggerCondition] = {}
        self._last_cycle = -1

    # --- configuration ---

    def configure_trigger(self, cond: TriggerCondition) -> int:
        """Activate a trigger condition; returns its id."""
        if len(self._triggers) >= self.max_triggers:
            raise TriggerCapacityExceeded(
                f"generator supports {self.max_triggers} concurrent trigger conditions"
            )
        if cond.trigger_id in self._triggers:
            raise ConfigError(f"duplicate trigger id {cond.trigger_id}")
        if cond.kind is TriggerKind.FUNCTION_RETURN and cond.pc in self._entries:
            raise ConfigError(
                f"function entry {cond.pc:#x} already has a return trigger"
            )
        self._check_capture(cond)
        self._triggers[cond.trigger_id] = cond
        if cond.kind is TriggerKind.PC_MATCH:
            bucket = self._pc_match.setdefault(cond.pc, [])
            bucket.append(cond)
            bucket.sort(key=lambda c: c.trigger_id)
        else:
            self._entries[cond.pc] = cond
        return cond.trigger_id

    def _check_capture(self, cond: TriggerCondition) -> None:
        cap = cond.capture
        if cap.arg_count < 0:
            raise ConfigError("arg_count must be >= 0")
        for r in cap.registers:
            if not (0 <= r < 32):
                raise ConfigError(f"register index {r} out of range")
        et = self.registry.get(cond.emit_type)
        if cap.include_timestamp != et.has_timestamp:
            raise ConfigError(
                f"{et.name}: include_timestamp={cap.include_timestamp} but schema "
                f"{'has' if et.has_timestamp else 'lacks'} a timestamp field"
            )
        data_fields = [f for f in et.fields if f.name != "timestamp"]
        need = cap.arg_count + len(cap.registers)
        if len(data_fields) != need:
            raise ConfigError(
                f"{et.name}: capture produces {need} values but schema has "
                f"{len(data_fields)} non-timestamp fields"
            )

    @property
    def active_triggers(self) -> int:
        return len(self._triggers)

    # --- stream consumption ---

    def step(self, record: TraceRecord) -> list[Event]:
        """Consume one record; returns events emitted at this cycle."""
        if record.cycle < self._last_cycle:
            raise AssertionError(
                f"records out of order: cycle {record.cycle} after {self._last_cycle}"
            )
        self._last_cycle = record.cycle

        # shadows update before any capture is evaluated
        if record.reg_writeback is not None:
            reg, value = record.reg_writeback
            self.register_shadow[reg] = value
        if record.store is not None:
            base, offset, value = record.store
            if base == _STACK_POINTER_REG and offset >= 0:
                self.stack_shadow[offset] = value

        matched: list[TriggerCondition] = []
        matched.extend(self._pc_match.get(record.pc, ()))

        ras = self.return_address_stack
        if ras and ras[-1][0] == record.pc:
            _, trigger_id = ras.pop()
            matched.append(self._triggers[trigger_id])

        matched.sort(key=lambda c: c.trigger_id)
        events = [self._emit(cond, record) for cond in matched]
        self.diagnostics["events_emitted"] += len(events)

        # a call into a monitored function arms the return matcher and
        # starts a fresh frame for the stack shadow
        if record.kind is RecordKind.CALL:
            entry = self._entries.get(record.pc)
            if entry is not None:
                if len(ras) >= self.ras_depth:
                    del ras[0]
                    self.diagnostics["ras_overflow_drops"] += 1
                ras.append((record.link_address, entry.trigger_id))
                self.stack_shadow.clear()
        return events

    def _emit(self, cond: TriggerCondition, record: TraceRecord) -> Event:
        et = self.registry.get(cond.emit_type)
        values = self.capture_snapshot(cond.capture)
        payload: dict[str, object] = {}
        it = iter(values)
        for f in et.fields:
            if f.name == "timestamp":
                payload[f.name] = record.cycle & 0xFFFFFFFF
            else:
                payload[f.name] = next(it)
        return Event(cond.emit_type, payload)

    def capture_snapshot(self, cap: CaptureSpec) -> list[int]:
        """Capture values per spec: args first, then listed registers.

        A stack-shadow miss (argument word never observed) captures 0 and
        bumps the diagnostics counter; the event is still emitted.
        """
        values: list[int] = []
        for n in range(1, cap.arg_count + 1):
            if n <= len(_ARG_REGS):
                values.append(self.register_shadow[_ARG_REGS[n - 1]])
            else:
                offset = (n - 1 - len(_ARG_REGS)) * 4
                if offset in self.stack_shadow:
                    values.append(self.stack_shadow[offset])
                else:
                    self.diagnostics["stack_shadow_misses"] += 1
                    values.append(0)
        for r in sorted(cap.registers):
            values.append(self.register_shadow[r])
        return values

    @property
    def unmatched_pushes(self) -> int:
        """Armed returns never seen; nonzero after tail-call-style exits."""
        return len(self.return_address_stack)


def run_generator(gen: EventGenerator, records) -> list[tuple[int, Event]]:
    """Feed a whole stream; returns (cycle, event) pairs in stream order."""
    out: list[tuple[int, Event]] = []
    for record in records:
        for event in gen.step(record):
            out.append((record.cycle, event))
    return out
