"""Diagnosis events: type registry and bit-exact wire format.

Every message flowing through the diagnosis system is an Event: a 16-bit
type identifier plus an ordered, fixed-width payload. Events are
self-contained; decoding needs only the bytes and the type registry, no
state from earlier events. All multi-byte values are little-endian.

Wire size of a fixed-layout event is 2 bytes (type id) + the sum of the
payload field widths. A timestamp, where a type carries one, is an
ordinary 4-byte payload field named "timestamp". The one variable-length
type is the lock profile (EV_LOCK_PROFILE), whose payload is a 16-bit
row count followed by fixed 20-byte rows.

Type ids 0x0000-0x00FF are reserved for the built-in types below;
user-defined types start at 0x0100.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import (
    DuplicateTypeId,
    ReservedTypeId,
    SchemaMismatch,
    TruncatedPayload,
    UnknownTypeId,
)

RESERVED_ID_LIMIT = 0x0100

# scalar payload field kinds -> (width bytes, struct code)
_SCALARS = {
    "u8": (1, "B"),
    "u16": (2, "H"),
    "u32": (4, "I"),
    "u64": (8, "Q"),
}

# variable-length profile payload: u16 row count, then per row
# (lock: u64, count: u32, total_time: u64) packed little-endian.
PROFILE_ROWS_KIND = "profile_rows"
PROFILE_ROW_STRUCT = struct.Struct("<QIQ")
PROFILE_ROW_BYTES = PROFILE_ROW_STRUCT.size  # 20


@dataclass(frozen=True, slots=True)
class Field:
    name: str
    kind: str  # u8 | u16 | u32 | u64 | profile_rows

    @property
    def width(self) -> int:
        if self.kind == PROFILE_ROWS_KIND:
            raise SchemaMismatch(f"field {self.name!r} has no fixed width")
        return _SCALARS[self.kind][0]


@dataclass(frozen=True, slots=True)
class EventType:
    """One registered event type: id, name, and ordered payload schema."""

    type_id: int
    name: str
    fields: tuple[Field, ...]

    @property
    def fixed_size(self) -> bool:
        return all(f.kind != PROFILE_ROWS_KIND for f in self.fields)

    @property
    def wire_size(self) -> int:
        """Encoded size in bytes; only defined for fixed-layout types."""
        return 2 + sum(f.width for f in self.fields)

    @property
    def has_timestamp(self) -> bool:
        return any(f.name == "timestamp" for f in self.fields)


@dataclass(slots=True)
class Event:
    """A single diagnosis event. payload keys follow the type's schema."""

    type_id: int
    payload: dict[str, object] = field(default_factory=dict)

    @property
    def timestamp(self):
        return self.payload.get("timestamp")


class EventTypeRegistry:
    """Maps type ids and names to payload schemas.

    Populated once during configuration; treat as read-only afterwards
    (no locking is done, instances are safe to share between threads
    only once configuration is complete).
    """

    def __init__(self):
        self._by_id: dict[int, EventType] = {}
        self._by_name: dict[str, int] = {}

    def register(self, type_id: int, name: str, fields, *, _builtin: bool = False) -> EventType:
        """Register a new event type; returns the EventType record.

        fields: iterable of (name, kind) pairs or Field objects, in wire
        order.
        """
        if not (0 <= type_id <= 0xFFFF):
            raise SchemaMismatch(f"type id {type_id:#x} outside 16-bit range")
        if type_id in self._by_id:
            raise DuplicateTypeId(f"type id {type_id:#06x} already registered")
        if type_id < RESERVED_ID_LIMIT and not _builtin:
            raise ReservedTypeId(
                f"type id {type_id:#06x} is in the reserved built-in range (< {RESERVED_ID_LIMIT:#06x})"
            )
        if name in self._by_name:
            raise DuplicateTypeId(f"type name {name!r} already registered")
        norm = []
        for f in fields:
            if not isinstance(f, Field):
                f = Field(*f)
            if f.kind not in _SCALARS and f.kind != PROFILE_ROWS_KIND:
                raise SchemaMismatch(f"unknown field kind {f.kind!r}")
            norm.append(f)
        et = EventType(type_id, name, tuple(norm))
        self._by_id[type_id] = et
        self._by_name[name] = type_id
        return et

    def get(self, type_id: int) -> EventType:
        try:
            return self._by_id[type_id]
        except KeyError:
            raise UnknownTypeId(f"type id {type_id:#06x} not registered") from None

    def by_name(self, name: str) -> EventType:
        try:
            return self._by_id[self._by_name[name]]
        except KeyError:
            raise UnknownTypeId(f"type name {name!r} not registered") from None

    def __contains__(self, type_id: int) -> bool:
        return type_id in self._by_id

    def types(self):
        return list(self._by_id.values())

    def name_of(self, type_id: int) -> str:
        return self.get(type_id).name


# --- built-in types -------------------------------------------------------
# Reserved ids; payload layouts pin the documented wire sizes:
# EV_LOCK_CALL 14 B, EV_LOCK_RETURN 6 B, EV_LOCK_ACQ_TIME 6 B,
# EV_MSG_SEND/RECV 10 B, EV_RACE_DETECTED 6 B.

EV_GET_BALANCE_CALL = 0x0001
EV_SET_BALANCE_RETURN = 0x0002
EV_RACE_DETECTED = 0x0003
EV_LOCK_CALL = 0x0010
EV_LOCK_RETURN = 0x0011
EV_LOCK_ACQ_TIME = 0x0012
EV_SEND_LOCK_PROFILE = 0x0013
EV_LOCK_PROFILE = 0x0014
EV_LOCK_ACQ_TIME_FULL = 0x0015  # debug variant carrying the unhashed lock id
EV_MSG_SEND = 0x0020
EV_MSG_RECV = 0x0021

_BUILTINS = [
    (EV_GET_BALANCE_CALL, "EV_GET_BALANCE_CALL", [("timestamp", "u32"), ("src", "u16")]),
    (EV_SET_BALANCE_RETURN, "EV_SET_BALANCE_RETURN", [("timestamp", "u32"), ("src", "u16")]),
    (EV_RACE_DETECTED, "EV_RACE_DETECTED", [("timestamp", "u32")]),
    (EV_LOCK_CALL, "EV_LOCK_CALL", [("timestamp", "u32"), ("mutex", "u64")]),
    (EV_LOCK_RETURN, "EV_LOCK_RETURN", [("timestamp", "u32")]),
    (EV_LOCK_ACQ_TIME, "EV_LOCK_ACQ_TIME", [("time", "u16"), ("lock", "u16")]),
    (EV_SEND_LOCK_PROFILE, "EV_SEND_LOCK_PROFILE", []),
    (EV_LOCK_PROFILE, "EV_LOCK_PROFILE", [("rows", PROFILE_ROWS_KIND)]),
    (EV_LOCK_ACQ_TIME_FULL, "EV_LOCK_ACQ_TIME_FULL", [("time", "u16"), ("lock", "u64")]),
    (EV_MSG_SEND, "EV_MSG_SEND", [("timestamp", "u32"), ("peer", "u16"), ("msg_type", "u16")]),
    (EV_MSG_RECV, "EV_MSG_RECV", [("timestamp", "u32"), ("peer", "u16"), ("msg_type", "u16")]),
]


def builtin_registry() -> EventTypeRegistry:
    """Fresh registry preloaded with the built-in reserved types."""
    reg = EventTypeRegistry()
    for type_id, name, fields in _BUILTINS:
        reg.register(type_id, name, fields, _builtin=True)
    return reg


# --- encode / decode ------------------------------------------------------

def wire_size(registry: EventTypeRegistry, event: Event) -> int:
    """Encoded size in bytes of one event under the registry."""
    et = registry.get(event.type_id)
    if et.fixed_size:
        return et.wire_size
    size = 2
    for f in et.fields:
        if f.kind == PROFILE_ROWS_KIND:
            rows = event.payload.get(f.name, ())
            size += 2 + PROFILE_ROW_BYTES * len(rows)
        else:
            size += f.width
    return size


def _check_scalar(name: str, kind: str, value) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaMismatch(f"field {name!r} must be an int, got {type(value).__name__}")
    width = _SCALARS[kind][0]
    if not (0 <= value < (1 << (8 * width))):
        raise SchemaMismatch(f"field {name!r} value {value} out of range for {kind}")
    return value


def encode_event(registry: EventTypeRegistry, event: Event) -> bytes:
    """Serialize one event to its little-endian wire form."""
    et = registry.get(event.type_id)
    names = {f.name for f in et.fields}
    extra = set(event.payload) - names
    if extra:
        raise SchemaMismatch(f"{et.name}: unexpected payload fields {sorted(extra)}")
    out = bytearray(struct.pack("<H", event.type_id))
    for f in et.fields:
        if f.name not in event.payload:
            raise SchemaMismatch(f"{et.name}: missing payload field {f.name!r}")
        value = event.payload[f.name]
        if f.kind == PROFILE_ROWS_KIND:
            rows = tuple(value)
            if len(rows) > 0xFFFF:
                raise SchemaMismatch(f"{et.name}: too many rows ({len(rows)})")
            out += struct.pack("<H", len(rows))
            for row in rows:
                lock, count, total = row
                out += PROFILE_ROW_STRUCT.pack(lock, count, total)
        else:
            out += struct.pack("<" + _SCALARS[f.kind][1], _check_scalar(f.name, f.kind, value))
    return bytes(out)


def decode_event(registry: EventTypeRegistry, data: bytes) -> Event:
    """Inverse of encode_event under the same registry."""
    if len(data) < 2:
        raise TruncatedPayload(f"need at least 2 bytes, got {len(data)}")
    (type_id,) = struct.unpack_from("<H", data, 0)
    et = registry.get(type_id)
    offset = 2
    payload: dict[str, object] = {}
    for f in et.fields:
        if f.kind == PROFILE_ROWS_KIND:
            if offset + 2 > len(data):
                raise TruncatedPayload(f"{et.name}: truncated row count")
            (n_rows,) = struct.unpack_from("<H", data, offset)
            offset += 2
            if offset + n_rows * PROFILE_ROW_BYTES > len(data):
                raise TruncatedPayload(f"{et.name}: truncated rows")
            rows = []
            for _ in range(n_rows):
                rows.append(PROFILE_ROW_STRUCT.unpack_from(data, offset))
                offset += PROFILE_ROW_BYTES
            payload[f.name] = tuple(rows)
        else:
            width, code = _SCALARS[f.kind]
            if offset + width > len(data):
                raise TruncatedPayload(
                    f"{et.name}: field {f.name!r} needs {width} bytes at offset {offset}, "
                    f"have {len(data) - offset}"
                )
            (payload[f.name],) = struct.unpack_from("<" + code, data, offset)
            offset += width
    if offset != len(data):
        raise SchemaMismatch(f"{et.name}: {len(data) - offset} trailing bytes")
    return Event(type_id, payload)
