import pytest
from hypothesis import given, strategies as st

from socdiag import events as ev
from socdiag.errors import (
    DuplicateTypeId,
    ReservedTypeId,
    SchemaMismatch,
    TruncatedPayload,
    UnknownTypeId,
)
from socdiag.events import (
    Event,
    EventTypeRegistry,
    builtin_registry,
    decode_event,
    encode_event,
    wire_size,
)


def test_register_user_type_minimal():
    reg = EventTypeRegistry()
    et = reg.register(0x0100, "EV_X", [("src", "u16")])
    assert et.wire_size == 4
    assert reg.get(0x0100).name == "EV_X"


def test_register_duplicate_id_rejected():
    reg = EventTypeRegistry()
    reg.register(0x0100, "EV_X", [("src", "u16")])
    with pytest.raises(DuplicateTypeId):
        reg.register(0x0100, "EV_Y", [("src", "u16")])


def test_register_reserved_id_rejected_for_users():
    reg = EventTypeRegistry()
    with pytest.raises(ReservedTypeId):
        reg.register(0x0042, "EV_X", [("src", "u16")])


def test_builtin_wire_sizes_pinned():
    reg = builtin_registry()
    assert reg.get(ev.EV_LOCK_CALL).wire_size == 14
    assert reg.get(ev.EV_LOCK_RETURN).wire_size == 6
    assert reg.get(ev.EV_LOCK_ACQ_TIME).wire_size == 6
    assert reg.get(ev.EV_MSG_SEND).wire_size == 10
    assert reg.get(ev.EV_MSG_RECV).wire_size == 10
    assert reg.get(ev.EV_RACE_DETECTED).wire_size == 6
    assert reg.get(ev.EV_SEND_LOCK_PROFILE).wire_size == 2


def test_size_law_equals_2_plus_field_widths():
    reg = builtin_registry()
    for et in reg.types():
        if et.fixed_size:
            assert et.wire_size == 2 + sum(f.width for f in et.fields)


def test_encode_lock_return_is_6_bytes():
    reg = builtin_registry()
    data = encode_event(reg, Event(ev.EV_LOCK_RETURN, {"timestamp": 0}))
    assert len(data) == 6
    assert data[:2] == (0x0011).to_bytes(2, "little")


def test_encode_acq_time_is_6_bytes():
    reg = builtin_registry()
    data = encode_event(reg, Event(ev.EV_LOCK_ACQ_TIME, {"time": 250, "lock": 0xBEEF}))
    assert len(data) == 6


def test_encode_empty_payload_is_2_bytes():
    reg = builtin_registry()
    assert len(encode_event(reg, Event(ev.EV_SEND_LOCK_PROFILE, {}))) == 2


def test_little_endian_layout():
    reg = builtin_registry()
    data = encode_event(reg, Event(ev.EV_LOCK_CALL, {"timestamp": 0x01020304,
                                                     "mutex": 0x1122334455667788}))
    assert data == bytes([0x10, 0x00,            # type id 0x0010
                          0x04, 0x03, 0x02, 0x01,  # timestamp
                          0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11])


def test_roundtrip_lock_call():
    reg = builtin_registry()
    e = Event(ev.EV_LOCK_CALL, {"timestamp": 100, "mutex": 0xA})
    assert decode_event(reg, encode_event(reg, e)) == e


def test_decode_unknown_type_id():
    reg = builtin_registry()
    with pytest.raises(UnknownTypeId):
        decode_event(reg, (0xFFFF).to_bytes(2, "little"))


def test_decode_truncated_payload():
    reg = builtin_registry()
    data = encode_event(reg, Event(ev.EV_LOCK_RETURN, {"timestamp": 9}))
    with pytest.raises(TruncatedPayload):
        decode_event(reg, data[:3])


def test_encode_schema_mismatch_on_missing_field():
    reg = builtin_registry()
    with pytest.raises(SchemaMismatch):
        encode_event(reg, Event(ev.EV_LOCK_CALL, {"timestamp": 1}))


def test_encode_schema_mismatch_on_extra_field():
    reg = builtin_registry()
    with pytest.raises(SchemaMismatch):
        encode_event(reg, Event(ev.EV_LOCK_RETURN, {"timestamp": 1, "bogus": 2}))


def test_encode_schema_mismatch_on_range():
    reg = builtin_registry()
    with pytest.raises(SchemaMismatch):
        encode_event(reg, Event(ev.EV_LOCK_ACQ_TIME, {"time": 0x10000, "lock": 0}))


def test_profile_event_is_length_prefixed():
    reg = builtin_registry()
    rows = tuple((i, 2 * i, 3 * i) for i in range(10))
    e = Event(ev.EV_LOCK_PROFILE, {"rows": rows})
    data = encode_event(reg, e)
    assert len(data) == 2 + 2 + 10 * 20 == 204
    assert wire_size(reg, e) == 204
    assert decode_event(reg, data) == e


def test_profile_event_empty():
    reg = builtin_registry()
    e = Event(ev.EV_LOCK_PROFILE, {"rows": ()})
    assert len(encode_event(reg, e)) == 4


_builtin_reg = builtin_registry()
_fixed_types = [et for et in _builtin_reg.types() if et.fixed_size]


@st.composite
def _random_fixed_event(draw):
    et = draw(st.sampled_from(_fixed_types))
    payload = {
        f.name: draw(st.integers(min_value=0, max_value=(1 << (8 * f.width)) - 1))
        for f in et.fields
    }
    return Event(et.type_id, payload)


@given(_random_fixed_event())
def test_roundtrip_property(event):
    assert decode_event(_builtin_reg, encode_event(_builtin_reg, event)) == event


@given(st.lists(st.tuples(
    st.integers(min_value=0, max_value=(1 << 64) - 1),
    st.integers(min_value=0, max_value=(1 << 32) - 1),
    st.integers(min_value=0, max_value=(1 << 64) - 1),
), max_size=40))
def test_roundtrip_profile_property(rows):
    e = Event(ev.EV_LOCK_PROFILE, {"rows": tuple(tuple(r) for r in rows)})
    assert decode_event(_builtin_reg, encode_event(_builtin_reg, e)) == e


def test_decoding_is_stateless():
    # the same bytes decode identically regardless of what was decoded before
    reg = builtin_registry()
    a = encode_event(reg, Event(ev.EV_LOCK_CALL, {"timestamp": 7, "mutex": 9}))
    b = encode_event(reg, Event(ev.EV_LOCK_RETURN, {"timestamp": 8}))
    first = decode_event(reg, a)
    decode_event(reg, b)
    assert decode_event(reg, a) == first
