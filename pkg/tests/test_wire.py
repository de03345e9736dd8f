import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptrdf.wire import CLIENT, MASTER, SCHEMAS, Message, Tag, WireError, decode, encode, msg

text = st.text(max_size=20)
short_text = st.text(max_size=20).filter(lambda s: len(s.encode("utf-8")) < 0xFFFF)


def value_for(kind):
    if isinstance(kind, tuple):
        what, sub = kind
        if what == "list":
            return st.lists(value_for(sub), max_size=5)
        return st.lists(st.tuples(*(value_for(k) for _, k in sub)), max_size=5)
    return {
        "u8": st.integers(0, 0xFF),
        "u16": st.integers(0, 0xFFFF),
        "u32": st.integers(0, 0xFFFFFFFF),
        "u64": st.integers(0, 2**64 - 1),
        "i64": st.integers(-(2**63), 2**63 - 1),
        "f64": st.floats(allow_nan=False),
        "str": short_text,
        "text": text,
        "rows": st.one_of(
            st.lists(st.just(()), max_size=1),
            st.integers(1, 3).flatmap(lambda k: st.lists(st.tuples(*[short_text] * k), max_size=5)),
        ),
    }[kind]


@st.composite
def messages(draw):
    tag = draw(st.sampled_from(list(SCHEMAS)))
    body = {name: draw(value_for(kind)) for name, kind in SCHEMAS[tag]}
    sender = draw(st.sampled_from([0, 1, 7, CLIENT, MASTER]))
    return Message(tag, sender, body)


@settings(max_examples=300)
@given(messages())
def test_encode_decode_round_trip(m):
    frame = encode(m)
    assert int.from_bytes(frame[:4], "big") == len(frame) - 4
    back = decode(frame)
    assert back.tag == m.tag and back.sender == m.sender
    assert back.body == m.body


@settings(max_examples=400)
@given(st.binary(max_size=64))
def test_garbage_raises_only_wire_error(data):
    try:
        decode(data)
    except WireError:
        pass


@settings(max_examples=200)
@given(messages(), st.data())
def test_truncated_or_corrupted_frames_are_rejected_cleanly(m, data):
    frame = bytearray(encode(m))
    cut = data.draw(st.integers(0, len(frame) - 1))
    with pytest.raises(WireError):
        decode(bytes(frame[:cut]))
    if len(frame) > 7:
        i = data.draw(st.integers(7, len(frame) - 1))
        frame[i] ^= data.draw(st.integers(1, 255))
        try:
            decode(bytes(frame))
        except WireError:
            pass


def test_forged_zero_arity_row_count_is_rejected_fast():
    payload = struct.pack(">IIH", 1, 0xFFFFFFFF, 0)
    frame = struct.pack(">IBH", len(payload) + 3, int(Tag.LOAD_TRIPLES), 0) + payload
    with pytest.raises(WireError):
        decode(frame)


def test_column_less_rows_collapse_to_presence():
    m = msg(Tag.LOAD_TRIPLES, 0, op=1, triples=[(), (), ()])
    assert decode(encode(m)).triples == [()]


def test_unknown_tag_and_length_mismatch():
    with pytest.raises(WireError, match="unknown tag"):
        decode(struct.pack(">IBH", 3, 200, 0))
    frame = encode(msg(Tag.SHUTDOWN, 0))
    with pytest.raises(WireError):
        decode(frame + b"\0")


def test_message_attribute_access():
    m = msg(Tag.ACK, 3, op=1, status=0, main_count=5, replica_count=2, moved=0, text="")
    assert m.main_count == 5
    with pytest.raises(AttributeError):
        m.nope
