import ipaddress
import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from tracemax import codec
from tracemax.codec import (CapacityExceeded, CodecProfile, MalformedOption, OptionError, SourceRouteRefused,
                            TraceOption, TruncatedOption, append_id, capacity, decode, encode)

from conftest import golden

NO_IPS = dict(include_sender=False, include_receiver=False)


def oracle_encode(ids, bw, sender, receiver, p):
    """Build the option from bit strings, independent of the codec's integer packing."""
    bits = "".join(format(i, f"0{bw}b") for i in ids).ljust(p.id_field_bytes * 8, "0")
    field = bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))
    control = (0x80 if sender else 0) | (0x40 if receiver else 0) | len(ids)
    out = bytes([0x56, p.option_length, control])
    if p.include_sender:
        out += ipaddress.IPv4Address(sender).packed if sender else bytes(4)
    out += field
    if p.include_receiver:
        out += ipaddress.IPv4Address(receiver).packed if receiver else bytes(4)
    return out + bytes(p.padded_length - len(out))


def oracle_capacity(p):
    """Largest k whose packed IDs still fit, found by counting up."""
    slots = 4 * p.include_sender + 4 * p.include_receiver
    k = 0
    while k < 63 and 3 + slots + -(-(k + 1) * p.bit_width // 8) <= p.option_length:
        k += 1
    return k


PROFILES = [CodecProfile(bw, s, r, L)
            for bw in (1, 2, 3, 4, 5, 6, 7, 8)
            for s, r in itertools.product([False, True], repeat=2)
            for L in (3, 8, 11, 12, 17, 29, 40)
            if L - 3 - 4 * s - 4 * r >= 0]


def random_option(rng, p):
    n = rng.randint(0, capacity(p))
    ids = tuple(rng.randint(1, (1 << p.bit_width) - 1) for _ in range(n))
    sender = ipaddress.IPv4Address(rng.getrandbits(32)) if p.include_sender and rng.random() < 0.7 else None
    receiver = ipaddress.IPv4Address(rng.getrandbits(32)) if p.include_receiver and rng.random() < 0.7 else None
    return TraceOption(ids, sender, receiver, p.option_length)


def test_preamble_octets():
    # copied flag 0, class 2 (measurement), number 22
    assert (0 << 7) | (2 << 5) | 22 == 0x56 == 86
    assert codec.OPTION_TYPE == 0x56


def test_empty_option_golden():
    p = CodecProfile(8, **NO_IPS)
    assert encode(TraceOption(), p) == golden("empty_no_ips_len40.hex")


def test_one_id_0x12_golden():
    p = CodecProfile(8, **NO_IPS)
    b = encode(TraceOption((0x12,)), p)
    assert b == golden("one_id_0x12_bw8.hex")
    assert b[2] == 1 and b[3] == 0x12


def test_three_ids_bw4_golden():
    p = CodecProfile(4, **NO_IPS)
    b = encode(TraceOption((1, 2, 3)), p)
    assert b[3:5] == bytes([0x12, 0x30])
    assert b == golden("ids_1_2_3_bw4.hex")


def test_default_profile_golden():
    p = CodecProfile()
    assert encode(TraceOption(), p) == golden("default_profile_empty.hex")
    full = TraceOption((0x12,), "192.0.2.1", "192.0.2.254")
    assert encode(full, p) == golden("default_profile_full.hex")
    assert decode(golden("default_profile_full.hex"), p) == full


@pytest.mark.parametrize("p", PROFILES, ids=str)
def test_capacity_matches_oracle(p):
    assert capacity(p) == oracle_capacity(p)
    assert capacity(p) == min(63, p.id_field_bytes * 8 // p.bit_width)


def test_capacity_examples():
    assert capacity(CodecProfile(4, True, True, 40)) == 58
    assert capacity(CodecProfile(5, True, True, 40)) == 46
    assert capacity(CodecProfile(8, False, False, 3)) == 0
    assert capacity(CodecProfile(1, False, False, 40)) == 63


def test_profile_invariants():
    with pytest.raises(ValueError):
        CodecProfile(0)
    with pytest.raises(ValueError):
        CodecProfile(8, True, True, 10)
    with pytest.raises(ValueError):
        CodecProfile(8, False, False, 41)
    with pytest.raises(ValueError):
        CodecProfile(8, False, False, 3).check_usable()


@pytest.mark.parametrize("p", PROFILES, ids=str)
def test_encode_matches_oracle_and_round_trips(p):
    rng = random.Random(str(p))
    for _ in range(1000):
        o = random_option(rng, p)
        b = encode(o, p)
        assert b == oracle_encode(o.ids, p.bit_width, o.sender, o.receiver, p)
        assert len(b) == p.padded_length and len(b) % 4 == 0
        assert 20 + len(b) <= 60
        assert decode(b, p) == o
        assert encode(decode(b, p), p) == b


@st.composite
def profile_and_option(draw):
    bw = draw(st.integers(1, 8))
    s, r = draw(st.booleans()), draw(st.booleans())
    length = draw(st.integers(3 + 4 * s + 4 * r, 40))
    p = CodecProfile(bw, s, r, length)
    ids = draw(st.lists(st.integers(1, (1 << bw) - 1), max_size=capacity(p)))
    ip = st.integers(0, 2**32 - 1).map(ipaddress.IPv4Address)
    sender = draw(st.none() | ip) if s else None
    receiver = draw(st.none() | ip) if r else None
    return p, TraceOption(tuple(ids), sender, receiver, length)


@settings(max_examples=300, deadline=None)
@given(profile_and_option(), st.data())
def test_append_equivalence(po, data):
    p, o = po
    b = encode(o, p)
    if o.hop_count == capacity(p):
        with pytest.raises(CapacityExceeded):
            append_id(b, 1, p)
        return
    x = data.draw(st.integers(1, (1 << p.bit_width) - 1))
    out = append_id(b, x, p)
    assert out == encode(o.push(x), p)
    # only the control octet and the new ID's bits change
    start = 3 + 4 * p.include_sender
    lo, hi = o.hop_count * p.bit_width, (o.hop_count + 1) * p.bit_width
    for i, (u, v) in enumerate(zip(b, out)):
        if i == 2 or u == v:
            continue
        bits = {(i - start) * 8 + k for k in range(8) if (u ^ v) & (0x80 >> k)}
        assert i >= start and all(lo <= bit < hi for bit in bits)


def test_append_to_empty_is_listing_behaviour():
    p = CodecProfile(8, **NO_IPS)
    assert append_id(encode(TraceOption(), p), 0x12, p) == golden("one_id_0x12_bw8.hex")


def test_58_appends_then_capacity_exceeded():
    p = CodecProfile(4, True, True, 40)
    b = encode(TraceOption((), "192.0.2.1", None, 40), p)
    for i in range(58):
        b = append_id(b, (i % 15) + 1, p)
    assert decode(b, p).hop_count == 58
    with pytest.raises(CapacityExceeded):
        append_id(b, 1, p)


@pytest.mark.parametrize("bad", [0, 16, -1])
def test_append_id_range(bad):
    p = CodecProfile(4, **NO_IPS)
    with pytest.raises(OptionError):
        append_id(encode(TraceOption(), p), bad, p)


def test_encode_errors():
    p = CodecProfile(4, **NO_IPS)
    with pytest.raises(OptionError):
        encode(TraceOption((16,)), p)
    with pytest.raises(OptionError):
        encode(TraceOption((0,)), p)
    with pytest.raises(CapacityExceeded):
        encode(TraceOption((1,) * 64), p)
    with pytest.raises(CapacityExceeded):
        encode(TraceOption((1,) * 38), CodecProfile(8, **NO_IPS))
    with pytest.raises(OptionError):
        encode(TraceOption(sender="1.2.3.4"), p)


@pytest.mark.parametrize("first,name", [(0x83, "Loose"), (0x89, "Strict")])
def test_source_route_refused(first, name):
    with pytest.raises(SourceRouteRefused, match=name):
        decode(bytes([first, 3, 4]) + bytes(37), CodecProfile())


def test_decode_rejects():
    p = CodecProfile(4, **NO_IPS)
    good = bytearray(encode(TraceOption((1, 2)), p))
    with pytest.raises(TruncatedOption):
        decode(b"", p)
    with pytest.raises(TruncatedOption):
        decode(good[:1], p)
    with pytest.raises(TruncatedOption):
        decode(good[:20], p)
    with pytest.raises(MalformedOption, match="not a Tracemax"):
        decode(b"\x07" + good[1:], p)
    with pytest.raises(MalformedOption, match="option-length"):
        decode(good[:1] + b"\x27" + good[2:], p)
    over = bytearray(good)
    over[2] = 63
    with pytest.raises(MalformedOption, match="exceeds"):
        decode(over, CodecProfile(8, True, True, 40))
    zero = bytearray(good)
    zero[2] = 3  # claims a third ID whose bits are zero
    with pytest.raises(MalformedOption, match="zero"):
        decode(zero, p)
    stray = bytearray(good)
    stray[20] = 1
    with pytest.raises(MalformedOption):
        decode(stray, p)
    flagged = bytearray(good)
    flagged[2] |= 0x80
    with pytest.raises(MalformedOption, match="sender"):
        decode(flagged, p)


def test_decode_unfilled_slot_must_be_zero():
    p = CodecProfile(8, True, True, 40)
    b = bytearray(encode(TraceOption(), p))
    b[37] = 9
    with pytest.raises(MalformedOption, match="receiver"):
        decode(b, p)


def test_padding_for_odd_length():
    p = CodecProfile(8, False, False, 11)
    b = encode(TraceOption((5,), option_length=11), p)
    assert len(b) == 12 and b[11] == 0
    bad = b[:11] + b"\x01"
    with pytest.raises(MalformedOption, match="padding"):
        decode(bad, p)


@settings(max_examples=2000, deadline=None)
@given(st.binary(max_size=48))
def test_decode_total(b):
    for p in (CodecProfile(), CodecProfile(4, **NO_IPS), CodecProfile(1, True, False, 11)):
        try:
            o = decode(b, p)
        except (MalformedOption, SourceRouteRefused):
            continue
        assert encode(o, p) == b


def test_hex_format():
    assert codec.to_hex(b"\x56\x28\x00") == "56 28 00"
    assert codec.from_hex("56 28\n00") == b"\x56\x28\x00"
