"""Encoder/decoder for the Tracemax IPv4 option.

Wire layout (``option_length`` bytes, then zero padding to a 32-bit boundary)::

    0x56 | option_length | S R hop_count(6) | [sender 4B] | ID field ... | [receiver 4B]

The sender/receiver slots are reserved by the profile; the S and R flag bits say
whether the slot has been filled. IDs are packed MSB-first, ``bit_width`` bits each,
into a fixed zero-filled region so routers can append in place.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace

OPTION_TYPE = 0x56  # copied=0, class=2 (measurement), number=22
MAX_OPTION_LENGTH = 40
HEADER_LENGTH = 3
MAX_HOPS = 63

LOOSE_SOURCE_ROUTE = 0x83
STRICT_SOURCE_ROUTE = 0x89
SOURCE_ROUTE_TYPES = {LOOSE_SOURCE_ROUTE: "Loose Source Route", STRICT_SOURCE_ROUTE: "Strict Source Route"}

_SENDER_FLAG = 0x80
_RECEIVER_FLAG = 0x40
_HOP_MASK = 0x3F


class OptionError(ValueError):
    pass


class MalformedOption(OptionError):
    pass


class TruncatedOption(MalformedOption):
    pass


class SourceRouteRefused(OptionError):
    """Source-route options are discouraged for security reasons and always refused."""


class CapacityExceeded(OptionError):
    pass


@dataclass(frozen=True)
class CodecProfile:
    bit_width: int = 8
    include_sender: bool = True
    include_receiver: bool = True
    option_length: int = MAX_OPTION_LENGTH

    def __post_init__(self):
        if not 1 <= self.bit_width <= 8:
            raise ValueError(f"bit_width must be in 1..8, got {self.bit_width}")
        if not HEADER_LENGTH <= self.option_length <= MAX_OPTION_LENGTH:
            raise ValueError(f"option_length must be in {HEADER_LENGTH}..{MAX_OPTION_LENGTH}, got {self.option_length}")
        if self.id_field_bytes < 0:
            raise ValueError(f"option_length {self.option_length} cannot hold the requested address slots")

    @property
    def id_field_bytes(self) -> int:
        return self.option_length - HEADER_LENGTH - 4 * self.include_sender - 4 * self.include_receiver

    @property
    def padded_length(self) -> int:
        return -(-self.option_length // 4) * 4

    @property
    def receiver_offset(self) -> int:
        return self.option_length - 4

    def check_usable(self) -> CodecProfile:
        if capacity(self) < 1:
            raise ValueError(f"profile {self} cannot hold a single ID")
        return self


@dataclass(frozen=True)
class TraceOption:
    ids: tuple[int, ...] = ()
    sender: ipaddress.IPv4Address | None = None
    receiver: ipaddress.IPv4Address | None = None
    option_length: int = MAX_OPTION_LENGTH
    option_type: int = field(default=OPTION_TYPE)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        for name in ("sender", "receiver"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, ipaddress.IPv4Address):
                object.__setattr__(self, name, ipaddress.IPv4Address(value))

    @property
    def hop_count(self) -> int:
        return len(self.ids)

    @property
    def has_sender(self) -> bool:
        return self.sender is not None

    @property
    def has_receiver(self) -> bool:
        return self.receiver is not None

    def push(self, id_: int) -> TraceOption:
        return replace(self, ids=self.ids + (id_,))


def capacity(p: CodecProfile) -> int:
    return min(MAX_HOPS, max(0, p.id_field_bytes) * 8 // p.bit_width)


def _check_id(value: int, p: CodecProfile):
    if not isinstance(value, int) or not 1 <= value < (1 << p.bit_width):
        raise OptionError(f"ID {value!r} out of range 1..{(1 << p.bit_width) - 1} for bit_width {p.bit_width}")


def encode(o: TraceOption, p: CodecProfile) -> bytes:
    if o.option_type != OPTION_TYPE:
        raise OptionError(f"option_type must be 0x{OPTION_TYPE:02x}")
    if o.option_length != p.option_length:
        raise OptionError(f"option_length {o.option_length} does not match profile ({p.option_length})")
    if o.has_sender and not p.include_sender:
        raise OptionError("profile has no sender slot")
    if o.has_receiver and not p.include_receiver:
        raise OptionError("profile has no receiver slot")
    if o.hop_count > capacity(p):
        raise CapacityExceeded(f"{o.hop_count} IDs exceed capacity {capacity(p)}")
    packed = 0
    for value in o.ids:
        _check_id(value, p)
        packed = (packed << p.bit_width) | value
    nbits = p.id_field_bytes * 8
    packed <<= nbits - o.hop_count * p.bit_width

    out = bytearray(p.padded_length)
    out[0] = OPTION_TYPE
    out[1] = p.option_length
    out[2] = (_SENDER_FLAG if o.has_sender else 0) | (_RECEIVER_FLAG if o.has_receiver else 0) | o.hop_count
    pos = HEADER_LENGTH
    if p.include_sender:
        if o.has_sender:
            out[pos:pos + 4] = o.sender.packed
        pos += 4
    out[pos:pos + p.id_field_bytes] = packed.to_bytes(p.id_field_bytes, "big")
    if o.has_receiver:
        out[p.receiver_offset:p.option_length] = o.receiver.packed
    return bytes(out)


def classify_type(first: int) -> None:
    if first in SOURCE_ROUTE_TYPES:
        raise SourceRouteRefused(f"{SOURCE_ROUTE_TYPES[first]} option (0x{first:02x}) refused")
    if first != OPTION_TYPE:
        raise MalformedOption(f"option type 0x{first:02x} is not a Tracemax option")


def decode(b: bytes, p: CodecProfile) -> TraceOption:
    """Strict inverse of :func:`encode`; any byte string not produced by it is rejected."""
    b = bytes(b)
    if not b:
        raise TruncatedOption("empty buffer")
    classify_type(b[0])
    if len(b) < 2:
        raise TruncatedOption("buffer ends before option-length octet")
    if b[1] != p.option_length:
        raise MalformedOption(f"option-length {b[1]} does not match profile ({p.option_length})")
    if len(b) < p.padded_length:
        raise TruncatedOption(f"buffer has {len(b)} bytes, option needs {p.padded_length}")
    if len(b) > p.padded_length:
        raise MalformedOption(f"buffer has {len(b)} bytes, expected {p.padded_length}")
    if any(b[p.option_length:]):
        raise MalformedOption("non-zero padding after option")

    control = b[2]
    hops = control & _HOP_MASK
    has_sender = bool(control & _SENDER_FLAG)
    has_receiver = bool(control & _RECEIVER_FLAG)
    if hops > capacity(p):
        raise MalformedOption(f"hop_count {hops} exceeds ID-field capacity {capacity(p)}")
    if has_sender and not p.include_sender:
        raise MalformedOption("sender flag set but profile has no sender slot")
    if has_receiver and not p.include_receiver:
        raise MalformedOption("receiver flag set but profile has no receiver slot")

    pos = HEADER_LENGTH
    sender = None
    if p.include_sender:
        raw = b[pos:pos + 4]
        if has_sender:
            sender = ipaddress.IPv4Address(raw)
        elif any(raw):
            raise MalformedOption("unfilled sender slot is not zero")
        pos += 4
    receiver = None
    if p.include_receiver:
        raw = b[p.receiver_offset:p.option_length]
        if has_receiver:
            receiver = ipaddress.IPv4Address(raw)
        elif any(raw):
            raise MalformedOption("unfilled receiver slot is not zero")

    field_ = int.from_bytes(b[pos:pos + p.id_field_bytes], "big")
    nbits = p.id_field_bytes * 8
    used = hops * p.bit_width
    if field_ & ((1 << (nbits - used)) - 1):
        raise MalformedOption("non-zero bits after the last recorded ID")
    mask = (1 << p.bit_width) - 1
    ids = []
    for i in range(hops):
        value = (field_ >> (nbits - (i + 1) * p.bit_width)) & mask
        if value == 0:
            raise MalformedOption(f"ID #{i + 1} is zero (reserved)")
        ids.append(value)
    return TraceOption(tuple(ids), sender, receiver, p.option_length)


def append_id(b: bytes, id_: int, p: CodecProfile) -> bytes:
    """Write ``id_`` into the next free ID slot, touching only the control octet and those bits."""
    _check_id(id_, p)
    current = decode(b, p)
    hops = current.hop_count
    if hops >= capacity(p):
        raise CapacityExceeded(f"option already holds {hops} IDs (capacity {capacity(p)})")
    out = bytearray(b)
    out[2] = (out[2] & ~_HOP_MASK) | (hops + 1)
    start = HEADER_LENGTH + 4 * p.include_sender
    bit = hops * p.bit_width
    for k in range(p.bit_width):
        if id_ >> (p.bit_width - 1 - k) & 1:
            pos = bit + k
            out[start + pos // 8] |= 0x80 >> (pos % 8)
    return bytes(out)


def set_sender(b: bytes, address, p: CodecProfile) -> bytes:
    return encode(replace(decode(b, p), sender=ipaddress.IPv4Address(address)), p)


def set_receiver(b: bytes, address, p: CodecProfile) -> bytes:
    return encode(replace(decode(b, p), receiver=ipaddress.IPv4Address(address)), p)


def to_hex(b: bytes) -> str:
    return b.hex(" ")


def from_hex(text: str) -> bytes:
    return bytes.fromhex("".join(text.split()))
