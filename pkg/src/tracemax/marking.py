"""Per-router packet processing: ingress stamping, egress-port marking, egress annotation."""
from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field, replace

from . import codec
from .assignment import IdAssignment
from .codec import CapacityExceeded, CodecProfile, TraceOption
from .topology import PortRef

IPV4_HEADER = 20


class OnCapacity(str, enum.Enum):
    STOP_MARKING = "stop_marking"
    DROP_PACKET = "drop_packet"


class PacketDropped(Exception):
    def __init__(self, packet: Packet, reason: str):
        super().__init__(reason)
        self.packet = packet


@dataclass(frozen=True)
class Packet:
    src: ipaddress.IPv4Address
    dst: ipaddress.IPv4Address
    payload: bytes = b""
    option_bytes: bytes = b""
    # simulation metadata, not on the wire
    truncated: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("src", "dst"):
            value = getattr(self, name)
            if not isinstance(value, ipaddress.IPv4Address):
                object.__setattr__(self, name, ipaddress.IPv4Address(value))

    @property
    def payload_size(self) -> int:
        return len(self.payload)

    @property
    def header_length(self) -> int:
        return IPV4_HEADER + len(self.option_bytes)

    @property
    def total_length(self) -> int:
        return self.header_length + self.payload_size


@dataclass(frozen=True)
class MarkingConfig:
    profile: CodecProfile
    assignment: IdAssignment
    system_boundary: frozenset[str] = frozenset()
    on_capacity: OnCapacity = OnCapacity.STOP_MARKING

    def __post_init__(self):
        if self.assignment.bit_width != self.profile.bit_width:
            raise ValueError(
                f"assignment bit_width {self.assignment.bit_width} != profile bit_width {self.profile.bit_width}")
        self.profile.check_usable()
        object.__setattr__(self, "system_boundary", frozenset(self.system_boundary))
        object.__setattr__(self, "on_capacity", OnCapacity(self.on_capacity))


def ingress_process(pkt: Packet, entry: str, prev_hop, cfg: MarkingConfig) -> Packet:
    """Discard whatever option the packet carried and install a fresh, empty Tracemax option."""
    if entry not in cfg.system_boundary:
        raise ValueError(f"router {entry!r} is not an edge router of this system")
    p = cfg.profile
    sender = None
    if p.include_sender:
        sender = ipaddress.IPv4Address(prev_hop) if prev_hop is not None else pkt.src
    option = TraceOption((), sender, None, p.option_length)
    return replace(pkt, option_bytes=codec.encode(option, p), truncated=False)


def mark(pkt: Packet, at: str, egress_port: PortRef, cfg: MarkingConfig) -> Packet:
    if egress_port.router != at:
        raise ValueError(f"port {egress_port} does not belong to router {at!r}")
    try:
        option = codec.append_id(pkt.option_bytes, cfg.assignment[egress_port], cfg.profile)
    except CapacityExceeded:
        if cfg.on_capacity is OnCapacity.DROP_PACKET:
            raise PacketDropped(pkt, f"option full at {egress_port}") from None
        return replace(pkt, truncated=True)
    return replace(pkt, option_bytes=option)


def egress_process(pkt: Packet, exit_router: str, next_external, cfg: MarkingConfig) -> Packet:
    if exit_router not in cfg.system_boundary:
        raise ValueError(f"router {exit_router!r} is not an edge router of this system")
    p = cfg.profile
    if not p.include_receiver:
        codec.decode(pkt.option_bytes, p)
        return pkt
    receiver = next_external if next_external is not None else pkt.dst
    return replace(pkt, option_bytes=codec.set_receiver(pkt.option_bytes, receiver, p))
