"""Discrete packet-transit simulation with ground-truth comparison.

Each packet gets its own RNG stream derived from ``(seed, packet_id)``; the loss draw
always happens first, so a packet's route does not depend on the loss rate or on
what happened to other packets.
"""
from __future__ import annotations

import ipaddress
import json
import logging
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import codec
from .assignment import IdAssignment, assign_ids
from .codec import CodecProfile
from .marking import MarkingConfig, OnCapacity, Packet, PacketDropped, egress_process, ingress_process, mark
from .reconstruction import (NoMatch, ReconstructedPath, ReconstructionError, Status,
                             reconstruct, reconstruct_all)
from .topology import PortRef, Topology, TopologyError, load_yaml

log = logging.getLogger(__name__)

SHORTEST_PATH = "shortest_path"
ECMP_RANDOM = "ecmp_random"


class ScenarioError(ValueError):
    pass


class Unreachable(ValueError):
    pass


# --- routing ---------------------------------------------------------------------

def _distances_to(t: Topology, dst: str) -> dict[str, int]:
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        cur = queue.popleft()
        for n in t.neighbors(cur):
            if n.router not in dist:
                dist[n.router] = dist[cur] + 1
                queue.append(n.router)
    return dist


def _path_counts(t: Topology, dist: dict[str, int]) -> dict[str, int]:
    counts = {}
    for rid in sorted(dist, key=dist.get):
        if dist[rid] == 0:
            counts[rid] = 1
        else:
            counts[rid] = sum(counts[r] for r in {n.router for n in t.neighbors(rid)} if dist.get(r) == dist[rid] - 1)
    return counts


def route(t: Topology, src: str, dst: str, policy: str = SHORTEST_PATH,
          rng: random.Random | None = None) -> list[str]:
    """Minimal-hop router path. ``shortest_path`` picks the lexicographically smallest
    router sequence; ``ecmp_random`` picks uniformly among all minimal-hop paths."""
    t.router(src)
    dist = _distances_to(t, t.router(dst).id)
    if src not in dist:
        raise Unreachable(f"{dst} is unreachable from {src}")
    if policy == ECMP_RANDOM:
        if rng is None:
            raise ValueError("ecmp_random routing needs an RNG")
        counts = _path_counts(t, dist)
    elif policy != SHORTEST_PATH:
        raise ValueError(f"unknown routing policy {policy!r}")
    path = [src]
    cur = src
    while cur != dst:
        nxt = sorted({n.router for n in t.neighbors(cur) if dist.get(n.router) == dist[cur] - 1})
        if policy == SHORTEST_PATH:
            cur = nxt[0]
        else:
            cur = rng.choices(nxt, weights=[counts[r] for r in nxt])[0]
        path.append(cur)
    return path


def egress_port(t: Topology, here: str, there: str) -> PortRef:
    """Lowest-numbered local port with a link to ``there``."""
    for n in t.neighbors(here):
        if n.router == there:
            return n.local
    raise TopologyError(f"{here} has no link to {there}")


# --- scenario --------------------------------------------------------------------

@dataclass(frozen=True)
class Source:
    router: str
    src: ipaddress.IPv4Address
    count: int = 1
    payload: int = 64
    prev_hop: ipaddress.IPv4Address | None = None


@dataclass(frozen=True)
class Victim:
    router: str
    ip: ipaddress.IPv4Address


@dataclass
class Scenario:
    topology: Topology
    assignment: IdAssignment
    profile: CodecProfile
    sources: list[Source]
    victim: Victim
    routing: str = SHORTEST_PATH
    loss_rate: float = 0.0
    seed: int = 0
    on_capacity: OnCapacity = OnCapacity.STOP_MARKING
    boundary: frozenset[str] | None = None
    bridge_budget: int = 1
    name: str = ""

    def check(self):
        t = self.topology
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ScenarioError(f"loss_rate must be in [0, 1], got {self.loss_rate}")
        if self.routing not in (SHORTEST_PATH, ECMP_RANDOM):
            raise ScenarioError(f"unknown routing policy {self.routing!r}")
        for s in self.sources:
            if s.router not in t.routers:
                raise ScenarioError(f"source attach router {s.router!r} does not exist")
            if s.count < 0 or s.payload < 0:
                raise ScenarioError(f"source at {s.router}: count and payload must be >= 0")
            if not t.routers[s.router].marking_enabled:
                raise ScenarioError(f"source attach router {s.router!r} does not mark")
        if self.victim.router not in t.routers:
            raise ScenarioError(f"victim attach router {self.victim.router!r} does not exist")
        for s in self.sources:
            try:
                route(t, s.router, self.victim.router)
            except Unreachable as e:
                raise ScenarioError(str(e)) from None
        if self.bridge_budget < 0:
            raise ScenarioError("bridge_budget must be >= 0")
        return self.marking_config()

    def marking_config(self) -> MarkingConfig:
        boundary = self.boundary
        if boundary is None:
            boundary = frozenset({s.router for s in self.sources} | {self.victim.router})
        try:
            return MarkingConfig(self.profile, self.assignment, boundary, self.on_capacity)
        except ValueError as e:
            raise ScenarioError(str(e)) from None

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None) -> Scenario:
        base = base or Path(".")
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a mapping")
        try:
            topo = doc["topology"]
            topology = Topology.load(base / topo) if isinstance(topo, str) else Topology.from_dict(topo)
            seed = int(doc.get("seed", 0))
            asg = doc.get("assignment", "auto")
            if asg == "auto":
                assignment = assign_ids(topology, int(doc.get("assignment_seed", seed)))
            elif isinstance(asg, str):
                assignment = IdAssignment.load(base / asg)
            else:
                assignment = IdAssignment.from_dict(asg)
            pdoc = dict(doc.get("profile") or {})
            bit_width = pdoc.get("bit_width", "auto")
            if bit_width == "auto":
                bit_width = assignment.bit_width
            profile = CodecProfile(
                bit_width=int(bit_width),
                include_sender=bool(pdoc.get("include_sender", True)),
                include_receiver=bool(pdoc.get("include_receiver", True)),
                option_length=int(pdoc.get("option_length", codec.MAX_OPTION_LENGTH)),
            )
            if assignment.bit_width != profile.bit_width:
                assignment = assignment.with_bit_width(profile.bit_width)
            sources = [
                Source(str(s["router"]), ipaddress.IPv4Address(s["src"]), int(s.get("count", 1)),
                       int(s.get("payload", 64)),
                       ipaddress.IPv4Address(s["prev_hop"]) if s.get("prev_hop") else None)
                for s in doc["sources"]
            ]
            v = doc["victim"]
            victim = Victim(str(v["router"]), ipaddress.IPv4Address(v["ip"]))
            boundary = doc.get("boundary")
            return cls(
                topology=topology,
                assignment=assignment,
                profile=profile,
                sources=sources,
                victim=victim,
                routing=str(doc.get("routing", SHORTEST_PATH)),
                loss_rate=float(doc.get("loss_rate", 0.0)),
                seed=seed,
                on_capacity=OnCapacity(doc.get("on_capacity", OnCapacity.STOP_MARKING.value)),
                boundary=frozenset(map(str, boundary)) if boundary is not None else None,
                bridge_budget=int(doc.get("bridge_budget", 1)),
                name=str(doc.get("name", "")),
            )
        except KeyError as e:
            raise ScenarioError(f"missing field {e.args[0]!r}") from None
        except (TypeError, ValueError, OSError) as e:
            if isinstance(e, ScenarioError):
                raise
            raise ScenarioError(str(e)) from None

    @classmethod
    def load(cls, path) -> Scenario:
        path = Path(path)
        return cls.from_dict(load_yaml(path.read_text()), path.parent)


# --- run -------------------------------------------------------------------------

@dataclass
class TransitRecord:
    packet_id: int
    source: int
    claimed_src: str
    path: list[str]
    snapshots: list[str]
    captured: str | None
    delivered: bool
    truncated: bool
    dropped: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CaptureResult:
    packet_id: int
    path: ReconstructedPath | None
    error: str | None
    match: bool

    def to_dict(self) -> dict:
        return {
            "packet_id": self.packet_id,
            "match": self.match,
            "error": self.error,
            "path": self.path.to_dict() if self.path else None,
        }


@dataclass
class ReconstructionReport:
    captures: list[CaptureResult] = field(default_factory=list)
    attribution: Counter = field(default_factory=Counter)
    true_ingress: Counter = field(default_factory=Counter)
    packets: int = 0

    @property
    def delivered(self) -> int:
        return len(self.captures)

    @property
    def matched(self) -> int:
        return sum(c.match for c in self.captures)

    @property
    def all_matched(self) -> bool:
        return self.matched == self.delivered

    def first_mismatch(self) -> CaptureResult | None:
        return next((c for c in self.captures if not c.match), None)

    def to_dict(self) -> dict:
        return {
            "packets": self.packets,
            "delivered": self.delivered,
            "matched": self.matched,
            "attribution": dict(sorted(self.attribution.items())),
            "true_ingress": dict(sorted(self.true_ingress.items())),
            "captures": [c.to_dict() for c in self.captures],
        }


def packet_rng(seed: int, packet_id: int) -> random.Random:
    return random.Random(f"{seed}/{packet_id}")


def transit(s: Scenario, cfg: MarkingConfig, packet_id: int, source_index: int) -> tuple[TransitRecord, Packet]:
    """Send one packet from its source to the victim and record every hop."""
    src = s.sources[source_index]
    t = s.topology
    rng = packet_rng(s.seed, packet_id)
    lost = rng.random() < s.loss_rate
    path = route(t, src.router, s.victim.router, s.routing, rng)
    pkt = Packet(src.src, s.victim.ip, bytes([packet_id % 256]) * src.payload)
    pkt = ingress_process(pkt, path[0], src.prev_hop, cfg)
    snapshots = [codec.to_hex(pkt.option_bytes)]
    record = TransitRecord(packet_id, source_index, str(src.src), path, snapshots, None, False, False)
    for here, there in zip(path, path[1:]):
        if not t.routers[here].marking_enabled:
            continue
        try:
            marked = mark(pkt, here, egress_port(t, here, there), cfg)
        except PacketDropped:
            record.dropped = True
            record.truncated = True
            return record, pkt
        if marked.truncated and not pkt.truncated:
            record.truncated = True
        if marked.option_bytes != pkt.option_bytes:
            snapshots.append(codec.to_hex(marked.option_bytes))
        pkt = marked
    pkt = egress_process(pkt, path[-1], None, cfg)
    if not lost:
        record.delivered = True
        record.captured = codec.to_hex(pkt.option_bytes)
    return record, pkt


def reconstruct_capture(s: Scenario, option_hex: str) -> ReconstructedPath:
    """Strict backward walk; falls back to the exhaustive search when non-marking routers
    may have been bridged."""
    opt = codec.decode(codec.from_hex(option_hex), s.profile)
    t, a = s.topology, s.assignment
    cap = codec.capacity(s.profile)
    try:
        return reconstruct(opt, s.victim.router, t, a, capacity=cap)
    except NoMatch:
        if all(r.marking_enabled for r in t.routers.values()):
            raise
        found = reconstruct_all(opt, s.victim.router, t, a, s.bridge_budget, capacity=cap)
        if len(found) == 1:
            return found.pop()
        raise


def run(s: Scenario) -> tuple[list[TransitRecord], ReconstructionReport]:
    cfg = s.check()
    records = []
    report = ReconstructionReport()
    packet_id = 0
    for index, src in enumerate(s.sources):
        for _ in range(src.count):
            record, _pkt = transit(s, cfg, packet_id, index)
            records.append(record)
            packet_id += 1
    report.packets = len(records)
    for record in records:
        if not record.delivered:
            continue
        report.true_ingress[record.path[0]] += 1
        try:
            path = reconstruct_capture(s, record.captured)
        except (ReconstructionError, codec.OptionError) as e:
            report.captures.append(CaptureResult(record.packet_id, None, f"{type(e).__name__}: {e}", False))
            continue
        report.attribution[path.ingress] += 1
        match = list(path.routers) == record.path and path.status is Status.COMPLETE
        report.captures.append(CaptureResult(record.packet_id, path, None, match))
    log.info("scenario %s: %d packets, %d delivered, %d matched",
             s.name, report.packets, report.delivered, report.matched)
    return records, report


def write_outputs(records: list[TransitRecord], report: ReconstructionReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "transit.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


# --- overhead --------------------------------------------------------------------

@dataclass(frozen=True)
class OverheadRow:
    size: int
    added: int
    ratio: Fraction

    @property
    def percent(self) -> str:
        # exact half-up rounding to 4 decimals of ratio * 100
        n, d = self.ratio.numerator * 1_000_000, self.ratio.denominator
        q = (2 * n + d) // (2 * d)
        return f"{q // 10_000}.{q % 10_000:04d}"


def overhead_report(profile: CodecProfile, sizes) -> list[OverheadRow]:
    """Bytes the option adds to the header, relative to the original packet size."""
    rows = []
    for size in sizes:
        if size < 20:
            raise ValueError(f"packet size {size} is smaller than an IPv4 header")
        rows.append(OverheadRow(size, profile.padded_length, Fraction(profile.padded_length, size)))
    return rows
