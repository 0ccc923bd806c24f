"""Port ID assignment, the incoming-ID validity rule, and reconstructibility checks."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .topology import PortRef, Topology, dump_yaml, load_yaml

MAX_ID = 255


class AssignmentError(ValueError):
    pass


class DisconnectedError(AssignmentError):
    pass


@dataclass(frozen=True)
class IdAssignment:
    ids: dict[PortRef, int]
    bit_width: int = 0

    def __post_init__(self):
        for ref, value in self.ids.items():
            if not isinstance(value, int) or value < 1:
                raise AssignmentError(f"port {ref}: ID must be >= 1, got {value!r}")
            if value > MAX_ID:
                raise AssignmentError(f"port {ref}: ID {value} exceeds {MAX_ID}")
        need = min_bit_width(self) if self.ids else 1
        if self.bit_width == 0:
            object.__setattr__(self, "bit_width", need)
        elif not 1 <= self.bit_width <= 8:
            raise AssignmentError(f"bit_width must be in 1..8, got {self.bit_width}")
        elif self.bit_width < need:
            raise AssignmentError(f"bit_width {self.bit_width} too small for max ID {max(self.ids.values())}")

    def __getitem__(self, ref: PortRef) -> int:
        return self.ids[ref]

    def get(self, ref: PortRef) -> int | None:
        return self.ids.get(ref)

    def with_bit_width(self, bit_width: int) -> IdAssignment:
        return IdAssignment(dict(self.ids), bit_width)

    def to_dict(self) -> dict:
        rows = [{"router": ref.router, "port": ref.port, "id": v} for ref, v in sorted(self.ids.items())]
        return {"bit_width": self.bit_width, "ids": rows}

    @classmethod
    def from_dict(cls, doc) -> IdAssignment:
        if not isinstance(doc, dict):
            raise AssignmentError("assignment document must be a mapping with 'bit_width' and 'ids'")
        ids = {}
        for i, row in enumerate(doc.get("ids") or []):
            try:
                ref = PortRef(str(row["router"]), int(row["port"]))
                value = int(row["id"])
            except (KeyError, TypeError, ValueError) as e:
                raise AssignmentError(f"ids[{i}]: bad entry ({e})") from None
            if ref in ids:
                raise AssignmentError(f"ids[{i}]: port {ref} assigned twice")
            ids[ref] = value
        return cls(ids, int(doc.get("bit_width") or 0))

    def dumps(self) -> str:
        return dump_yaml(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> IdAssignment:
        return cls.from_dict(load_yaml(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> IdAssignment:
        return cls.loads(Path(path).read_text())


class Conflict(NamedTuple):
    router: str
    incoming_id: int
    ports: list[PortRef]


@dataclass
class ValidationReport:
    conflicts: list[Conflict] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.conflicts


def min_bit_width(a: IdAssignment) -> int:
    if not a.ids:
        raise AssignmentError("empty assignment has no bit width")
    return max(a.ids.values()).bit_length()


def incoming_ids(t: Topology, a: IdAssignment | dict, rid: str) -> list[tuple[int, PortRef]]:
    """IDs on far-end ports facing ``rid``, from marking-enabled neighbours only."""
    if isinstance(a, IdAssignment):
        a = a.ids
    out = []
    for n in t.neighbors(rid):
        if not t.routers[n.router].marking_enabled:
            continue
        value = a.get(n.remote)
        if value is not None:
            out.append((value, n.remote))
    return out


def assign_ids(t: Topology, seed: int) -> IdAssignment:
    """Greedy frontier walk: seed-chosen start node uses port numbers, later nodes take the
    smallest ID unused locally and absent from the far end's incoming IDs."""
    marking = sorted(rid for rid, r in t.routers.items() if r.marking_enabled)
    if not marking:
        return IdAssignment({}, 1)
    if not t.is_connected(marking):
        raise DisconnectedError("marking-enabled routers are disconnected")

    ids: dict[PortRef, int] = {}
    first = random.Random(seed).choice(marking)
    for ref in t.linked_ports(first):
        if ref.port > MAX_ID:
            raise AssignmentError(f"port number {ref.port} on {first} exceeds {MAX_ID}")
        ids[ref] = ref.port
    selected = {first}
    is_marking = {rid: t.routers[rid].marking_enabled for rid in t.routers}
    frontier = {n.router for n in t.neighbors(first) if is_marking[n.router]} - selected

    while frontier:
        node = min(frontier)
        used: set[int] = set()
        for n in t.neighbors(node):
            taken = used | {v for v, _ in incoming_ids(t, ids, n.router)}
            value = 1
            while value in taken:
                value += 1
            if value > MAX_ID:
                raise AssignmentError(f"ID demand at {n.local} exceeds {MAX_ID}")
            ids[n.local] = value
            used.add(value)
        selected.add(node)
        frontier.discard(node)
        frontier.update(n.router for n in t.neighbors(node) if is_marking[n.router] and n.router not in selected)
    return IdAssignment(ids)


def validate(t: Topology, a: IdAssignment) -> ValidationReport:
    for rid, r in t.routers.items():
        if not r.marking_enabled:
            continue
        for ref in t.linked_ports(rid):
            if ref not in a.ids:
                raise AssignmentError(f"linked port {ref} of marking router has no ID")
    report = ValidationReport()
    for rid in t.routers:
        seen: dict[int, list[PortRef]] = {}
        for value, ref in incoming_ids(t, a, rid):
            seen.setdefault(value, []).append(ref)
        for value in sorted(seen):
            if len(seen[value]) > 1:
                report.conflicts.append(Conflict(rid, value, seen[value]))
    return report


def emitted_ids(t: Topology, a: IdAssignment, hops: list[tuple[str, PortRef]]) -> tuple[int, ...]:
    """IDs a packet collects crossing ``hops`` = [(router, egress port), ...]."""
    return tuple(a[port] for rid, port in hops if t.routers[rid].marking_enabled)


@dataclass
class ReconstructibilityResult:
    ok: bool
    counterexample: tuple[list[str], list[str]] | None = None
    ids: tuple[int, ...] | None = None

    def __bool__(self):
        return self.ok


def check_reconstructible(t: Topology, a: IdAssignment, max_len: int) -> ReconstructibilityResult:
    """Enumerate every simple path of up to ``max_len`` links that starts at a marking router and
    verify no two paths to the same end router emit the same ID sequence.

    Paths are told apart by the links they use, so parallel links count as distinct paths.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    seen: dict[tuple[str, tuple[int, ...]], tuple[list[str], tuple[PortRef, ...]]] = {}
    starts = sorted(rid for rid, r in t.routers.items() if r.marking_enabled)

    def walk(routers: list[str], ports: tuple[PortRef, ...], emitted: tuple[int, ...]):
        key = (routers[-1], emitted)
        prior = seen.get(key)
        if prior is None:
            seen[key] = (list(routers), ports)
        elif prior[1] != ports:
            return ReconstructibilityResult(False, (prior[0], list(routers)), emitted)
        if len(routers) > max_len:
            return None
        cur = routers[-1]
        mark = t.routers[cur].marking_enabled
        for n in t.neighbors(cur):
            if n.router in routers:
                continue
            routers.append(n.router)
            found = walk(routers, ports + (n.local,), emitted + (a[n.local],) if mark else emitted)
            routers.pop()
            if found is not None:
                return found
        return None

    for s in starts:
        found = walk([s], (), ())
        if found is not None:
            return found
    return ReconstructibilityResult(True)
