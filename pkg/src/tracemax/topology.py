"""Router network model: routers, numbered physical ports and point-to-point links.

Topologies are built once (``add_router`` / ``add_link``) and then treated as
read-only by assignment, marking and reconstruction.
"""
from __future__ import annotations

import ipaddress
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import yaml

try:
    from yaml import CSafeDumper as _Dumper, CSafeLoader as _Loader
except ImportError:  # pragma: no cover - pure-Python fallback
    from yaml import SafeDumper as _Dumper, SafeLoader as _Loader


class TopologyError(ValueError):
    """Raised when a topology invariant would be violated."""


class DuplicateRouterError(TopologyError):
    pass


class PortOccupiedError(TopologyError):
    pass


@dataclass(frozen=True)
class Router:
    id: str
    address: ipaddress.IPv4Address
    port_count: int
    marking_enabled: bool = True

    def __post_init__(self):
        if not isinstance(self.id, str):
            object.__setattr__(self, "id", str(self.id))
        if not isinstance(self.address, ipaddress.IPv4Address):
            object.__setattr__(self, "address", ipaddress.IPv4Address(self.address))
        if not isinstance(self.port_count, int) or self.port_count < 1:
            raise TopologyError(f"router {self.id}: port_count must be >= 1, got {self.port_count!r}")


class PortRef(NamedTuple):
    router: str
    port: int

    def __str__(self):
        return f"{self.router}:{self.port}"

    @classmethod
    def parse(cls, text) -> PortRef:
        router, sep, port = str(text).rpartition(":")
        if not sep or not router:
            raise ValueError(f"expected 'router:port', got {text!r}")
        return cls(router, int(port))


class Link(NamedTuple):
    a: PortRef
    b: PortRef

    def far_end(self, router: str) -> PortRef:
        return self.b if self.a.router == router else self.a

    def near_end(self, router: str) -> PortRef:
        return self.a if self.a.router == router else self.b


class Neighbor(NamedTuple):
    router: str
    local: PortRef
    remote: PortRef


class Topology:
    def __init__(self, routers: Iterable[Router] = (), links: Iterable[tuple[PortRef, PortRef]] = ()):
        self.routers: dict[str, Router] = {}
        self._by_address: dict[ipaddress.IPv4Address, str] = {}
        self._port_links: dict[PortRef, Link] = {}
        self.links: list[Link] = []
        self._neighbor_cache: dict[str, list[Neighbor]] = {}
        for r in routers:
            self.add_router(r)
        for a, b in links:
            self.add_link(a, b)

    def add_router(self, r: Router) -> Topology:
        if r.id in self.routers:
            raise DuplicateRouterError(f"duplicate router id {r.id!r}")
        if r.address in self._by_address:
            raise DuplicateRouterError(
                f"duplicate address {r.address} (routers {self._by_address[r.address]!r} and {r.id!r})")
        self.routers[r.id] = r
        self._by_address[r.address] = r.id
        self._neighbor_cache.clear()
        return self

    def _check_port(self, ref: PortRef):
        r = self.routers.get(ref.router)
        if r is None:
            raise TopologyError(f"unknown router {ref.router!r} in port {ref}")
        if not 1 <= ref.port <= r.port_count:
            raise TopologyError(f"port {ref} out of range (router {r.id} has {r.port_count} ports)")
        if ref in self._port_links:
            raise PortOccupiedError(f"port {ref} already carries a link")

    def add_link(self, a: PortRef, b: PortRef) -> Topology:
        a, b = PortRef(str(a[0]), int(a[1])), PortRef(str(b[0]), int(b[1]))
        if a.router == b.router:
            raise TopologyError(f"self-loop on router {a.router!r} ({a} - {b})")
        self._check_port(a)
        self._check_port(b)
        link = Link(a, b)
        self.links.append(link)
        self._port_links[a] = link
        self._port_links[b] = link
        self._neighbor_cache.clear()
        return self

    def router(self, rid: str) -> Router:
        try:
            return self.routers[rid]
        except KeyError:
            raise TopologyError(f"unknown router {rid!r}") from None

    def router_by_address(self, address) -> str | None:
        return self._by_address.get(ipaddress.IPv4Address(address))

    def link_at(self, ref: PortRef) -> Link | None:
        return self._port_links.get(ref)

    def neighbors(self, rid: str) -> list[Neighbor]:
        """Links incident to ``rid`` ordered by local port index."""
        cached = self._neighbor_cache.get(rid)
        if cached is not None:
            return list(cached)
        r = self.router(rid)
        out = []
        for port in range(1, r.port_count + 1):
            link = self._port_links.get(PortRef(rid, port))
            if link is not None:
                remote = link.far_end(rid)
                out.append(Neighbor(remote.router, PortRef(rid, port), remote))
        self._neighbor_cache[rid] = out
        return list(out)

    def linked_ports(self, rid: str) -> list[PortRef]:
        return [n.local for n in self.neighbors(rid)]

    def degree(self, rid: str) -> int:
        return len(self.neighbors(rid))

    def is_connected(self, among: Iterable[str] | None = None) -> bool:
        """Connectivity of the subgraph induced by ``among`` (default: all routers)."""
        nodes = set(self.routers if among is None else among)
        if not nodes:
            return True
        start = min(nodes)
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for n in self.neighbors(cur):
                if n.router in nodes and n.router not in seen:
                    seen.add(n.router)
                    stack.append(n.router)
        return seen == nodes

    def check(self):
        """Re-assert every structural invariant; cheap enough to call after mutations."""
        used = set()
        for link in self.links:
            if link.a.router == link.b.router:
                raise TopologyError(f"self-loop {link}")
            for end in link:
                r = self.router(end.router)
                if not 1 <= end.port <= r.port_count:
                    raise TopologyError(f"port {end} out of range")
                if end in used:
                    raise PortOccupiedError(f"port {end} used twice")
                used.add(end)
        if len(self._by_address) != len(self.routers):
            raise TopologyError("address index out of sync")

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return self.routers == other.routers and _link_set(self) == _link_set(other)

    def __repr__(self):
        return f"Topology({len(self.routers)} routers, {len(self.links)} links)"

    # --- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "routers": [
                {"id": r.id, "address": str(r.address), "ports": r.port_count, "marking": r.marking_enabled}
                for r in self.routers.values()
            ],
            "links": [{"a": str(l.a), "b": str(l.b)} for l in self.links],
        }

    @classmethod
    def from_dict(cls, doc) -> Topology:
        if not isinstance(doc, dict):
            raise TopologyError("topology document must be a mapping with 'routers' and 'links'")
        t = cls()
        for i, entry in enumerate(doc.get("routers") or []):
            where = f"routers[{i}]"
            try:
                r = Router(
                    id=str(entry["id"]),
                    address=ipaddress.IPv4Address(str(entry["address"])),
                    port_count=int(entry["ports"]),
                    marking_enabled=bool(entry.get("marking", True)),
                )
            except KeyError as e:
                raise TopologyError(f"{where}: missing field {e.args[0]!r}") from None
            except (TypeError, ValueError) as e:
                raise TopologyError(f"{where}: {e}") from None
            try:
                t.add_router(r)
            except TopologyError as e:
                raise type(e)(f"{where}: {e}") from None
        for i, entry in enumerate(doc.get("links") or []):
            where = f"links[{i}]"
            try:
                a, b = PortRef.parse(entry["a"]), PortRef.parse(entry["b"])
            except KeyError as e:
                raise TopologyError(f"{where}: missing field {e.args[0]!r}") from None
            except (TypeError, ValueError) as e:
                raise TopologyError(f"{where}: {e}") from None
            try:
                t.add_link(a, b)
            except TopologyError as e:
                raise type(e)(f"{where}: {e}") from None
        return t

    def dumps(self) -> str:
        return dump_yaml(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> Topology:
        return cls.from_dict(load_yaml(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> Topology:
        return cls.loads(Path(path).read_text())


def _link_set(t: Topology):
    return {frozenset(l) for l in t.links}


def dump_yaml(doc) -> str:
    return yaml.dump(doc, Dumper=_Dumper, sort_keys=False)


def load_yaml(text: str):
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise TopologyError(f"parse error{where}: {getattr(e, 'problem', e)}") from None


# --- builders ------------------------------------------------------------------

def _addr(i: int) -> ipaddress.IPv4Address:
    return ipaddress.IPv4Address("10.0.0.0") + i + 1


def chain(n: int, prefix: str = "R") -> Topology:
    """Routers R01..Rn, each linked to the next: port 2 forward, port 1 backward."""
    width = len(str(n))
    ids = [f"{prefix}{i + 1:0{width}d}" for i in range(n)]
    t = Topology(Router(rid, _addr(i), 2) for i, rid in enumerate(ids))
    for left, right in zip(ids, ids[1:]):
        t.add_link(PortRef(left, 2), PortRef(right, 1))
    return t


def star(k: int) -> Topology:
    t = Topology([Router("C", _addr(0), k)])
    for i in range(1, k + 1):
        t.add_router(Router(f"L{i}", _addr(i), 1))
        t.add_link(PortRef("C", i), PortRef(f"L{i}", 1))
    return t


def random_connected(n: int, extra_links: int, rng: random.Random, parallel: bool = False) -> Topology:
    """Random spanning tree plus ``extra_links`` further links; every port carries a link."""
    width = len(str(n))
    ids = [f"R{i:0{width}d}" for i in range(n)]
    pairs = []
    for i in range(1, n):
        pairs.append((ids[rng.randrange(i)], ids[i]))
    if n > 1:
        for _ in range(extra_links):
            a, b = rng.sample(ids, 2)
            if not parallel and ((a, b) in pairs or (b, a) in pairs):
                continue
            pairs.append((a, b))
    degree = {rid: 0 for rid in ids}
    for a, b in pairs:
        degree[a] += 1
        degree[b] += 1
    t = Topology(Router(rid, _addr(i), max(1, degree[rid])) for i, rid in enumerate(ids))
    next_port = {rid: 1 for rid in ids}
    for a, b in pairs:
        t.add_link(PortRef(a, next_port[a]), PortRef(b, next_port[b]))
        next_port[a] += 1
        next_port[b] += 1
    return t
