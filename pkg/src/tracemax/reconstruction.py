"""Backward path reconstruction from a captured ID sequence."""
from __future__ import annotations

import enum
import ipaddress
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .assignment import IdAssignment
from .codec import TraceOption
from .topology import PortRef, Topology


class Status(str, enum.Enum):
    COMPLETE = "complete"
    PARTIAL = "partial"
    TRUNCATED = "truncated"


class ReconstructionError(Exception):
    pass


class NoMatch(ReconstructionError):
    def __init__(self, router: str, id_: int, consumed: int):
        super().__init__(f"no neighbour of {router} faces it with ID {id_} (after {consumed} steps)")
        self.router = router
        self.id = id_
        self.consumed = consumed


class Ambiguous(ReconstructionError):
    def __init__(self, router: str, id_: int, candidates: list[PortRef]):
        names = ", ".join(str(c) for c in candidates)
        super().__init__(f"ID {id_} at {router} matches several neighbours: {names}")
        self.router = router
        self.id = id_
        self.candidates = candidates


@dataclass(frozen=True)
class ReconstructedPath:
    routers: tuple[str, ...]
    addresses: tuple[ipaddress.IPv4Address, ...]
    status: Status = Status.COMPLETE
    external_sender: ipaddress.IPv4Address | None = None
    external_receiver: ipaddress.IPv4Address | None = None

    @property
    def ingress(self) -> str:
        return self.routers[0]

    def to_dict(self) -> dict:
        return {
            "routers": list(self.routers),
            "addresses": [str(a) for a in self.addresses],
            "status": self.status.value,
            "external_sender": str(self.external_sender) if self.external_sender else None,
            "external_receiver": str(self.external_receiver) if self.external_receiver else None,
        }


def _receiver_of(opt: TraceOption, receiver: str | None, t: Topology) -> str:
    if receiver is not None:
        t.router(receiver)
        return receiver
    if opt.receiver is None:
        raise ValueError("receiver router unknown and option carries no receiver address")
    rid = t.router_by_address(opt.receiver)
    if rid is None:
        raise ValueError(f"receiver address {opt.receiver} is not a router of this topology")
    return rid


def _finish(routers, opt, t, capacity, boundary) -> ReconstructedPath:
    status = Status.COMPLETE
    if capacity is not None and opt.hop_count >= capacity:
        status = Status.TRUNCATED
    elif boundary is not None and routers[0] not in boundary:
        status = Status.PARTIAL
    return ReconstructedPath(
        tuple(routers),
        tuple(t.routers[r].address for r in routers),
        status,
        opt.sender,
        opt.receiver,
    )


def reconstruct(opt: TraceOption, receiver: str | None, t: Topology, a: IdAssignment, *,
                capacity: int | None = None, boundary: Iterable[str] | None = None) -> ReconstructedPath:
    """Walk backwards from ``receiver``, consuming one ID per step.

    ``capacity`` marks a full option as truncated; ``boundary`` marks a trace whose
    first router is not an edge router as partial.
    """
    cur = _receiver_of(opt, receiver, t)
    path = [cur]
    for step, x in enumerate(reversed(opt.ids)):
        matches = [
            n.remote for n in t.neighbors(cur)
            if t.routers[n.router].marking_enabled and a.get(n.remote) == x
        ]
        if not matches:
            raise NoMatch(cur, x, step)
        if len(matches) > 1:
            raise Ambiguous(cur, x, matches)
        cur = matches[0].router
        path.append(cur)
    path.reverse()
    return _finish(path, opt, t, capacity, None if boundary is None else set(boundary))


def reconstruct_all(opt: TraceOption, receiver: str | None, t: Topology, a: IdAssignment,
                    bridge_budget: int = 1, *, capacity: int | None = None,
                    boundary: Iterable[str] | None = None) -> set[ReconstructedPath]:
    """Every simple path consistent with the ID sequence, allowing up to ``bridge_budget``
    consecutive non-marking routers between marked hops."""
    start = _receiver_of(opt, receiver, t)
    boundary = None if boundary is None else set(boundary)
    results: set[ReconstructedPath] = set()
    ids = opt.ids
    # a path of only bridges and no marks cannot be told apart from the bare receiver
    if not ids:
        return {_finish([start], opt, t, capacity, boundary)}

    def search(path: list[str], remaining: int, bridges: int):
        cur = path[-1]
        if remaining == 0:
            if bridges == 0:
                results.add(_finish(path[::-1], opt, t, capacity, boundary))
            return
        x = ids[remaining - 1]
        for n in t.neighbors(cur):
            if n.router in path:
                continue
            if t.routers[n.router].marking_enabled:
                if a.get(n.remote) == x:
                    path.append(n.router)
                    search(path, remaining - 1, 0)
                    path.pop()
            elif bridges < bridge_budget:
                path.append(n.router)
                search(path, remaining, bridges + 1)
                path.pop()

    search([start], len(ids), 0)
    return results


@dataclass
class Attribution:
    counts: Counter = field(default_factory=Counter)
    errors: list[tuple[int, ReconstructionError]] = field(default_factory=list)
    paths: list[ReconstructedPath | None] = field(default_factory=list)

    def error_tally(self) -> Counter:
        return Counter(type(e).__name__ for _, e in self.errors)


def attribute_sources(captures: Iterable[tuple[TraceOption, str | None]], t: Topology,
                      a: IdAssignment, **kwargs) -> Attribution:
    """Count captured packets per ingress router; claimed source addresses play no part."""
    out = Attribution()
    for i, (opt, receiver) in enumerate(captures):
        try:
            path = reconstruct(opt, receiver, t, a, **kwargs)
        except ReconstructionError as e:
            out.errors.append((i, e))
            out.paths.append(None)
            continue
        out.counts[path.ingress] += 1
        out.paths.append(path)
    return out
