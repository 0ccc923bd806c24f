"""``tracemax`` command line.

Exit codes:
    0  success
    1  verification failed (invalid assignment, mismatched or failed reconstruction)
    2  usage or input-file error
    3  malformed option bytes
    4  source-route option refused
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from importlib import resources
from pathlib import Path

import yaml

from . import codec, simulator
from . import topology as topo
from .assignment import AssignmentError, IdAssignment, assign_ids, check_reconstructible, validate
from .codec import CodecProfile, MalformedOption, SourceRouteRefused, TraceOption
from .reconstruction import ReconstructionError, reconstruct, reconstruct_all
from .topology import Topology, TopologyError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_MALFORMED = 3
EXIT_SOURCE_ROUTE = 4

BUNDLED = "bundled:"


class UsageError(Exception):
    pass


def resolve(path: str) -> Path:
    """Plain paths, or ``bundled:<name>`` for the example files shipped with the package."""
    if path.startswith(BUNDLED):
        return Path(str(resources.files("tracemax") / "data" / path[len(BUNDLED):]))
    return Path(path)


def emit(args, doc) -> None:
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True, default=str))
    else:
        print(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None).rstrip())


def profile_from(args) -> CodecProfile:
    try:
        return CodecProfile(args.bit_width, args.with_sender, args.with_receiver, args.option_length).check_usable()
    except ValueError as e:
        raise UsageError(f"bad profile flags: {e}") from None


def load_topology(path) -> Topology:
    return Topology.load(resolve(path))


def load_assignment(path) -> IdAssignment:
    return IdAssignment.load(resolve(path))


def read_hex(args) -> bytes:
    text = resolve(args.file).read_text() if args.file else " ".join(args.hex)
    try:
        return codec.from_hex(text)
    except ValueError as e:
        raise UsageError(f"bad hex input: {e}") from None


def option_doc(o: TraceOption) -> dict:
    return {
        "option_type": f"0x{o.option_type:02x}",
        "option_length": o.option_length,
        "hop_count": o.hop_count,
        "sender": str(o.sender) if o.sender else None,
        "ids": list(o.ids),
        "receiver": str(o.receiver) if o.receiver else None,
    }


# --- subcommands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.kind == "chain":
        t = topo.chain(args.n)
    elif args.kind == "star":
        t = topo.star(args.n)
    else:
        t = topo.random_connected(args.n, args.extra, random.Random(args.seed))
    if args.out:
        t.save(args.out)
    else:
        print(t.dumps().rstrip())
    return EXIT_OK


def cmd_assign(args) -> int:
    t = load_topology(args.topology)
    try:
        a = assign_ids(t, args.seed)
    except AssignmentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    if args.out:
        a.save(args.out)
    report = validate(t, a)
    emit(args, {"bit_width": a.bit_width, "ports": len(a.ids), "valid": report.valid, "out": args.out})
    return EXIT_OK if report.valid else EXIT_FAILED


def cmd_validate(args) -> int:
    t = load_topology(args.topology)
    a = load_assignment(args.assignment)
    report = validate(t, a)
    doc = {
        "valid": report.valid,
        "bit_width": a.bit_width,
        "conflicts": [
            {"router": c.router, "incoming_id": c.incoming_id, "ports": [str(p) for p in c.ports]}
            for c in report.conflicts
        ],
    }
    ok = report.valid
    if args.max_len:
        res = check_reconstructible(t, a, args.max_len)
        doc["reconstructible"] = res.ok
        if not res.ok:
            doc["counterexample"] = {"paths": [list(p) for p in res.counterexample], "ids": list(res.ids)}
        ok = ok or res.ok if args.allow_bridged else ok and res.ok
    emit(args, doc)
    return EXIT_OK if ok else EXIT_FAILED


def cmd_encode(args) -> int:
    p = profile_from(args)
    try:
        ids = tuple(int(x) for x in args.ids.split(",") if x.strip()) if args.ids else ()
        o = TraceOption(ids, args.sender, args.receiver, p.option_length)
        print(codec.to_hex(codec.encode(o, p)))
    except ValueError as e:
        raise UsageError(str(e)) from None
    return EXIT_OK


def cmd_decode(args) -> int:
    p = profile_from(args)
    o = codec.decode(read_hex(args), p)
    emit(args, option_doc(o))
    return EXIT_OK


def cmd_route(args) -> int:
    t = load_topology(args.topology)
    policy = simulator.ECMP_RANDOM if args.ecmp else simulator.SHORTEST_PATH
    try:
        path = simulator.route(t, args.src, args.dst, policy, random.Random(args.seed))
    except simulator.Unreachable as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED
    emit(args, {"path": path, "hops": len(path) - 1})
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    t = load_topology(args.topology)
    a = load_assignment(args.assignment)
    p = profile_from(args)
    o = codec.decode(read_hex(args), p)
    if args.exhaustive:
        found = sorted(reconstruct_all(o, args.receiver, t, a, args.bridge_budget), key=lambda r: r.routers)
        emit(args, {"paths": [r.to_dict() for r in found]})
        return EXIT_OK if len(found) == 1 else EXIT_FAILED
    try:
        path = reconstruct(o, args.receiver, t, a, capacity=codec.capacity(p))
    except ReconstructionError as e:
        emit(args, {"error": type(e).__name__, "detail": str(e)})
        return EXIT_FAILED
    emit(args, path.to_dict())
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = simulator.Scenario.load(resolve(args.scenario))
    records, report = simulator.run(s)
    if args.out:
        simulator.write_outputs(records, report, args.out)
    hops = sorted({len(r.path) - 1 for r in records})
    summary = {
        "scenario": s.name,
        "packets": report.packets,
        "delivered": report.delivered,
        "matched": report.matched,
        "traced_hops": hops[0] if len(hops) == 1 else hops,
        "attribution": dict(sorted(report.attribution.items())),
    }
    bad = report.first_mismatch()
    if bad is not None:
        summary["first_mismatch"] = bad.to_dict()
    emit(args, summary)
    return EXIT_OK if report.all_matched else EXIT_FAILED


def cmd_overhead(args) -> int:
    p = profile_from(args)
    try:
        rows = simulator.overhead_report(p, args.sizes)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.json:
        emit(args, [{"size": r.size, "added": r.added, "percent": r.percent} for r in rows])
    else:
        for r in rows:
            print(f"{r.size:>6} {r.added:>4} {r.percent}%")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def _add_profile(sp):
    g = sp.add_argument_group("codec profile")
    g.add_argument("--bit-width", type=int, default=8)
    g.add_argument("--option-length", type=int, default=codec.MAX_OPTION_LENGTH)
    g.add_argument("--with-sender", dest="with_sender", action="store_true", default=True)
    g.add_argument("--no-sender", dest="with_sender", action="store_false")
    g.add_argument("--with-receiver", dest="with_receiver", action="store_true", default=True)
    g.add_argument("--no-receiver", dest="with_receiver", action="store_false")


def _add_hex_input(sp):
    sp.add_argument("hex", nargs="*", help="option octets as hex, e.g. '56 28 00 ...'")
    sp.add_argument("--file", help="read hex from a file instead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracemax", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--json", action="store_true", help="machine-readable JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("generate", help="write a chain, star or random topology")
    sp.add_argument("kind", choices=["chain", "star", "random"])
    sp.add_argument("n", type=int)
    sp.add_argument("--extra", type=int, default=0, help="extra links for random topologies")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("assign", help="run the automatic port-ID assignment")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_assign)

    sp = sub.add_parser("validate", help="check an assignment for incoming-ID conflicts")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--assignment", required=True)
    sp.add_argument("--max-len", type=int, default=0, help="also run the exhaustive path check")
    sp.add_argument("--allow-bridged", action="store_true",
                    help="accept conflicts if the exhaustive check still proves uniqueness")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("encode", help="encode an option to hex")
    sp.add_argument("--ids", default="", help="comma separated IDs")
    sp.add_argument("--sender")
    sp.add_argument("--receiver")
    _add_profile(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decode option hex")
    _add_hex_input(sp)
    _add_profile(sp)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("route", help="compute a router path")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--src", required=True)
    sp.add_argument("--dst", required=True)
    sp.add_argument("--ecmp", action="store_true", help="random choice among equal-cost paths")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_route)

    sp = sub.add_parser("simulate", help="run a scenario end to end")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--out", help="directory for transit.jsonl and report.json")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reconstruct", help="recover the path of one captured option")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--assignment", required=True)
    sp.add_argument("--receiver", help="capturing router (default: look up the receiver slot)")
    sp.add_argument("--exhaustive", action="store_true", help="list every consistent path")
    sp.add_argument("--bridge-budget", type=int, default=1)
    _add_hex_input(sp)
    _add_profile(sp)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("overhead", help="header overhead per packet size")
    sp.add_argument("--sizes", type=int, nargs="+", default=[1500])
    _add_profile(sp)
    sp.set_defaults(func=cmd_overhead)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SourceRouteRefused as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_SOURCE_ROUTE
    except (MalformedOption, codec.OptionError) as e:
        print(f"malformed: {e}", file=sys.stderr)
        return EXIT_MALFORMED
    except (UsageError, TopologyError, AssignmentError, simulator.ScenarioError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
