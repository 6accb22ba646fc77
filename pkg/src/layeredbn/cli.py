"""Command-line front end.

Subcommands: validate, levels, layerize, build, query, script.  Output is
byte-deterministic for identical inputs; every failure exit (>= 2) emits
exactly one diagnostic line starting with "error:" on stderr.  Exit codes:
0 success, 2 malformed file, 3 semantic violation, 4 capacity guard.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .builder import build, cluster_partition
from .errors import (
    CapacityError,
    FormatError,
    LayeredBnError,
)
from .fileio import load_network, save_network
from .inference import belief, propagate
from .layering import compute_levels, layerize
from .model import validate_network
from .oracle import joint_enumerate
from .script import Session, parse_script


def _parse_evidence(net, text: str) -> dict[str, int]:
    evidence: dict[str, int] = {}
    if not text:
        return evidence
    for part in text.split(","):
        if "=" not in part:
            raise ValueError(f"bad evidence item {part!r}; expected node=state")
        node, label = part.split("=", 1)
        entry = net.nodes.get(node)
        if entry is None:
            raise KeyError(f"evidence on unknown node {node!r}")
        evidence[node] = entry.var.label_index(label)
    return evidence


def cmd_validate(args) -> int:
    net = load_network(args.file)
    report = validate_network(net)
    if report.ok:
        print("ok")
        return 0
    for violation in report.violations:
        print(violation)
    print(f"error: validation failed ({len(report.violations)} violations)", file=sys.stderr)
    return 3


def cmd_levels(args) -> int:
    net = load_network(args.file)
    levels = compute_levels(net)
    for node_id in sorted(levels, key=lambda n: (levels[n], n)):
        print(f"{node_id}\t{levels[node_id]}")
    return 0


def cmd_layerize(args) -> int:
    net = load_network(args.file)
    layered = layerize(net)
    save_network(layered.net, args.output)
    print(f"intermediates {len(layered.origin_map)}")
    return 0


def cmd_build(args) -> int:
    net = load_network(args.file)
    layered = layerize(net)
    rp = build(layered, start=args.start)
    clusters = sum(1 for rn in rp.rnodes.values() if len(rn.members) > 1)
    print(f"nodes {len(rp.rnodes)}")
    print(f"arcs {len(rp.arcs)}")
    print(f"clusters {clusters}")
    if args.emit_partition:
        for members in cluster_partition(rp):
            print("{" + ",".join(members) + "}")
    return 0


def cmd_query(args) -> int:
    net = load_network(args.file)
    layered = layerize(net)
    rp = build(layered)
    evidence = _parse_evidence(layered.net, args.evidence)
    state = propagate(rp, evidence)
    vec = belief(state, args.node)
    line = args.node + " " + " ".join(f"{x:.12f}" for x in vec)
    if state.is_provisional(args.node):
        line += " provisional"
    print(line)
    if args.oracle:
        result = joint_enumerate(layered.net, evidence)
        ovec = result.marginals[args.node]
        print("oracle " + args.node + " " + " ".join(f"{x:.12f}" for x in ovec))
        print(f"max_abs_diff {float(np.abs(vec - ovec).max()):.3e}")
    return 0


def cmd_script(args) -> int:
    commands = parse_script(args.file)
    session = Session()
    for cmd in commands:
        try:
            for line in session.apply(cmd):
                print(line)
        except (LayeredBnError, KeyError, IndexError, ValueError) as exc:
            message = exc.args[0] if exc.args else str(exc)
            print(f"error: line {cmd.line}: {message}", file=sys.stderr)
            return 3
    if args.against_batch:
        print(f"max_deviation {session.against_batch():.3e}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layeredbn",
        description="Layered polytree belief networks: construction and exact inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network file against all invariants")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("levels", help="print node levels, sorted by (level, id)")
    p.add_argument("file")
    p.set_defaults(func=cmd_levels)

    p = sub.add_parser("layerize", help="insert intermediates so every arc spans one level")
    p.add_argument("file")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_layerize)

    p = sub.add_parser("build", help="layerize and build the reduced polytree")
    p.add_argument("file")
    p.add_argument("--start", default=None)
    p.add_argument("--emit-partition", action="store_true")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="belief of one variable, optionally vs the oracle")
    p.add_argument("file")
    p.add_argument("--node", required=True)
    p.add_argument("--evidence", default="")
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("script", help="replay an incremental construction script")
    p.add_argument("file")
    p.add_argument("--against-batch", action="store_true")
    p.set_defaults(func=cmd_script)

    return parser


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FormatError as exc:
        name = getattr(args, "file", "<input>")
        print(f"error: {name}:{exc.line}:{exc.column}: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (LayeredBnError, KeyError, IndexError, ValueError) as exc:
        message = exc.args[0] if exc.args else str(exc)
        print(f"error: {message}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
