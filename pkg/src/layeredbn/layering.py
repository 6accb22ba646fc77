"""Levels, layeredness, conversion to layered form, and arc admissibility.

A node's level is the length of the longest directed path reaching it from
any root; a network is layered when every arc spans exactly one level.
Arcs spanning more are subdivided with deterministic pass-through
(intermediate) nodes, which leaves the joint distribution over the original
variables untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import DisconnectedNetworkError
from .model import Network, NodeKind, identity_cpt

LevelAssignment = dict[str, int]


def compute_levels(net: Network, floors: Mapping[str, int] | None = None) -> LevelAssignment:
    """Longest-path level per node, in one topological pass.

    ``floors`` optionally raises individual nodes (used by incremental
    sessions for nodes placed before their parents are known); without it,
    roots sit at level 0 and every other node at 1 + max over parents.
    """
    levels: LevelAssignment = {}
    for node_id in net.topological_order():
        base = floors.get(node_id, 0) if floors else 0
        parent_levels = [levels[p] for p, c in net.arcs if c == node_id]
        levels[node_id] = max(base, 1 + max(parent_levels)) if parent_levels else base
    return levels


def is_layered(net: Network, levels: Mapping[str, int]) -> bool:
    """True iff every arc spans exactly one level."""
    return all(levels[c] == levels[p] + 1 for p, c in net.arcs)


@dataclass
class LayeredNetwork:
    """A network plus a level assignment under which it is layered.

    ``origin_map`` records, for every inserted intermediate node, the
    original arc (parent, child) it subdivides.
    """

    net: Network
    levels: LevelAssignment
    origin_map: dict[str, tuple[str, str]]


def intermediate_id(parent: str, child: str, k: int) -> str:
    """Name of the k-th (1-based) intermediate on original arc (parent, child)."""
    return f"{parent}#{child}#{k}"


def layerize(net: Network, floors: Mapping[str, int] | None = None) -> LayeredNetwork:
    """Subdivide every arc spanning g >= 2 levels with g-1 identity copies.

    The child's CPT is re-targeted to reference the last copy in place of
    the original parent.  Already-layered networks are returned unchanged.
    """
    levels = compute_levels(net, floors)
    gap_arcs = sorted((p, c) for p, c in net.arcs if levels[c] - levels[p] >= 2)
    if not gap_arcs:
        return LayeredNetwork(net=net, levels=levels, origin_map={})

    out = net.copy()
    out_levels = dict(levels)
    origin_map: dict[str, tuple[str, str]] = {}
    for parent, child in gap_arcs:
        gap = levels[child] - levels[parent]
        arity = net.arity(parent)
        chain = [intermediate_id(parent, child, k) for k in range(1, gap)]
        out.arcs.discard((parent, child))
        prev = parent
        for k, mid in enumerate(chain, start=1):
            out.add_variable(mid, arity, kind=NodeKind.INTERMEDIATE, source=parent)
            ident = identity_cpt(arity, child=mid, parent=prev)
            out.cpts[mid] = ident
            out.add_arc(prev, mid)
            out_levels[mid] = levels[parent] + k
            origin_map[mid] = (parent, child)
            prev = mid
        out.add_arc(prev, child)
        cpt = out.cpts[child]
        cpt.parents = tuple(prev if p == parent else p for p in cpt.parents)
    return LayeredNetwork(net=out, levels=out_levels, origin_map=origin_map)


class Verdict(Enum):
    ADMIT_AT_LEVEL = "admit_at_level"
    ADMIT_WITH_NEW_LEVEL = "admit_with_new_level"
    REJECT_BACK_ARC = "reject_back_arc"


@dataclass(frozen=True)
class ArcAdmissibility:
    verdict: Verdict
    level: int | None
    out_min: int | None
    in_max: int | None


def check_arc_addition(
    layered: LayeredNetwork | Mapping[str, int],
    incoming: Iterable[str],
    outgoing: Iterable[str],
) -> ArcAdmissibility:
    """Classify a proposed node addition by its arcs' endpoint levels.

    ``incoming`` are sources of arcs into the new node, ``outgoing`` are
    targets of arcs out of it.  With arcs in both directions, the node
    fits at in_max + 1 when out_min > in_max + 1; a gap of exactly one
    forces a fresh level spliced in at out_min; anything else is a back
    arc and is rejected.
    """
    levels = layered.levels if isinstance(layered, LayeredNetwork) else layered
    incoming = list(incoming)
    outgoing = list(outgoing)
    if not incoming and not outgoing:
        raise DisconnectedNetworkError(
            "<new node>", "a new node must be linked to the existing network"
        )
    for peer in [*incoming, *outgoing]:
        if peer not in levels:
            raise KeyError(f"unknown node {peer!r}")

    in_max = max((levels[p] for p in incoming), default=None)
    out_min = min((levels[c] for c in outgoing), default=None)

    if out_min is None:
        return ArcAdmissibility(Verdict.ADMIT_AT_LEVEL, in_max + 1, None, in_max)
    if in_max is None:
        return ArcAdmissibility(Verdict.ADMIT_AT_LEVEL, max(out_min - 1, 0), out_min, None)
    if out_min > in_max + 1:
        return ArcAdmissibility(Verdict.ADMIT_AT_LEVEL, in_max + 1, out_min, in_max)
    if out_min == in_max + 1:
        return ArcAdmissibility(Verdict.ADMIT_WITH_NEW_LEVEL, out_min, out_min, in_max)
    return ArcAdmissibility(Verdict.REJECT_BACK_ARC, None, out_min, in_max)
