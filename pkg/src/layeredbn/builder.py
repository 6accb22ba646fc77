"""Incremental construction of the reduced polytree.

The reduced polytree is a singly connected view over a layered network in
which some same-level nodes have been fused into cluster nodes.  Growth is
a depth-first traversal: every node is inserted with one pendant arc, each
further arc to an already-present node closes exactly one undirected
cycle, and each cycle is eliminated immediately by repeatedly fusing the
two cycle-parents of the lowest-id sink until the cycle collapses.

Cluster bookkeeping stays at original-variable granularity: every node
keeps its own conditional table over original parents, and reduced-level
link matrices (over possibly-clustered parents) are assembled lazily by
multiplying member tables and regrouping axes.  Fusions therefore never
rewrite probability tables, only membership.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BackArcError,
    DisconnectedNetworkError,
    LayeredBnError,
    StructuralError,
)
from .layering import LayeredNetwork, Verdict, check_arc_addition, intermediate_id
from .model import PROB_TOL, Cpt, Network, NetworkNode, NodeKind, Variable


class RelevelRequired(LayeredBnError):
    """The addition is admissible only after global re-levelization.

    Raised by the builder for placements it cannot patch locally (a fresh
    level must be spliced in); sessions catch this and rebuild from the
    raw network.
    """


def cluster_node_id(members: Iterable[str]) -> str:
    return "(" + ",".join(sorted(members)) + ")"


@dataclass
class MemberCpt:
    """Conditional table of one original-granularity node.

    ``parents`` are original/intermediate ids in declared order; ``table``
    has axes ``(*parent_arities, child_arity)``.
    """

    child: str
    parents: tuple[str, ...]
    table: np.ndarray


@dataclass
class ReducedNode:
    id: str
    kind: NodeKind
    members: tuple[str, ...]
    level: int


@dataclass
class Cycle:
    """The unique undirected cycle closed by one arc insertion.

    ``nodes`` lists the cycle ring in order; ``arcs[i]`` is the oriented
    arc between ``nodes[i]`` and ``nodes[(i+1) % len]``.
    """

    nodes: tuple[str, ...]
    arcs: tuple[tuple[str, str], ...]

    def __len__(self) -> int:
        return len(self.nodes)


class ReducedPolytree:
    """Mutable reduced-polytree state (single writer)."""

    def __init__(self):
        self.variables: dict[str, Variable] = {}
        self.kinds: dict[str, NodeKind] = {}
        self.sources: dict[str, str] = {}
        self.member_cpts: dict[str, MemberCpt | None] = {}
        self.membership: dict[str, str] = {}
        self.node_levels: dict[str, int] = {}
        self.rnodes: dict[str, ReducedNode] = {}
        self.arcs: set[tuple[str, str]] = set()
        self.processed_arcs: set[tuple[str, str]] = set()
        self.pseudo_roots: set[str] = set()
        self.op_counter: int = 0
        self.total_eliminations: int = 0
        self.last_add_node: str | None = None
        self.last_add_eliminations: int = 0
        self.last_add_cycle_sizes: list[int] = []
        self.last_fusions: list[tuple[str, str, str]] = []
        self.last_change: set[str] = set()
        self._version: int = 0
        self._tensor_cache: dict[str, tuple[int, tuple[str, ...], np.ndarray]] = {}
        self._net_cache: tuple[int, Network] | None = None

    # -- bookkeeping -------------------------------------------------------

    def op(self, n: int = 1) -> None:
        self.op_counter += n

    def bump(self) -> None:
        self._version += 1

    @property
    def levels(self) -> dict[str, int]:
        return {rid: rn.level for rid, rn in self.rnodes.items()}

    def arity(self, node_id: str) -> int:
        return self.variables[node_id].arity

    def reduced_arity(self, rid: str) -> int:
        rn = self.rnodes[rid]
        return int(np.prod([self.arity(m) for m in rn.members], dtype=np.int64))

    def parents_of(self, rid: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, c in self.arcs if c == rid))

    def children_of(self, rid: str) -> tuple[str, ...]:
        return tuple(sorted(c for p, c in self.arcs if p == rid))

    def neighbors(self, rid: str) -> tuple[str, ...]:
        out = {c for p, c in self.arcs if p == rid}
        out |= {p for p, c in self.arcs if c == rid}
        return tuple(sorted(out))

    def is_polytree(self) -> bool:
        """Arc count = node count - 1 and one undirected component."""
        if not self.rnodes:
            return True
        if len(self.arcs) != len(self.rnodes) - 1:
            return False
        adj: dict[str, list[str]] = {rid: [] for rid in self.rnodes}
        for p, c in self.arcs:
            adj[p].append(c)
            adj[c].append(p)
        seen: set[str] = set()
        stack = [min(self.rnodes)]
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(adj[node])
        return len(seen) == len(self.rnodes)

    # -- link-matrix assembly ------------------------------------------------

    def _member_model_cpt(self, member: str) -> Cpt:
        mc = self.member_cpts[member]
        if mc is None:
            arity = self.arity(member)
            return Cpt(member, (), np.full(arity, 1.0 / arity))
        return Cpt(mc.child, mc.parents, mc.table.reshape(-1))

    def reduced_cpt(self, rid: str) -> Cpt:
        """Flat model Cpt of a reduced node over its reduced parents."""
        rn = self.rnodes[rid]
        parents = self.parents_of(rid)
        arities = {m: self.arity(m) for m in rn.members}
        parent_members = {}
        for p in parents:
            pn = self.rnodes[p]
            parent_members[p] = pn.members
            arities[p] = self.reduced_arity(p)
            for m in pn.members:
                arities[m] = self.arity(m)
        cpt = cluster_cpt(
            rn.members,
            {m: self._member_model_cpt(m) for m in rn.members},
            parents,
            arities,
            parent_members=parent_members,
        )
        return Cpt(rid, parents, cpt.table)

    def conditional(self, rid: str) -> tuple[tuple[str, ...], np.ndarray]:
        """Reduced parents plus tensor shaped ``(*parent_arities, arity)``."""
        cached = self._tensor_cache.get(rid)
        if cached is not None and cached[0] == self._version:
            return cached[1], cached[2]
        parents = self.parents_of(rid)
        cpt = self.reduced_cpt(rid)
        shape = [self.reduced_arity(p) for p in parents] + [self.reduced_arity(rid)]
        tensor = cpt.table.reshape(shape)
        self._tensor_cache[rid] = (self._version, parents, tensor)
        return parents, tensor

    @property
    def net(self) -> Network:
        """The reduced network materialized as a validatable Network."""
        if self._net_cache is not None and self._net_cache[0] == self._version:
            return self._net_cache[1]
        net = Network()
        for rid in sorted(self.rnodes):
            rn = self.rnodes[rid]
            if len(rn.members) == 1:
                var = self.variables[rn.members[0]]
                net.nodes[rid] = NetworkNode(
                    var, self.kinds[rn.members[0]], self.sources.get(rn.members[0]), ()
                )
            else:
                net.nodes[rid] = NetworkNode(
                    Variable(rid, self.reduced_arity(rid)),
                    NodeKind.CLUSTER,
                    None,
                    rn.members,
                )
        net.arcs = set(self.arcs)
        for rid in sorted(self.rnodes):
            net.cpts[rid] = self.reduced_cpt(rid)
        self._net_cache = (self._version, net)
        return net


def cluster_cpt(
    members: Sequence[str],
    member_cpts: Mapping[str, Cpt],
    combined_parents: Sequence[str],
    arities: Mapping[str, int],
    parent_members: Mapping[str, Sequence[str]] | None = None,
) -> Cpt:
    """Product CPT of a fused node.

    ``p(joint member state | joint parent state)`` is the product of each
    member's table evaluated at its own parents' slice of the joint parent
    state.  Member state indexing is mixed-radix with the first member
    slowest; parent states follow the usual flat-table convention.
    Composite parents (themselves clusters) are described by
    ``parent_members``; every member-CPT parent must resolve to an axis of
    the combined parent set.
    """
    members = tuple(members)
    combined_parents = tuple(combined_parents)
    parent_members = dict(parent_members or {})
    axis_vars: list[str] = []
    for p in combined_parents:
        axis_vars.extend(parent_members.get(p, (p,)))
    axis_vars.extend(members)
    if len(set(axis_vars)) != len(axis_vars):
        raise StructuralError(f"overlapping cluster axes: {axis_vars}")
    label = {v: i for i, v in enumerate(axis_vars)}

    operands: list = []
    covered: set[str] = set()
    for m in members:
        cpt = member_cpts[m]
        for p in cpt.parents:
            if p not in label:
                raise StructuralError(
                    f"member {m!r} parent {p!r} outside the combined parent set"
                )
        axes = [label[p] for p in cpt.parents] + [label[m]]
        shape = [arities[p] for p in cpt.parents] + [arities[m]]
        operands.extend([cpt.table.reshape(shape), axes])
        covered.update(cpt.parents)
        covered.add(m)
    for v in axis_vars:
        if v not in covered:
            operands.extend([np.ones(arities[v]), [label[v]]])
    table = np.einsum(*operands, list(range(len(axis_vars)))).reshape(-1)
    return Cpt(cluster_node_id(members), combined_parents, table)


# -- cycle machinery ---------------------------------------------------------


def _tree_path(
    rp: ReducedPolytree, a: str, b: str, exclude: tuple[str, str] | None = None
) -> list[str] | None:
    """Unique undirected path a..b, or None if disconnected.

    Full depth-first walk (no early exit) so that per-call operation counts
    are a deterministic Theta(l + v); op_counter ticks per node and arc.
    """
    adj: dict[str, list[str]] = {rid: [] for rid in rp.rnodes}
    for p, c in rp.arcs:
        if exclude is not None and (p, c) == exclude:
            continue
        adj[p].append(c)
        adj[c].append(p)
    for lst in adj.values():
        lst.sort()
    parent: dict[str, str | None] = {a: None}
    stack = [a]
    while stack:
        node = stack.pop()
        rp.op()
        for nbr in adj[node]:
            rp.op()
            if nbr not in parent:
                parent[nbr] = node
                stack.append(nbr)
    if b not in parent:
        return None
    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])  # type: ignore[arg-type]
    path.reverse()
    return path


def find_cycle(rp: ReducedPolytree, new_arc: tuple[str, str]) -> Cycle:
    """The cycle the new arc would close: unique tree path plus the arc.

    The path is unique because the current graph is singly connected, so no
    search heuristics are involved.  Every cycle in a layered graph has at
    least 4 nodes; this is asserted on every return.
    """
    p, c = new_arc
    for end in (p, c):
        if end not in rp.rnodes:
            raise KeyError(f"unknown reduced node {end!r}")
    path = _tree_path(rp, p, c, exclude=(p, c))
    if path is None:
        raise StructuralError(
            f"no path between {p!r} and {c!r}: arc would not close a cycle"
        )
    nodes = tuple(path)
    arcs = []
    for i, node in enumerate(nodes):
        nxt = nodes[(i + 1) % len(nodes)]
        if (node, nxt) in rp.arcs:
            arcs.append((node, nxt))
        elif (nxt, node) in rp.arcs:
            arcs.append((nxt, node))
        elif (node, nxt) == (c, p):
            arcs.append((p, c))  # the closing arc
        else:
            raise StructuralError(f"cycle hop {node!r}..{nxt!r} has no arc")
    if len(nodes) < 4:
        raise StructuralError(
            f"cycle with {len(nodes)} nodes found; layered networks admit none below 4"
        )
    return Cycle(nodes=nodes, arcs=tuple(arcs))


def _fuse(rp: ReducedPolytree, a: str, b: str) -> str:
    """Fuse reduced nodes a and b into one flat cluster; returns its id."""
    na, nb = rp.rnodes[a], rp.rnodes[b]
    if na.level != nb.level:
        raise StructuralError(
            f"cannot fuse {a!r} (level {na.level}) with {b!r} (level {nb.level})"
        )
    members = tuple(sorted((*na.members, *nb.members)))
    mid = cluster_node_id(members)
    for p, c in sorted(rp.arcs):
        np_, nc = p, c
        if p in (a, b):
            np_ = mid
        if c in (a, b):
            nc = mid
        if (np_, nc) != (p, c):
            rp.op()
            rp.arcs.discard((p, c))
            if np_ == nc:
                raise StructuralError(f"fusion of {a!r},{b!r} creates a self arc")
            rp.arcs.add((np_, nc))
    del rp.rnodes[a]
    del rp.rnodes[b]
    rp.rnodes[mid] = ReducedNode(mid, NodeKind.CLUSTER, members, na.level)
    for m in members:
        rp.membership[m] = mid
        rp.op()
    rp.last_change.add(mid)
    rp.last_change.discard(a)
    rp.last_change.discard(b)
    rp.last_fusions.append((a, b, mid))
    rp.bump()
    return mid


def layer_cluster(rp: ReducedPolytree, cycle: Cycle) -> ReducedPolytree:
    """Eliminate one cycle by repeated sink-parent fusion.

    Repeatedly: take the lowest-id sink of the remaining cycle (a node
    whose two ring arcs both point into it), fuse its two cycle-parents,
    substitute the fusion into the ring, until the ring collapses.  Fusing
    a node that is already a cluster absorbs its members (clusters stay
    flat).
    """
    ring = list(cycle.nodes)
    while len(ring) > 2:
        sinks = []
        for i, rid in enumerate(ring):
            prev_n = ring[i - 1]
            next_n = ring[(i + 1) % len(ring)]
            rp.op()
            if (prev_n, rid) in rp.arcs and (next_n, rid) in rp.arcs:
                sinks.append((rid, i))
        if not sinks:
            raise StructuralError(f"cycle {ring} has no sink")
        sinks.sort()
        sink, i = sinks[0]
        pa = ring[i - 1]
        pb = ring[(i + 1) % len(ring)]
        merged = _fuse(rp, pa, pb)
        new_ring = []
        for j, rid in enumerate(ring):
            if j == i or rid == pb:
                continue
            new_ring.append(merged if rid == pa else rid)
        ring = new_ring
    rp.total_eliminations += 1
    rp.bump()
    return rp


# -- arc attachment ----------------------------------------------------------


def _register_node(
    rp: ReducedPolytree,
    node_id: str,
    var: Variable,
    kind: NodeKind,
    source: str | None,
    member_cpt: MemberCpt | None,
    level: int,
) -> None:
    if node_id in rp.variables:
        raise ValueError(f"duplicate node id {node_id!r}")
    rp.variables[node_id] = var
    rp.kinds[node_id] = kind
    if source is not None:
        rp.sources[node_id] = source
    rp.member_cpts[node_id] = member_cpt
    if member_cpt is None:
        rp.pseudo_roots.add(node_id)
    rp.membership[node_id] = node_id
    rp.node_levels[node_id] = level
    rp.rnodes[node_id] = ReducedNode(node_id, kind, (node_id,), level)
    rp.last_change.add(node_id)
    rp.op()
    rp.bump()


def _replace_member_cpt(
    rp: ReducedPolytree, node_id: str, parents: Sequence[str], table: np.ndarray
) -> None:
    arities = [rp.arity(p) for p in parents]
    arity = rp.arity(node_id)
    table = np.asarray(table, dtype=np.float64).reshape(-1)
    expected = int(np.prod(arities, dtype=np.int64)) * arity if parents else arity
    if table.size != expected:
        raise ValueError(
            f"node {node_id!r}: table has {table.size} entries, expected {expected}"
        )
    rows = table.reshape(-1, arity)
    if np.any(np.abs(rows.sum(axis=1) - 1.0) > PROB_TOL):
        raise ValueError(f"node {node_id!r}: CPT rows must sum to 1")
    rp.member_cpts[node_id] = MemberCpt(node_id, tuple(parents), table.reshape(*arities, arity))
    rp.pseudo_roots.discard(node_id)
    rp.last_change.add(rp.membership[node_id])
    rp.bump()


def _retarget_member_parent(rp: ReducedPolytree, node_id: str, old: str, new: str) -> None:
    mc = rp.member_cpts[node_id]
    if mc is None:
        return
    rp.member_cpts[node_id] = MemberCpt(
        mc.child, tuple(new if p == old else p for p in mc.parents), mc.table
    )
    rp.bump()


def _attach_reduced_arc(rp: ReducedPolytree, orig_parent: str, orig_child: str) -> Cycle | None:
    """Insert one original arc at the reduced level; eliminate any cycle.

    An arc whose either endpoint is still isolated is a pendant attachment
    and cannot close a cycle; an arc between two connected nodes closes
    exactly one, which is eliminated on the spot.
    """
    rp_p = rp.membership[orig_parent]
    rp_c = rp.membership[orig_child]
    if rp_p == rp_c:
        raise StructuralError(
            f"arc ({orig_parent!r}, {orig_child!r}) internal to cluster {rp_p!r}"
        )
    rp.op()
    if (rp_p, rp_c) in rp.arcs:
        # Parallel original arc into an existing reduced arc: structure is
        # unchanged, only the child's conditional gains a coordinate.
        rp.last_change.add(rp_p)
        rp.last_change.add(rp_c)
        rp.bump()
        return None
    degree = {rp_p: 0, rp_c: 0}
    for p, c in rp.arcs:
        rp.op()
        if p in degree:
            degree[p] += 1
        if c in degree:
            degree[c] += 1
    cycle = None
    if degree[rp_p] > 0 and degree[rp_c] > 0:
        cycle = find_cycle(rp, (rp_p, rp_c))
    rp.arcs.add((rp_p, rp_c))
    rp.last_change.add(rp_p)
    rp.last_change.add(rp_c)
    rp.bump()
    if cycle is not None:
        rp.last_add_cycle_sizes.append(len(cycle))
        layer_cluster(rp, cycle)
        rp.last_add_eliminations += 1
    return cycle


def _attach_original_arc(rp: ReducedPolytree, parent: str, child: str) -> None:
    """Attach original arc (parent, child), subdividing level gaps.

    With a gap g >= 2, g-1 intermediate identity copies are created, one
    per skipped level, and the child's conditional is re-targeted to the
    last copy.  Only the final hop can close a cycle (a fresh intermediate
    is pendant by construction).
    """
    if (parent, child) in rp.processed_arcs:
        raise ValueError(f"arc ({parent!r}, {child!r}) already present")
    rp.processed_arcs.add((parent, child))
    gap = rp.node_levels[child] - rp.node_levels[parent]
    if gap < 1:
        raise StructuralError(
            f"arc ({parent!r}, {child!r}) spans {gap} levels; re-levelization required"
        )
    prev = parent
    arity = rp.arity(parent)
    for k in range(1, gap):
        mid = intermediate_id(parent, child, k)
        ident = np.eye(arity, dtype=np.float64)
        _register_node(
            rp,
            mid,
            Variable(mid, arity),
            NodeKind.INTERMEDIATE,
            parent,
            MemberCpt(mid, (prev,), ident),
            rp.node_levels[parent] + k,
        )
        _attach_reduced_arc(rp, prev, mid)
        prev = mid
    if prev != parent:
        _retarget_member_parent(rp, child, parent, prev)
    _attach_reduced_arc(rp, prev, child)


# -- public build / add operations -------------------------------------------


def _insert_from_layered(
    rp: ReducedPolytree, layered: LayeredNetwork, node_id: str
) -> None:
    entry = layered.net.nodes[node_id]
    cpt = layered.net.cpts.get(node_id)
    member_cpt = None
    if cpt is not None:
        shape = [layered.net.arity(p) for p in cpt.parents] + [entry.var.arity]
        member_cpt = MemberCpt(node_id, cpt.parents, cpt.table.reshape(shape))
    _register_node(
        rp,
        node_id,
        entry.var,
        entry.kind,
        entry.source,
        member_cpt,
        layered.levels[node_id],
    )


def build(
    layered: LayeredNetwork,
    start: str | None = None,
    check_invariants: bool = False,
) -> ReducedPolytree:
    """Depth-first incremental construction over a connected layered network.

    Each visited node is inserted with the arc that reached it, then every
    arc linking it to already-present nodes is attached (eliminating each
    resulting cycle immediately), then unvisited parents and children are
    visited in ascending-id order.
    """
    net = layered.net
    ids = sorted(net.nodes)
    rp = ReducedPolytree()
    if not ids:
        return rp
    if start is None:
        start = ids[0]
    if start not in net.nodes:
        raise KeyError(f"unknown start node {start!r}")

    lay_parents = {n: tuple(sorted(net.in_sources(n))) for n in ids}
    lay_children = {n: net.children_of(n) for n in ids}
    visited: set[str] = set()

    def insert(node_id: str, entering: tuple[str, str] | None) -> None:
        visited.add(node_id)
        _insert_from_layered(rp, layered, node_id)
        if entering is not None:
            _attach_original_arc(rp, *entering)
        # Attach all arcs linking this node to nodes already present.
        for u in lay_parents[node_id]:
            rp.op()
            if u in visited and (u, node_id) not in rp.processed_arcs:
                _attach_original_arc(rp, u, node_id)
        for w in lay_children[node_id]:
            rp.op()
            if w in visited and (node_id, w) not in rp.processed_arcs:
                _attach_original_arc(rp, node_id, w)
        if check_invariants and not rp.is_polytree():
            raise StructuralError(f"polytree invariant broken after inserting {node_id!r}")

    def neighbor_iter(node_id: str):
        for u in lay_parents[node_id]:
            yield u, (u, node_id)
        for w in lay_children[node_id]:
            yield w, (node_id, w)

    insert(start, None)
    stack: list[tuple[str, object]] = [(start, neighbor_iter(start))]
    while stack:
        node_id, it = stack[-1]
        for nbr, arc in it:  # type: ignore[union-attr]
            rp.op()
            if nbr not in visited:
                insert(nbr, arc)
                stack.append((nbr, neighbor_iter(nbr)))
                break
        else:
            stack.pop()

    if len(visited) != len(ids):
        missing = sorted(set(ids) - visited)
        raise DisconnectedNetworkError(missing[0])
    return rp


def add_node(
    rp: ReducedPolytree,
    v: str,
    arity: int,
    cpt_rows: Mapping[str, object] | Sequence[float] | np.ndarray | None,
    arcs: Sequence[tuple[str, str]],
    labels: Sequence[str] | None = None,
) -> ReducedPolytree:
    """Insert node ``v`` with ``arcs`` = ordered (direction, peer) pairs.

    ``direction`` is "in" (peer -> v) or "out" (v -> peer).  ``cpt_rows``
    maps v to its table over the sorted in-peers (omit or None for a
    pseudo-root placeholder) and each out-peer to its new table over its
    sorted old-parents-plus-v set.  The first arc attaches v as a
    pendant; each further arc closes exactly one cycle, eliminated on the
    spot, unless it lands on an already-present reduced arc.
    """
    if v in rp.variables:
        raise ValueError(f"duplicate node id {v!r}")
    arcs = list(arcs)
    if not arcs:
        if rp.rnodes:
            raise DisconnectedNetworkError(v, f"node {v!r} must be linked to the network")
        # bootstrap: the very first node of an incremental session
        rp.last_add_node = v
        rp.last_add_eliminations = 0
        rp.last_add_cycle_sizes = []
        rp.last_fusions = []
        rp.last_change = set()
        table = None
        if cpt_rows is not None:
            table = cpt_rows.get(v) if isinstance(cpt_rows, Mapping) else cpt_rows
        member_cpt = None
        if table is not None:
            arr = np.asarray(table, dtype=np.float64).reshape(-1)
            if arr.size != arity:
                raise ValueError(f"node {v!r}: prior needs {arity} entries")
            member_cpt = MemberCpt(v, (), arr)
        _register_node(rp, v, Variable(v, arity, tuple(labels or ())), NodeKind.SIMPLE,
                       None, member_cpt, 0)
        return rp
    incoming = []
    outgoing = []
    for direction, peer in arcs:
        if peer not in rp.variables:
            raise KeyError(f"unknown peer {peer!r}")
        if direction == "in":
            incoming.append(peer)
        elif direction == "out":
            outgoing.append(peer)
        else:
            raise ValueError(f"bad arc direction {direction!r}")
    if len(set(incoming)) != len(incoming) or len(set(outgoing)) != len(outgoing):
        raise ValueError("duplicate peers in arc list")

    orig_levels = {n: rp.node_levels[n] for n in rp.variables}
    verdict = check_arc_addition(orig_levels, incoming, outgoing)
    if verdict.verdict is Verdict.REJECT_BACK_ARC:
        raise BackArcError(verdict.out_min, verdict.in_max)
    if verdict.verdict is Verdict.ADMIT_WITH_NEW_LEVEL:
        raise RelevelRequired(
            f"adding {v!r} splices a new level at {verdict.level}; rebuild required"
        )
    placement = verdict.level
    if any(orig_levels[peer] <= placement for peer in outgoing):
        raise RelevelRequired(
            f"adding {v!r} at level {placement} would not leave its children below it"
        )

    tables: dict[str, object]
    if cpt_rows is None or isinstance(cpt_rows, Mapping):
        tables = dict(cpt_rows or {})
    else:
        tables = {v: cpt_rows}
    for peer in outgoing:
        if peer not in tables or tables[peer] is None:
            raise ValueError(f"out-arc to {peer!r} requires a replacement CPT for it")

    rp.last_add_node = v
    rp.last_add_eliminations = 0
    rp.last_add_cycle_sizes = []
    rp.last_fusions = []
    rp.last_change = set()

    v_parents = tuple(sorted(incoming))
    member_cpt = None
    v_table = tables.get(v)
    var = Variable(v, arity, tuple(labels or ()))
    if v_table is not None:
        arr = np.asarray(v_table, dtype=np.float64).reshape(-1)
        shape = [rp.arity(p) for p in v_parents] + [arity]
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"node {v!r}: table has {arr.size} entries, expected shape {shape}")
        member_cpt = MemberCpt(v, v_parents, arr.reshape(shape))
    elif incoming:
        raise ValueError(f"node {v!r} has incoming arcs and therefore needs a CPT")
    _register_node(rp, v, var, NodeKind.SIMPLE, None, member_cpt, placement)

    for direction, peer in arcs:
        if direction == "in":
            # The conditional already references the peer; intermediates
            # re-target it when the arc spans more than one level.
            _attach_original_arc(rp, peer, v)
        else:
            old = rp.member_cpts[peer]
            old_parents = old.parents if old is not None else ()
            new_parents = tuple(sorted((*old_parents, v)))
            _replace_member_cpt(rp, peer, new_parents, np.asarray(tables[peer], dtype=np.float64))
            _attach_original_arc(rp, v, peer)
    return rp


def add_arc(
    rp: ReducedPolytree, parent: str, child: str, new_child_table: Sequence[float] | np.ndarray
) -> ReducedPolytree:
    """Add one arc between existing nodes; the child's CPT is replaced.

    The new table covers the child's sorted old-parents-plus-new-parent
    set.  The arc closes exactly one cycle, eliminated immediately.  Arcs
    that do not point one level (or more) downward need re-levelization
    and are escalated.
    """
    for end in (parent, child):
        if end not in rp.variables:
            raise KeyError(f"unknown node {end!r}")
    if (parent, child) in rp.processed_arcs:
        raise ValueError(f"arc ({parent!r}, {child!r}) already present")
    if rp.node_levels[parent] >= rp.node_levels[child]:
        raise RelevelRequired(
            f"arc ({parent!r}, {child!r}) goes from level {rp.node_levels[parent]} "
            f"to {rp.node_levels[child]}; rebuild required"
        )
    rp.last_add_node = None
    rp.last_add_eliminations = 0
    rp.last_add_cycle_sizes = []
    rp.last_fusions = []
    rp.last_change = set()
    old = rp.member_cpts[child]
    old_parents = old.parents if old is not None else ()
    new_parents = tuple(sorted((*old_parents, parent)))
    _replace_member_cpt(rp, child, new_parents, np.asarray(new_child_table, dtype=np.float64))
    _attach_original_arc(rp, parent, child)
    return rp


def cluster_partition(rp: ReducedPolytree) -> tuple[tuple[str, ...], ...]:
    """Canonical partition of original ids: sorted tuple of sorted tuples."""
    return tuple(sorted(rn.members for rn in rp.rnodes.values()))
