"""Exact belief updating on the reduced polytree.

Standard two-phase message passing on a tree: collect toward a fixed
pivot (the smallest reduced id), then distribute back out.  Each node's
belief is the normalized elementwise product of its causal support
(from parents) and diagnostic support (from children plus evidence).

Messages are deliberately left unnormalized: every message has a unique
closed-form value on a tree, so results are bit-for-bit reproducible and
cached messages from untouched subtrees can be reused verbatim when the
structure grows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .builder import ReducedPolytree
from .errors import InconsistentEvidenceError, StructuralError

Edge = tuple[str, str]


@dataclass
class PseudoRoot:
    """A node added before its predecessors; carries a uniform placeholder."""

    node: str
    placeholder_prior: np.ndarray
    resolved: bool


class MessageState:
    """All messages, supports and beliefs for one propagation.

    Treated as immutable once returned; update operations build a new one.
    """

    def __init__(self, rp: ReducedPolytree, evidence: dict[str, int]):
        self.rp = rp
        self.evidence = evidence
        self.pi_msg: dict[Edge, np.ndarray] = {}
        self.lambda_msg: dict[Edge, np.ndarray] = {}
        self.pi_node: dict[str, np.ndarray] = {}
        self.lambda_node: dict[str, np.ndarray] = {}
        self.belief: dict[str, np.ndarray] = {}
        self.alpha: dict[str, float] = {}
        self.provisional: frozenset[str] = frozenset()
        self.pseudo_roots: dict[str, PseudoRoot] = {}
        self.muladds: int = 0

    def is_provisional(self, node_id: str) -> bool:
        rid = node_id if node_id in self.rp.rnodes else self.rp.membership.get(node_id)
        return rid in self.provisional


def _evidence_indicator(
    rp: ReducedPolytree, rid: str, evidence: Mapping[str, int]
) -> np.ndarray | None:
    members = rp.rnodes[rid].members
    touched = [m for m in members if m in evidence]
    if not touched:
        return None
    sizes = [rp.arity(m) for m in members]
    arr = np.ones(sizes)
    for i, m in enumerate(members):
        if m in evidence:
            vec = np.zeros(sizes[i])
            vec[evidence[m]] = 1.0
            arr = arr * vec.reshape([-1 if j == i else 1 for j in range(len(members))])
    return arr.reshape(-1)


def _validate_evidence(rp: ReducedPolytree, evidence: Mapping[str, int]) -> dict[str, int]:
    out: dict[str, int] = {}
    for node_id, state in evidence.items():
        if node_id not in rp.variables:
            raise KeyError(f"evidence on unknown node {node_id!r}")
        if not 0 <= int(state) < rp.arity(node_id):
            raise IndexError(
                f"evidence state {state} out of range for node {node_id!r} "
                f"(arity {rp.arity(node_id)})"
            )
        out[node_id] = int(state)
    return out


def _tree_structure(rp: ReducedPolytree, pivot: str) -> tuple[list[str], dict[str, str | None]]:
    """BFS order from the pivot plus each node's neighbor toward the pivot."""
    order = [pivot]
    toward: dict[str, str | None] = {pivot: None}
    i = 0
    while i < len(order):
        node = order[i]
        i += 1
        for nbr in rp.neighbors(node):
            if nbr not in toward:
                toward[nbr] = node
                order.append(nbr)
    if len(order) != len(rp.rnodes):
        missing = sorted(set(rp.rnodes) - set(order))
        raise StructuralError(f"reduced graph is not connected: {missing[0]!r} unreachable")
    return order, toward


def propagate(
    rp: ReducedPolytree,
    evidence: Mapping[str, int] | None = None,
    base: MessageState | None = None,
    valid_edges: set[Edge] | None = None,
) -> MessageState:
    """One full inward + outward sweep; exact on a polytree.

    ``base``/``valid_edges`` let an incremental update reuse messages whose
    originating subtree is untouched; values are identical to a fresh
    computation because message values are schedule-independent on a tree.
    """
    state = MessageState(rp, _validate_evidence(rp, evidence or {}))
    if not rp.rnodes:
        return state
    if not rp.is_polytree():
        raise StructuralError("propagation requires a singly connected reduced network")

    pivot = min(rp.rnodes)
    order, toward = _tree_structure(rp, pivot)
    msgs: dict[Edge, np.ndarray] = {}
    indicators = {rid: _evidence_indicator(rp, rid, state.evidence) for rid in rp.rnodes}

    def send(x: str, y: str) -> None:
        msgs[(x, y)] = _message(rp, state, msgs, indicators, x, y, base, valid_edges)

    # collect toward pivot, deepest first
    for x in reversed(order):
        t = toward[x]
        if t is not None:
            send(x, t)
    # distribute outward
    for x in order:
        t = toward[x]
        for nbr in rp.neighbors(x):
            if nbr != t:
                send(x, nbr)

    for rid in sorted(rp.rnodes):
        parents, tensor = rp.conditional(rid)
        pi = _causal_support(rp, state, msgs, rid, parents, tensor)
        lam = _diagnostic_support(rp, state, msgs, indicators, rid, exclude=None)
        state.pi_node[rid] = pi
        state.lambda_node[rid] = lam
        bel = pi * lam
        state.muladds += bel.size
        total = float(bel.sum())
        if total <= 0.0:
            raise InconsistentEvidenceError(
                f"evidence {state.evidence} has probability zero (at node {rid!r})"
            )
        state.alpha[rid] = 1.0 / total
        state.belief[rid] = bel / total

    for p, c in rp.arcs:
        state.pi_msg[(p, c)] = msgs[(p, c)]
        state.lambda_msg[(p, c)] = msgs[(c, p)]

    unresolved = set(rp.pseudo_roots)
    state.pseudo_roots = {
        n: PseudoRoot(n, np.full(rp.arity(n), 1.0 / rp.arity(n)), False) for n in sorted(unresolved)
    }
    tainted = {rid for rid, rn in rp.rnodes.items() if any(m in unresolved for m in rn.members)}
    frontier = list(tainted)
    while frontier:
        node = frontier.pop()
        for child in rp.children_of(node):
            if child not in tainted:
                tainted.add(child)
                frontier.append(child)
    state.provisional = frozenset(tainted)
    return state


def _causal_support(
    rp: ReducedPolytree,
    state: MessageState,
    msgs: dict[Edge, np.ndarray],
    rid: str,
    parents: tuple[str, ...],
    tensor: np.ndarray,
) -> np.ndarray:
    if not parents:
        return tensor
    operands: list = [tensor, list(range(len(parents) + 1))]
    for i, p in enumerate(parents):
        operands.extend([msgs[(p, rid)], [i]])
    state.muladds += int(np.prod(tensor.shape, dtype=np.int64)) * (len(parents) + 1)
    return np.einsum(*operands, [len(parents)])


def _diagnostic_support(
    rp: ReducedPolytree,
    state: MessageState,
    msgs: dict[Edge, np.ndarray],
    indicators: dict[str, np.ndarray | None],
    rid: str,
    exclude: str | None,
) -> np.ndarray:
    lam = None
    ind = indicators[rid]
    if ind is not None:
        lam = ind.copy()
    for c in rp.children_of(rid):
        if c == exclude:
            continue
        incoming = msgs[(c, rid)]
        lam = incoming.copy() if lam is None else lam * incoming
        state.muladds += incoming.size
    if lam is None:
        lam = np.ones(rp.reduced_arity(rid))
    return lam


def _message(
    rp: ReducedPolytree,
    state: MessageState,
    msgs: dict[Edge, np.ndarray],
    indicators: dict[str, np.ndarray | None],
    x: str,
    y: str,
    base: MessageState | None,
    valid_edges: set[Edge] | None,
) -> np.ndarray:
    if valid_edges is not None and (x, y) in valid_edges and base is not None:
        if (x, y) in base.pi_msg:
            return base.pi_msg[(x, y)]
        if (y, x) in base.lambda_msg:
            return base.lambda_msg[(y, x)]
        raise StructuralError(f"edge ({x!r}, {y!r}) marked valid but absent from cache")
    parents, tensor = rp.conditional(x)
    if (x, y) in rp.arcs:
        # causal message to child y: full support excluding y's diagnostic part
        pi = _causal_support(rp, state, msgs, x, parents, tensor)
        lam = _diagnostic_support(rp, state, msgs, indicators, x, exclude=y)
        state.muladds += pi.size
        return pi * lam
    if (y, x) not in rp.arcs:
        raise StructuralError(f"no arc between {x!r} and {y!r}")
    # diagnostic message to parent y: contract everything except y's axis
    lam = _diagnostic_support(rp, state, msgs, indicators, x, exclude=None)
    if np.all(lam == 1.0):
        # vacuous diagnostic support: the contraction is the unit vector up
        # to CPT row-sum rounding, so emit it exactly (lambda messages are
        # defined up to scale)
        return np.ones(rp.reduced_arity(y))
    k = len(parents)
    operands: list = [tensor, list(range(k + 1)), lam, [k]]
    target = None
    for i, p in enumerate(parents):
        if p == y:
            target = i
            continue
        operands.extend([msgs[(p, x)], [i]])
    if target is None:
        raise StructuralError(f"{y!r} not a parent of {x!r}")
    state.muladds += int(np.prod(tensor.shape, dtype=np.int64)) * (k + 1)
    return np.einsum(*operands, [target])


def belief(state: MessageState, node_id: str) -> np.ndarray:
    """Normalized belief vector for a reduced node or an original variable."""
    if node_id in state.rp.rnodes:
        return state.belief[node_id].copy()
    rid = state.rp.membership.get(node_id)
    if rid is None:
        raise KeyError(f"unknown node {node_id!r}")
    return marginalize_cluster(state, rid, node_id)


def marginalize_cluster(state: MessageState, cluster_id: str, member_id: str) -> np.ndarray:
    """Member marginal from a cluster belief via its mixed-radix layout."""
    rn = state.rp.rnodes.get(cluster_id)
    if rn is None:
        raise KeyError(f"unknown reduced node {cluster_id!r}")
    if member_id not in rn.members:
        raise KeyError(f"{member_id!r} is not a member of {cluster_id!r}")
    sizes = [state.rp.arity(m) for m in rn.members]
    idx = rn.members.index(member_id)
    arr = state.belief[cluster_id].reshape(sizes)
    other = tuple(i for i in range(len(sizes)) if i != idx)
    return arr.sum(axis=other) if other else arr.copy()


def _incremental_valid_edges(old: MessageState, rp: ReducedPolytree) -> set[Edge]:
    """Directed edges whose source side provably contains no changed node.

    Rooted at the smallest changed node: an upward message (from a child
    subtree toward the root) is reusable iff its subtree holds no changed
    node and the same arc existed before; every downward message is
    recomputed since the root side changed by construction.
    """
    dirty = {rid for rid in rp.last_change if rid in rp.rnodes}
    if not dirty or not rp.rnodes:
        return set()
    root = min(dirty)
    order, toward = _tree_structure(rp, root)
    subtree_dirty: dict[str, bool] = {}
    for x in reversed(order):
        flag = x in dirty
        for nbr in rp.neighbors(x):
            if nbr != toward[x] and toward.get(nbr) == x:
                flag = flag or subtree_dirty[nbr]
        subtree_dirty[x] = flag

    old_edges = set(old.pi_msg) | {(c, p) for p, c in old.lambda_msg}
    valid: set[Edge] = set()
    for x in order:
        t = toward[x]
        if t is None:
            continue
        arc_existed = (x, t) in old_edges or (t, x) in old_edges
        if not subtree_dirty[x] and arc_existed:
            valid.add((x, t))
    return valid


def incorporate_new_node(state: MessageState, rp: ReducedPolytree, v: str) -> MessageState:
    """Fold one just-added node into the message state.

    A new root sends its causal message down, a new leaf its diagnostic
    message up, and after a cycle elimination the whole affected region
    re-emits; in every case messages from untouched subtrees are reused and
    the result equals a from-scratch propagation on the new structure.
    """
    if rp.last_add_node != v:
        raise StructuralError(f"node {v!r} was not the last addition")
    if v not in rp.membership:
        raise KeyError(f"unknown node {v!r}")
    valid = _incremental_valid_edges(state, rp)
    return propagate(rp, state.evidence, base=state, valid_edges=valid)


def refresh_after_change(state: MessageState, rp: ReducedPolytree) -> MessageState:
    """Incremental re-propagation after any structural change (e.g. new arc)."""
    valid = _incremental_valid_edges(state, rp)
    return propagate(rp, state.evidence, base=state, valid_edges=valid)


def set_evidence(state: MessageState, node_id: str, state_index: int) -> MessageState:
    """Instantiate one variable and re-propagate from scratch."""
    evidence = dict(state.evidence)
    evidence.update(_validate_evidence(state.rp, {node_id: state_index}))
    return propagate(state.rp, evidence)


def retract_evidence(state: MessageState, node_id: str) -> MessageState:
    """Remove one instantiation and re-propagate from scratch."""
    if node_id not in state.rp.variables:
        raise KeyError(f"unknown node {node_id!r}")
    evidence = dict(state.evidence)
    evidence.pop(node_id, None)
    return propagate(state.rp, evidence)
