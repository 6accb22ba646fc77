"""Ground-truth engines: full joint enumeration and d-separation.

These exist to check the inference path and are never used by it.  The
enumeration multiplies every CPT over the full joint state space (guarded),
so it is trivially correct and deliberately unclever.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import CapacityError, InconsistentEvidenceError
from .model import Network

#: Refuse to enumerate joints larger than this many configurations.
CAPACITY = 10_000_000


@dataclass
class OracleResult:
    marginals: dict[str, np.ndarray]
    evidence: dict[str, int]
    joint_size: int


def joint_array(net: Network) -> tuple[list[str], np.ndarray]:
    """The full joint as an ndarray with one axis per node (sorted ids)."""
    order = sorted(net.nodes)
    sizes = [net.arity(n) for n in order]
    total = int(np.prod(sizes, dtype=np.float64)) if order else 1
    if total > CAPACITY:
        raise CapacityError(f"joint has {total} configurations (guard: {CAPACITY})")
    axis = {n: i for i, n in enumerate(order)}
    joint = np.ones([1] * len(order), dtype=np.float64)
    for node_id in order:
        cpt = net.cpts[node_id]
        involved = [*cpt.parents, node_id]
        shape = [1] * len(order)
        for n in involved:
            shape[axis[n]] = net.arity(n)
        factor = cpt.table.reshape([net.arity(n) for n in involved])
        # Align factor axes to the global order, then broadcast-multiply.
        perm = sorted(range(len(involved)), key=lambda i: axis[involved[i]])
        joint = joint * factor.transpose(perm).reshape(shape)
    return order, joint


def _apply_evidence(
    order: list[str], joint: np.ndarray, net: Network, evidence: Mapping[str, int]
) -> np.ndarray:
    masked = joint
    for node_id, state in evidence.items():
        if node_id not in net.nodes:
            raise KeyError(f"evidence on unknown node {node_id!r}")
        if not 0 <= state < net.arity(node_id):
            raise IndexError(
                f"evidence state {state} out of range for node {node_id!r}"
            )
        ax = order.index(node_id)
        mask = np.zeros(net.arity(node_id))
        mask[state] = 1.0
        masked = masked * mask.reshape([-1 if i == ax else 1 for i in range(len(order))])
    return masked


def marginals_from_joint(
    order: list[str], joint: np.ndarray, net: Network, evidence: Mapping[str, int]
) -> dict[str, np.ndarray]:
    """Per-node conditionals p(node | evidence) from a precomputed joint."""
    masked = _apply_evidence(order, joint, net, evidence)
    total = float(masked.sum())
    if total <= 0.0:
        raise InconsistentEvidenceError(f"evidence {dict(evidence)} has probability zero")
    out: dict[str, np.ndarray] = {}
    for ax, node_id in enumerate(order):
        other = tuple(i for i in range(len(order)) if i != ax)
        out[node_id] = masked.sum(axis=other) / total
    return out


def joint_enumerate(net: Network, evidence: Mapping[str, int] | None = None) -> OracleResult:
    """Exact marginals for every node by brute-force joint enumeration."""
    evidence = dict(evidence or {})
    order, joint = joint_array(net)
    marginals = marginals_from_joint(order, joint, net, evidence)
    return OracleResult(
        marginals=marginals, evidence=evidence, joint_size=int(joint.size)
    )


def d_separated(net: Network, x: str, y: str, z: set[str] | frozenset[str]) -> bool:
    """Standard d-separation via the ancestral moral graph.

    Restrict to ancestors of x, y and z; marry co-parents; drop arc
    directions; remove z.  x and y are d-separated iff they end up in
    different components.
    """
    z = set(z)
    for n in (x, y, *z):
        if n not in net.nodes:
            raise KeyError(f"unknown node {n!r}")
    if x == y or x in z or y in z:
        raise ValueError("x, y must be distinct and not in z")

    parents: dict[str, set[str]] = {n: set() for n in net.nodes}
    for p, c in net.arcs:
        parents[c].add(p)

    relevant: set[str] = set()
    stack = [x, y, *z]
    while stack:
        node = stack.pop()
        if node in relevant:
            continue
        relevant.add(node)
        stack.extend(parents[node])

    adj: dict[str, set[str]] = {n: set() for n in relevant}
    for p, c in net.arcs:
        if p in relevant and c in relevant:
            adj[p].add(c)
            adj[c].add(p)
    for c in relevant:
        ps = sorted(parents[c] & relevant)
        for i, a in enumerate(ps):
            for b in ps[i + 1 :]:
                adj[a].add(b)
                adj[b].add(a)

    blocked = z
    seen = {x}
    stack = [x]
    while stack:
        node = stack.pop()
        if node == y:
            return False
        for nbr in adj[node]:
            if nbr not in seen and nbr not in blocked:
                seen.add(nbr)
                stack.append(nbr)
    return True
