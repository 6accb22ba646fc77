"""Core model: discrete variables, CPTs, networks and their validation.

A network is a DAG of discrete variables.  Every node carries a conditional
probability table over its parents; root priors are CPTs with an empty
parent list, so message passing has a single code path.

CPT tables are stored flat.  Rows enumerate parent assignments in
mixed-radix order with the LAST declared parent varying fastest; within a
row, child states appear in declared order:

    index = mixed_radix(parent_assignment) * child_arity + child_state

which is exactly the C-order flattening of an array shaped
``(*parent_arities, child_arity)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import CyclicNetworkError

#: Normalization tolerance used everywhere probabilities must sum to 1.
PROB_TOL = 1e-9


class NodeKind(Enum):
    SIMPLE = "simple"
    INTERMEDIATE = "intermediate"
    CLUSTER = "cluster"


@dataclass(frozen=True)
class Variable:
    """A discrete variable with ``arity`` states.

    ``labels`` defaults to "0".."arity-1" and must be distinct.
    """

    id: str
    arity: int
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.arity < 2:
            raise ValueError(f"variable {self.id!r}: arity must be >= 2, got {self.arity}")
        labels = self.labels or tuple(str(i) for i in range(self.arity))
        if len(labels) != self.arity:
            raise ValueError(
                f"variable {self.id!r}: {len(labels)} labels for arity {self.arity}"
            )
        if len(set(labels)) != len(labels):
            raise ValueError(f"variable {self.id!r}: duplicate state labels")
        object.__setattr__(self, "labels", labels)

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"variable {self.id!r} has no state {label!r}") from None


def mixed_radix_encode(arities: Sequence[int], states: Sequence[int]) -> int:
    """Encode ``states`` against ``arities``, last position fastest."""
    if len(arities) != len(states):
        raise ValueError("arity/state length mismatch")
    index = 0
    for arity, state in zip(arities, states):
        if not 0 <= state < arity:
            raise IndexError(f"state {state} out of range for arity {arity}")
        index = index * arity + state
    return index


def mixed_radix_decode(arities: Sequence[int], index: int) -> tuple[int, ...]:
    """Inverse of :func:`mixed_radix_encode`."""
    total = int(np.prod(arities)) if arities else 1
    if not 0 <= index < total:
        raise IndexError(f"index {index} out of range for arities {list(arities)}")
    states = [0] * len(arities)
    for i in range(len(arities) - 1, -1, -1):
        index, states[i] = divmod(index, arities[i])
    return tuple(states)


def cpt_index(
    parent_arities: Sequence[int],
    parent_assignment: Sequence[int],
    child_arity: int,
    child_state: int,
) -> int:
    """Flat table index for one CPT entry (see module docstring)."""
    if not 0 <= child_state < child_arity:
        raise IndexError(f"child state {child_state} out of range for arity {child_arity}")
    return mixed_radix_encode(parent_arities, parent_assignment) * child_arity + child_state


def decode_cpt_index(
    parent_arities: Sequence[int], child_arity: int, index: int
) -> tuple[tuple[int, ...], int]:
    """Recover ``(parent_assignment, child_state)`` from a flat index."""
    row, child_state = divmod(index, child_arity)
    return mixed_radix_decode(parent_arities, row), child_state


@dataclass
class Cpt:
    """A conditional probability table; root priors have ``parents == ()``."""

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        self.parents = tuple(self.parents)
        self.table = np.asarray(self.table, dtype=np.float64).reshape(-1)

    def n_rows(self, child_arity: int) -> int:
        return self.table.size // child_arity

    def row(self, row_index: int, child_arity: int) -> np.ndarray:
        start = row_index * child_arity
        return self.table[start : start + child_arity]

    def shaped(self, parent_arities: Sequence[int], child_arity: int) -> np.ndarray:
        """Table as an ndarray with axes ``(*parents, child)``."""
        return self.table.reshape(*parent_arities, child_arity)


def identity_cpt(arity: int, child: str = "copy", parent: str = "source") -> Cpt:
    """Deterministic pass-through CPT: p(child = j | parent = i) = [i == j].

    The unique table that preserves the joint distribution when the copy is
    marginalized out, which is what intermediate nodes require.
    """
    if arity < 2:
        raise ValueError(f"arity must be >= 2, got {arity}")
    return Cpt(child=child, parents=(parent,), table=np.eye(arity, dtype=np.float64).reshape(-1))


@dataclass
class NetworkNode:
    var: Variable
    kind: NodeKind = NodeKind.SIMPLE
    source: str | None = None  # INTERMEDIATE only: the copied node
    members: tuple[str, ...] = ()  # CLUSTER only: ascending member ids


@dataclass
class Network:
    """A directed acyclic network of discrete variables with CPTs."""

    nodes: dict[str, NetworkNode] = field(default_factory=dict)
    arcs: set[tuple[str, str]] = field(default_factory=set)
    cpts: dict[str, Cpt] = field(default_factory=dict)

    # -- construction -----------------------------------------------------

    def add_variable(
        self,
        node_id: str,
        arity: int | None = None,
        labels: Sequence[str] | None = None,
        kind: NodeKind = NodeKind.SIMPLE,
        source: str | None = None,
        members: Sequence[str] = (),
    ) -> None:
        if node_id in self.nodes:
            raise ValueError(f"duplicate node id {node_id!r}")
        if arity is None:
            if not labels:
                raise ValueError(f"node {node_id!r}: need arity or labels")
            arity = len(labels)
        var = Variable(node_id, arity, tuple(labels or ()))
        self.nodes[node_id] = NetworkNode(var, kind, source, tuple(members))

    def add_arc(self, parent: str, child: str) -> None:
        if parent not in self.nodes or child not in self.nodes:
            raise KeyError(f"arc ({parent!r}, {child!r}) references unknown node")
        self.arcs.add((parent, child))

    def set_cpt(self, child: str, parents: Sequence[str], table: Iterable[float]) -> None:
        self.cpts[child] = Cpt(child, tuple(parents), np.asarray(list(table), dtype=np.float64))

    # -- queries -----------------------------------------------------------

    def arity(self, node_id: str) -> int:
        return self.nodes[node_id].var.arity

    def parents_of(self, node_id: str) -> tuple[str, ...]:
        """Parents in CPT-declared order (falls back to sorted in-arc sources)."""
        cpt = self.cpts.get(node_id)
        if cpt is not None:
            return cpt.parents
        return tuple(sorted(p for p, c in self.arcs if c == node_id))

    def in_sources(self, node_id: str) -> set[str]:
        return {p for p, c in self.arcs if c == node_id}

    def children_of(self, node_id: str) -> tuple[str, ...]:
        return tuple(sorted(c for p, c in self.arcs if p == node_id))

    def roots(self) -> tuple[str, ...]:
        have_parent = {c for _, c in self.arcs}
        return tuple(sorted(n for n in self.nodes if n not in have_parent))

    def topological_order(self) -> list[str]:
        """Kahn's algorithm with a sorted ready set, so order is deterministic."""
        indeg = {n: 0 for n in self.nodes}
        for _, c in self.arcs:
            indeg[c] += 1
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order: list[str] = []
        children: dict[str, list[str]] = {n: [] for n in self.nodes}
        for p, c in self.arcs:
            children[p].append(c)
        while ready:
            node = ready.pop(0)
            order.append(node)
            inserted = False
            for c in sorted(children[node]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    inserted = True
            if inserted:
                ready.sort()
        if len(order) != len(self.nodes):
            cyclic = sorted(set(self.nodes) - set(order))
            raise CyclicNetworkError(f"directed cycle among {cyclic}")
        return order

    def copy(self) -> "Network":
        net = Network()
        for node_id, entry in self.nodes.items():
            net.nodes[node_id] = NetworkNode(
                entry.var, entry.kind, entry.source, entry.members
            )
        net.arcs = set(self.arcs)
        net.cpts = {k: Cpt(v.child, v.parents, v.table.copy()) for k, v in self.cpts.items()}
        return net


@dataclass
class ValidationReport:
    ok: bool
    violations: list[str]


def validate_network(net: Network) -> ValidationReport:
    """Check every structural and numeric invariant; violations are data."""
    violations: list[str] = []

    for parent, child in sorted(net.arcs):
        for end in (parent, child):
            if end not in net.nodes:
                violations.append(f"arc ({parent}, {child}): unknown node {end!r}")

    try:
        net.topological_order()
    except CyclicNetworkError as exc:
        violations.append(f"directed cycle: {exc}")

    for node_id in sorted(net.nodes):
        entry = net.nodes[node_id]
        if entry.kind is NodeKind.INTERMEDIATE:
            if entry.source is None:
                violations.append(f"node {node_id}: intermediate without a source id")
            elif entry.source in net.nodes and net.arity(entry.source) != entry.var.arity:
                violations.append(
                    f"node {node_id}: arity {entry.var.arity} != source arity "
                    f"{net.arity(entry.source)}"
                )
        if entry.kind is NodeKind.CLUSTER:
            if len(entry.members) < 2:
                violations.append(f"node {node_id}: cluster with < 2 members")
            if tuple(sorted(entry.members)) != entry.members:
                violations.append(f"node {node_id}: cluster members not ascending")

        cpt = net.cpts.get(node_id)
        if cpt is None:
            violations.append(f"node {node_id}: missing CPT")
            continue
        if set(cpt.parents) != net.in_sources(node_id):
            violations.append(
                f"node {node_id}: CPT parents {sorted(cpt.parents)} != in-arc sources "
                f"{sorted(net.in_sources(node_id))}"
            )
            continue
        if len(set(cpt.parents)) != len(cpt.parents):
            violations.append(f"node {node_id}: duplicate CPT parents")
            continue
        unknown = [p for p in cpt.parents if p not in net.nodes]
        if unknown:
            violations.append(f"node {node_id}: CPT parent(s) {unknown} unknown")
            continue
        arity = entry.var.arity
        parent_arities = [net.arity(p) for p in cpt.parents]
        expected = int(np.prod(parent_arities, dtype=np.int64)) * arity if parent_arities else arity
        if cpt.table.size != expected:
            violations.append(
                f"node {node_id}: CPT table has {cpt.table.size} entries, expected {expected}"
            )
            continue
        if np.any(cpt.table < 0.0) or np.any(cpt.table > 1.0):
            violations.append(f"node {node_id}: CPT entries outside [0, 1]")
        rows = cpt.table.reshape(-1, arity)
        sums = rows.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > PROB_TOL)[0]
        for row_index in bad:
            violations.append(
                f"node {node_id}: CPT row {int(row_index)} sum {sums[row_index]:.12g} != 1"
            )

    return ValidationReport(ok=not violations, violations=violations)


@dataclass(frozen=True)
class NetworkStats:
    v: int
    l: int
    gamma: int


def network_stats(net: Network) -> NetworkStats:
    """Node count, arc count and the maximum per-node state-space size."""
    gamma = max((e.var.arity for e in net.nodes.values()), default=0)
    return NetworkStats(v=len(net.nodes), l=len(net.arcs), gamma=gamma)
