"""Shared fixture networks and random-model generators for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from layeredbn.builder import ReducedPolytree, add_node
from layeredbn.model import Network

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def make_net(cpts: dict[str, tuple[tuple[str, ...], list[float]]],
             arities: dict[str, int] | None = None) -> Network:
    """Build a network from {child: (parents, flat_table)}; binary by default."""
    net = Network()
    arities = arities or {}
    for node in cpts:
        net.add_variable(node, arities.get(node, 2))
    for child, (parents, table) in cpts.items():
        for p in parents:
            net.add_arc(p, child)
        net.set_cpt(child, parents, table)
    return net


def tenfold_network() -> Network:
    return make_net({
        "A": ((), [0.6, 0.4]),
        "B": ((), [0.7, 0.3]),
        "C": ((), [0.2, 0.8]),
        "D": (("A", "B"), [0.9, 0.1, 0.5, 0.5, 0.3, 0.7, 0.1, 0.9]),
        "E": (("B", "C"), [0.8, 0.2, 0.6, 0.4, 0.4, 0.6, 0.25, 0.75]),
        "F": (("B",), [0.35, 0.65, 0.85, 0.15]),
        "G": (("D", "E"), [0.95, 0.05, 0.45, 0.55, 0.55, 0.45, 0.15, 0.85]),
        "H": (("F",), [0.7, 0.3, 0.1, 0.9]),
        "I": (("G",), [0.6, 0.4, 0.3, 0.7]),
        "J": (("G", "F"), [0.75, 0.25, 0.65, 0.35, 0.2, 0.8, 0.05, 0.95]),
    })


def chain_network() -> Network:
    return make_net({
        "A": ((), [0.6, 0.4]),
        "B": (("A",), [0.9, 0.1, 0.2, 0.8]),
    })


def diamond_network() -> Network:
    return make_net({
        "A": ((), [0.6, 0.4]),
        "B": (("A",), [0.7, 0.3, 0.2, 0.8]),
        "C": (("A",), [0.55, 0.45, 0.35, 0.65]),
        "D": (("B", "C"), [0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.05, 0.95]),
    })


def ladder_network() -> Network:
    return make_net({
        "A": ((), [0.55, 0.45]),
        "B1": (("A",), [0.8, 0.2, 0.3, 0.7]),
        "B2": (("B1",), [0.75, 0.25, 0.15, 0.85]),
        "C1": (("A",), [0.6, 0.4, 0.25, 0.75]),
        "C2": (("C1",), [0.9, 0.1, 0.4, 0.6]),
        "D": (("B2", "C2"), [0.95, 0.05, 0.5, 0.5, 0.4, 0.6, 0.1, 0.9]),
    })


def random_rows(rng: np.random.Generator, n_rows: int, arity: int,
                floor: float = 0.0) -> np.ndarray:
    rows = rng.dirichlet(np.full(arity, 0.8), size=n_rows)
    if floor > 0.0:
        rows = rows * (1.0 - arity * floor) + floor
    return rows.reshape(-1)


def random_dag(rng: np.random.Generator, n: int, p: float = 0.35,
               max_arity: int = 3, floor: float = 0.0) -> Network:
    """Arbitrary DAG (possibly disconnected, arbitrary level gaps)."""
    net = Network()
    ids = [f"N{i}" for i in range(n)]
    arities = {i: int(rng.integers(2, max_arity + 1)) for i in ids}
    for i in ids:
        net.add_variable(i, arities[i])
    parents: dict[str, list[str]] = {i: [] for i in ids}
    for j in range(n):
        for i in range(j):
            if rng.random() < p:
                net.add_arc(ids[i], ids[j])
                parents[ids[j]].append(ids[i])
    for node in ids:
        ps = tuple(parents[node])
        n_rows = int(np.prod([arities[p] for p in ps])) if ps else 1
        net.set_cpt(node, ps, random_rows(rng, n_rows, arities[node], floor))
    return net


def random_connected_layered(rng: np.random.Generator, n: int,
                             max_arity: int = 3, max_width: int = 4,
                             extra_p: float = 0.35, floor: float = 0.0) -> Network:
    """Connected network in which every arc spans exactly one level."""
    ids = [f"N{i}" for i in range(n)]
    levels: dict[str, int] = {}
    # level 1 must be nonempty for n >= 2, otherwise the roots cannot be
    # connected under the one-level-per-arc rule
    width0 = int(rng.integers(1, min(max_width, max(n - 1, 1)) + 1))
    taken = 0
    level = 0
    while taken < n:
        width = width0 if level == 0 else int(rng.integers(1, max_width + 1))
        for _ in range(min(width, n - taken)):
            levels[ids[taken]] = level
            taken += 1
        level += 1
    by_level: dict[int, list[str]] = {}
    for node, lvl in levels.items():
        by_level.setdefault(lvl, []).append(node)

    net = Network()
    arities = {i: int(rng.integers(2, max_arity + 1)) for i in ids}
    for i in ids:
        net.add_variable(i, arities[i])
    parents: dict[str, list[str]] = {i: [] for i in ids}
    for lvl in range(1, max(by_level) + 1):
        for node in by_level[lvl]:
            pool = by_level[lvl - 1]
            first = pool[int(rng.integers(len(pool)))]
            parents[node].append(first)
            for candidate in pool:
                if candidate != first and rng.random() < extra_p:
                    parents[node].append(candidate)

    # Join undirected components: attach a level-(l+1) node of one component
    # to a level-l node of another, keeping layeredness.
    def components() -> list[set[str]]:
        adj: dict[str, set[str]] = {i: set() for i in ids}
        for c, ps in parents.items():
            for p in ps:
                adj[c].add(p)
                adj[p].add(c)
        seen: set[str] = set()
        comps = []
        for node in ids:
            if node in seen:
                continue
            comp = set()
            stack = [node]
            while stack:
                cur = stack.pop()
                if cur in comp:
                    continue
                comp.add(cur)
                stack.extend(adj[cur])
            seen |= comp
            comps.append(comp)
        return comps

    comps = components()
    while len(comps) > 1:
        comps.sort(key=lambda c: sorted(c)[0])
        main, rest = comps[0], comps[1:]
        joined = False
        for comp in rest:
            for node in sorted(comp):
                if levels[node] >= 1:
                    pool = [p for p in by_level[levels[node] - 1] if p in main]
                    if pool:
                        parents[node].append(pool[int(rng.integers(len(pool)))])
                        joined = True
                        break
            if joined:
                break
            for node in sorted(comp):
                pool = [c for c in by_level.get(levels[node] + 1, []) if c in main]
                if pool:
                    parents[pool[int(rng.integers(len(pool)))]].append(node)
                    joined = True
                    break
            if joined:
                break
        if not joined:
            raise AssertionError("could not connect generated network")
        comps = components()

    for child, ps in parents.items():
        for p in ps:
            net.add_arc(p, child)
    for node in ids:
        ps = tuple(sorted(parents[node]))
        n_rows = int(np.prod([arities[p] for p in ps])) if ps else 1
        net.set_cpt(node, ps, random_rows(rng, n_rows, arities[node], floor))
    return net


def random_rp_polytree(rng: np.random.Generator, n: int,
                       max_arity: int = 2) -> ReducedPolytree:
    """Layered polytree grown with single-arc additions (always admissible).

    New nodes enter either as a child of a random node or as an extra
    parent of a random non-root-level node (carrying their own prior), so
    multi-parent nodes occur and levels vary.
    """
    rp = ReducedPolytree()
    arity0 = int(rng.integers(2, max_arity + 1))
    add_node(rp, "P0", arity0, {"P0": random_rows(rng, 1, arity0)}, [])
    for i in range(1, n):
        v = f"P{i}"
        arity = int(rng.integers(2, max_arity + 1))
        existing = sorted(rp.variables)
        raised = [x for x in existing if rp.node_levels[x] >= 1]
        as_parent = bool(raised) and rng.random() < 0.35
        if as_parent:
            peer = raised[int(rng.integers(len(raised)))]
            old = rp.member_cpts[peer]
            old_parents = old.parents if old is not None else ()
            n_rows = int(np.prod([rp.arity(p) for p in old_parents] + [arity]))
            add_node(
                rp, v, arity,
                {v: random_rows(rng, 1, arity),
                 peer: random_rows(rng, n_rows, rp.arity(peer))},
                [("out", peer)],
            )
        else:
            peer = existing[int(rng.integers(len(existing)))]
            add_node(
                rp, v, arity,
                {v: random_rows(rng, rp.arity(peer), arity)},
                [("in", peer)],
            )
    return rp


def replacement_table(rng: np.random.Generator, rp: ReducedPolytree,
                      peer: str, new_parent_arity: int) -> np.ndarray:
    """Random table for ``peer`` after it gains one more parent."""
    old = rp.member_cpts[peer]
    old_parents = old.parents if old is not None else ()
    sizes = [rp.arity(p) for p in old_parents] + [new_parent_arity]
    return random_rows(rng, int(np.prod(sizes)), rp.arity(peer))
