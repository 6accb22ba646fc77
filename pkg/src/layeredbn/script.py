"""Mutation scripts: line-oriented incremental construction commands.

    add_node <id> <arity|label,label,...> [in:<peer>|out:<peer>]... \
             [cpt <target> <numbers...>]...
    add_arc <parent> <child> <numbers...>
    set_evidence <node> <state-label>
    retract <node>
    query <node>
    checkpoint <label>

Tokens are whitespace-separated; a token starting with '#' begins a
comment.  CPT numbers follow the flat-table convention with the target's
parents sorted ascending by id; an out-arc must be accompanied by a new
table for the peer (its parent set grows by the new node).  ``add_node``
without a ``cpt`` group of its own creates a pseudo-root carrying a
uniform placeholder until its predecessors arrive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import builder as _builder
from .builder import ReducedPolytree, RelevelRequired
from .errors import BackArcError, CyclicNetworkError, ScriptError
from .inference import (
    MessageState,
    belief,
    incorporate_new_node,
    propagate,
    refresh_after_change,
    retract_evidence,
    set_evidence,
)
from .layering import Verdict, check_arc_addition, layerize
from .model import Network


@dataclass
class ScriptCommand:
    kind: str
    line: int
    node: str = ""
    arity: int = 0
    labels: tuple[str, ...] = ()
    arcs: tuple[tuple[str, str], ...] = ()
    cpts: dict[str, tuple[float, ...]] = field(default_factory=dict)
    parent: str = ""
    child: str = ""
    table: tuple[float, ...] = ()
    label: str = ""


def _tokens(line: str) -> list[str]:
    out = []
    for token in line.split():
        if token.startswith("#"):
            break
        out.append(token)
    return out


def _parse_add_node(tokens: list[str], line_no: int) -> ScriptCommand:
    if len(tokens) < 3:
        raise ScriptError("add_node needs an id and a state count or label list", line_no)
    node = tokens[1]
    if tokens[2].isdigit():
        arity, labels = int(tokens[2]), ()
    else:
        labels = tuple(tokens[2].split(","))
        arity = len(labels)
    if arity < 2:
        raise ScriptError(f"node {node!r} needs at least 2 states", line_no)
    arcs: list[tuple[str, str]] = []
    cpts: dict[str, tuple[float, ...]] = {}
    i = 3
    while i < len(tokens):
        token = tokens[i]
        if token.startswith("in:") or token.startswith("out:"):
            direction, peer = token.split(":", 1)
            if not peer:
                raise ScriptError(f"arc token {token!r} has no peer", line_no)
            arcs.append((direction, peer))
            i += 1
        elif token == "cpt":
            if i + 2 >= len(tokens) + 1:
                raise ScriptError("cpt group needs a target and numbers", line_no)
            target = tokens[i + 1]
            numbers = []
            i += 2
            while i < len(tokens) and tokens[i] != "cpt" and ":" not in tokens[i]:
                try:
                    numbers.append(float(tokens[i]))
                except ValueError:
                    raise ScriptError(f"bad number {tokens[i]!r}", line_no) from None
                i += 1
            if not numbers:
                raise ScriptError(f"cpt group for {target!r} has no numbers", line_no)
            if target in cpts:
                raise ScriptError(f"duplicate cpt group for {target!r}", line_no)
            cpts[target] = tuple(numbers)
        else:
            raise ScriptError(f"unexpected token {token!r}", line_no)
    return ScriptCommand(
        "add_node", line_no, node=node, arity=arity, labels=labels,
        arcs=tuple(arcs), cpts=cpts,
    )


def parse_script_text(text: str) -> list[ScriptCommand]:
    commands: list[ScriptCommand] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        tokens = _tokens(raw_line)
        if not tokens:
            continue
        kind = tokens[0]
        if kind == "add_node":
            commands.append(_parse_add_node(tokens, line_no))
        elif kind == "add_arc":
            if len(tokens) < 4:
                raise ScriptError("add_arc needs parent, child and a new child table", line_no)
            try:
                table = tuple(float(t) for t in tokens[3:])
            except ValueError as exc:
                raise ScriptError(f"bad number in add_arc table: {exc}", line_no) from None
            commands.append(
                ScriptCommand("add_arc", line_no, parent=tokens[1], child=tokens[2], table=table)
            )
        elif kind == "set_evidence":
            if len(tokens) != 3:
                raise ScriptError("set_evidence needs a node and a state label", line_no)
            commands.append(ScriptCommand("set_evidence", line_no, node=tokens[1], label=tokens[2]))
        elif kind == "retract":
            if len(tokens) != 2:
                raise ScriptError("retract needs a node", line_no)
            commands.append(ScriptCommand("retract", line_no, node=tokens[1]))
        elif kind == "query":
            if len(tokens) != 2:
                raise ScriptError("query needs a node", line_no)
            commands.append(ScriptCommand("query", line_no, node=tokens[1]))
        elif kind == "checkpoint":
            if len(tokens) != 2:
                raise ScriptError("checkpoint needs a label", line_no)
            commands.append(ScriptCommand("checkpoint", line_no, label=tokens[1]))
        else:
            raise ScriptError(f"unknown command {kind!r}", line_no)
    return commands


def parse_script(path: str | Path) -> list[ScriptCommand]:
    return parse_script_text(Path(path).read_text(encoding="utf-8"))


class Session:
    """An incremental construction session: raw model, reduced polytree,
    message state, and the placement floors that anchor pseudo-roots."""

    def __init__(self):
        self.raw = Network()
        self.floors: dict[str, int] = {}
        self.rp: ReducedPolytree = ReducedPolytree()
        self.state: MessageState = propagate(self.rp, {})

    # -- helpers -------------------------------------------------------------

    def _resolve_state_index(self, node: str, label: str) -> int:
        var = self.rp.variables.get(node)
        if var is None:
            raise KeyError(f"unknown node {node!r}")
        if label in var.labels:
            return var.labels.index(label)
        raise KeyError(f"node {node!r} has no state {label!r}")

    def _rebuild(self) -> None:
        layered = layerize(self.raw, self.floors)
        self.rp = _builder.build(layered)
        self.state = propagate(self.rp, dict(self.state.evidence))

    def snapshot(self) -> tuple:
        """Comparable summary of the whole builder state (for rejection tests)."""
        return (
            tuple(sorted(self.rp.arcs)),
            tuple(sorted(self.rp.membership.items())),
            tuple(sorted(self.rp.node_levels.items())),
            tuple(sorted((k, v.tobytes()) for k, v in self.state.belief.items())),
            self.rp.op_counter,
        )

    # -- commands -------------------------------------------------------------

    def add_node(self, cmd: ScriptCommand) -> None:
        v = cmd.node
        if v in self.raw.nodes:
            raise ValueError(f"duplicate node id {v!r}")
        incoming = [peer for d, peer in cmd.arcs if d == "in"]
        outgoing = [peer for d, peer in cmd.arcs if d == "out"]
        for peer in (*incoming, *outgoing):
            if peer not in self.raw.nodes:
                raise KeyError(f"unknown peer {peer!r}")
        for target in cmd.cpts:
            if target != v and target not in outgoing:
                raise ValueError(f"cpt group for {target!r} matches no out-arc")
        if incoming and v not in cmd.cpts:
            raise ValueError(f"node {v!r} has incoming arcs and therefore needs a CPT")
        for peer in outgoing:
            if peer not in cmd.cpts:
                raise ValueError(f"out-arc to {peer!r} requires a replacement CPT for it")

        if not self.raw.nodes:
            if cmd.arcs:
                raise ValueError("the first node cannot reference peers")
            placement = 0
            verdict_kind = Verdict.ADMIT_AT_LEVEL
        else:
            verdict = check_arc_addition(self.rp.node_levels, incoming, outgoing)
            if verdict.verdict is Verdict.REJECT_BACK_ARC:
                raise BackArcError(verdict.out_min, verdict.in_max)
            placement = verdict.level
            verdict_kind = verdict.verdict

        # mutate the raw model
        self.raw.add_variable(v, cmd.arity, cmd.labels or None)
        for direction, peer in cmd.arcs:
            arc = (peer, v) if direction == "in" else (v, peer)
            self.raw.add_arc(*arc)
        if v in cmd.cpts:
            self.raw.set_cpt(v, tuple(sorted(incoming)), cmd.cpts[v])
        for peer in outgoing:
            old = self.raw.cpts.get(peer)
            old_parents = old.parents if old is not None else ()
            self.raw.set_cpt(peer, tuple(sorted((*old_parents, v))), cmd.cpts[peer])
        self.floors[v] = placement

        if verdict_kind is Verdict.ADMIT_WITH_NEW_LEVEL or not self.rp.rnodes:
            if not self.rp.rnodes and not cmd.arcs:
                _builder.add_node(self.rp, v, cmd.arity, dict(cmd.cpts), [], cmd.labels or None)
                self.state = incorporate_new_node(self.state, self.rp, v)
            else:
                self._rebuild()
            return
        try:
            _builder.add_node(self.rp, v, cmd.arity, dict(cmd.cpts), list(cmd.arcs), cmd.labels or None)
            self.state = incorporate_new_node(self.state, self.rp, v)
        except RelevelRequired:
            self._rebuild()

    def add_arc(self, cmd: ScriptCommand) -> None:
        parent, child = cmd.parent, cmd.child
        for end in (parent, child):
            if end not in self.raw.nodes:
                raise KeyError(f"unknown node {end!r}")
        if (parent, child) in self.raw.arcs:
            raise ValueError(f"arc ({parent!r}, {child!r}) already present")
        if self._reaches(child, parent):
            raise CyclicNetworkError(
                f"arc ({parent!r}, {child!r}) would create a directed cycle"
            )
        old = self.raw.cpts.get(child)
        old_parents = old.parents if old is not None else ()
        self.raw.add_arc(parent, child)
        self.raw.set_cpt(child, tuple(sorted((*old_parents, parent))), cmd.table)
        try:
            _builder.add_arc(self.rp, parent, child, np.asarray(cmd.table))
            self.state = refresh_after_change(self.state, self.rp)
        except RelevelRequired:
            self._rebuild()

    def _reaches(self, src: str, dst: str) -> bool:
        stack, seen = [src], {src}
        while stack:
            node = stack.pop()
            if node == dst:
                return True
            for p, c in self.raw.arcs:
                if p == node and c not in seen:
                    seen.add(c)
                    stack.append(c)
        return False

    def set_evidence(self, node: str, label: str) -> None:
        index = self._resolve_state_index(node, label)
        self.state = set_evidence(self.state, node, index)

    def retract(self, node: str) -> None:
        self.state = retract_evidence(self.state, node)

    def query(self, node: str) -> str:
        vec = belief(self.state, node)
        text = node + " " + " ".join(f"{x:.12f}" for x in vec)
        if self.state.is_provisional(node):
            text += " provisional"
        return text

    def checkpoint(self, label: str) -> str:
        if not self.rp.is_polytree():
            raise CyclicNetworkError(f"checkpoint {label!r}: reduced network is not a polytree")
        return f"checkpoint {label}"

    def against_batch(self) -> float:
        """Max per-entry deviation of the maintained beliefs from a fresh sweep."""
        fresh = propagate(self.rp, dict(self.state.evidence))
        dev = 0.0
        for rid in self.rp.rnodes:
            dev = max(dev, float(np.abs(fresh.belief[rid] - self.state.belief[rid]).max()))
        return dev

    def apply(self, cmd: ScriptCommand) -> list[str]:
        if cmd.kind == "add_node":
            self.add_node(cmd)
            return []
        if cmd.kind == "add_arc":
            self.add_arc(cmd)
            return []
        if cmd.kind == "set_evidence":
            self.set_evidence(cmd.node, cmd.label)
            return []
        if cmd.kind == "retract":
            self.retract(cmd.node)
            return []
        if cmd.kind == "query":
            return [self.query(cmd.node)]
        if cmd.kind == "checkpoint":
            return [self.checkpoint(cmd.label)]
        raise ScriptError(f"unknown command kind {cmd.kind!r}", cmd.line)
