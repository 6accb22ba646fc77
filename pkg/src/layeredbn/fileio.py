"""Network file format: a small YAML document with three top-level keys.

    variables:
      - {id: A, states: ["0", "1"]}
    arcs:
      - [A, B]
    cpts:
      A: {parents: [], table: [0.6, 0.4]}
      B: {parents: [A], table: [0.9, 0.1, 0.2, 0.8]}

CPT tables are flat: rows enumerate parent assignments with the last
declared parent varying fastest, child states within a row.  Parsing works
on the YAML compose tree so every complaint carries a line and column.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import FormatError
from .model import Cpt, Network, NetworkNode, Variable

import numpy as np


def _fail(node: yaml.Node | None, message: str) -> "FormatError":
    if node is not None and node.start_mark is not None:
        mark = node.start_mark
        return FormatError(message, mark.line + 1, mark.column + 1)
    return FormatError(message)


def _expect(node: yaml.Node, cls: type, what: str) -> yaml.Node:
    if not isinstance(node, cls):
        raise _fail(node, f"expected {what}")
    return node


def _scalar(node: yaml.Node, what: str) -> str:
    _expect(node, yaml.ScalarNode, what)
    return str(node.value)


def _float(node: yaml.Node) -> float:
    text = _scalar(node, "a number")
    try:
        return float(text)
    except ValueError:
        raise _fail(node, f"not a number: {text!r}") from None


def load_network_text(text: str, filename: str = "<network>") -> Network:
    try:
        root = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else 1
        column = mark.column + 1 if mark else 1
        raise FormatError(f"{exc.problem or exc}", line, column) from None
    if root is None:
        raise FormatError("empty document")
    _expect(root, yaml.MappingNode, "a mapping with keys variables/arcs/cpts")

    sections: dict[str, yaml.Node] = {}
    for key_node, value_node in root.value:
        key = _scalar(key_node, "a section name")
        if key not in ("variables", "arcs", "cpts"):
            raise _fail(key_node, f"unknown section {key!r}")
        sections[key] = value_node
    for required in ("variables", "arcs", "cpts"):
        if required not in sections:
            raise _fail(root, f"missing section {required!r}")

    net = Network()

    vars_node = _expect(sections["variables"], yaml.SequenceNode, "a list of variables")
    for item in vars_node.value:
        _expect(item, yaml.MappingNode, "a variable mapping {id, states}")
        fields = {_scalar(k, "a field name"): v for k, v in item.value}
        if "id" not in fields or "states" not in fields:
            raise _fail(item, "variable needs 'id' and 'states'")
        node_id = _scalar(fields["id"], "a node id")
        states_node = _expect(fields["states"], yaml.SequenceNode, "a list of state labels")
        labels = tuple(_scalar(s, "a state label") for s in states_node.value)
        if node_id in net.nodes:
            raise _fail(fields["id"], f"duplicate variable {node_id!r}")
        if len(labels) < 2:
            raise _fail(states_node, f"variable {node_id!r} needs at least 2 states")
        if len(set(labels)) != len(labels):
            raise _fail(states_node, f"variable {node_id!r} has duplicate state labels")
        net.nodes[node_id] = NetworkNode(Variable(node_id, len(labels), labels))

    arcs_node = _expect(sections["arcs"], yaml.SequenceNode, "a list of [parent, child] pairs")
    for item in arcs_node.value:
        _expect(item, yaml.SequenceNode, "an arc pair [parent, child]")
        if len(item.value) != 2:
            raise _fail(item, "an arc needs exactly two endpoints")
        parent = _scalar(item.value[0], "a node id")
        child = _scalar(item.value[1], "a node id")
        net.arcs.add((parent, child))

    cpts_node = _expect(sections["cpts"], yaml.MappingNode, "a mapping of node id to CPT")
    for key_node, value_node in cpts_node.value:
        child = _scalar(key_node, "a node id")
        _expect(value_node, yaml.MappingNode, "a CPT mapping {parents, table}")
        fields = {_scalar(k, "a field name"): v for k, v in value_node.value}
        if "parents" not in fields or "table" not in fields:
            raise _fail(value_node, f"CPT for {child!r} needs 'parents' and 'table'")
        parents_node = _expect(fields["parents"], yaml.SequenceNode, "a list of parents")
        parents = tuple(_scalar(p, "a node id") for p in parents_node.value)
        table_node = _expect(fields["table"], yaml.SequenceNode, "a list of numbers")
        table = np.array([_float(x) for x in table_node.value], dtype=np.float64)
        if child in net.cpts:
            raise _fail(key_node, f"duplicate CPT for {child!r}")
        net.cpts[child] = Cpt(child, parents, table)

    return net


def load_network(path: str | Path) -> Network:
    path = Path(path)
    return load_network_text(path.read_text(encoding="utf-8"), str(path))


def _quote(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def format_network(net: Network) -> str:
    """Deterministic textual form (sorted nodes and arcs)."""
    lines = [
        "# discrete belief network",
        "# cpt tables are flat: rows over parent assignments (last parent",
        "# varying fastest), child states within each row",
        "variables:",
    ]
    for node_id in sorted(net.nodes):
        var = net.nodes[node_id].var
        labels = ", ".join(_quote(l) for l in var.labels)
        lines.append(f"  - {{id: {_quote(node_id)}, states: [{labels}]}}")
    lines.append("arcs:")
    for parent, child in sorted(net.arcs):
        lines.append(f"  - [{_quote(parent)}, {_quote(child)}]")
    lines.append("cpts:")
    for node_id in sorted(net.cpts):
        cpt = net.cpts[node_id]
        parents = ", ".join(_quote(p) for p in cpt.parents)
        table = ", ".join(repr(float(x)) for x in cpt.table)
        lines.append(f"  {_quote(node_id)}: {{parents: [{parents}], table: [{table}]}}")
    return "\n".join(lines) + "\n"


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(format_network(net), encoding="utf-8")
