"""Dialog tree model: node/edge types, parsing, validation, and graph queries.

A tree is a (possibly cyclic) directed graph of typed nodes. Every node offers
an ASK action (present its own text) plus one SKIP action per outgoing answer
edge. Logic nodes branch silently on stored variable values and are resolved
automatically whenever a skip lands on them.
"""

from __future__ import annotations

import json
import math
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

import numpy as np


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class UnknownNode(KeyError):
    pass


class MissingVariable(KeyError):
    """A logic condition references a variable with no value in the beliefstate."""


class Unreachable(ValueError):
    pass


class InvalidParams(ValueError):
    pass


class NodeKind(str, Enum):
    START = "start"
    DIALOG = "dialog"
    VARIABLE = "variable"
    INFORMATION = "information"
    LOGIC = "logic"


class CompareOp(str, Enum):
    EQ = "eq"
    NEQ = "neq"
    LT = "lt"
    LTE = "lte"
    GT = "gt"
    GTE = "gte"


_ORDER_OPS = {CompareOp.LT, CompareOp.LTE, CompareOp.GT, CompareOp.GTE}


@dataclass(frozen=True)
class Condition:
    """Comparison of a stored variable against a literal.

    For numeric variables with a unit table the literal is resolved to base
    units at parse time; `raw` keeps the original file value so serialization
    round-trips.
    """

    variable: str
    op: CompareOp
    value: Any
    raw: Any = None

    def holds(self, value: Any) -> bool:
        if self.op == CompareOp.EQ:
            return value == self.value
        if self.op == CompareOp.NEQ:
            return value != self.value
        if self.op == CompareOp.LT:
            return value < self.value
        if self.op == CompareOp.LTE:
            return value <= self.value
        if self.op == CompareOp.GT:
            return value > self.value
        return value >= self.value


@dataclass(frozen=True)
class AnswerEdge:
    edge_id: str
    prototype_text: str
    target: str
    condition: Condition | None = None


@dataclass(frozen=True)
class VariableSpec:
    name: str
    value_type: str  # "boolean" | "number" | "category"
    units: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Node:
    node_id: str
    kind: NodeKind
    text: str
    answers: tuple[AnswerEdge, ...] = ()
    faq_questions: tuple[str, ...] = ()
    variable: VariableSpec | None = None

    def default_edge(self) -> AnswerEdge:
        for edge in self.answers:
            if edge.condition is None:
                return edge
        raise ValidationError(f"logic node {self.node_id!r} has no default branch")


@dataclass(frozen=True)
class Action:
    """One policy choice at a node: ASK (edge None) or SKIP along an edge."""

    is_ask: bool
    edge: AnswerEdge | None = None


class DialogTree:
    """Validated, immutable dialog graph. max_depth/max_actions are recomputed
    on construction, never trusted from a file."""

    def __init__(self, start: str, nodes: Iterable[Node]):
        self.start = start
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.node_id in self.nodes:
                raise ValidationError(f"duplicate node id {node.node_id!r}")
            self.nodes[node.node_id] = node
        self._validate()
        self._distance = self._bfs_distances()
        self.max_depth = max(self._distance.values()) + 1
        self.max_actions = max(len(n.answers) for n in self.nodes.values()) + 1
        self._canonical_paths = self._bfs_canonical_paths()
        self.variables: dict[str, VariableSpec] = {
            n.variable.name: n.variable for n in self.nodes.values() if n.variable
        }
        self.variable_order: tuple[str, ...] = tuple(sorted(self.variables))

    # -- queries ---------------------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node id {node_id!r}") from None

    def actions_at(self, node_id: str) -> list[Action]:
        node = self.node(node_id)
        return [Action(is_ask=True)] + [Action(False, e) for e in node.answers]

    def depth_of(self, node_id: str) -> int:
        self.node(node_id)
        return self._distance[node_id]

    def evaluate_logic(self, node: Node, beliefstate: dict[str, Any]) -> str:
        """Target of the first condition-matching edge in file order, else the
        default branch. Raises MissingVariable if a referenced variable is unset."""
        if node.kind != NodeKind.LOGIC:
            raise ValueError(f"node {node.node_id!r} is not a logic node")
        default = None
        for edge in node.answers:
            if edge.condition is None:
                if default is None:
                    default = edge
                continue
            cond = edge.condition
            if cond.variable not in beliefstate:
                raise MissingVariable(cond.variable)
            if cond.holds(beliefstate[cond.variable]):
                return edge.target
        assert default is not None  # guaranteed by validation
        return default.target

    def resolve_entry(
        self, node_id: str, beliefstate: dict[str, Any]
    ) -> tuple[str, list[str]]:
        """Follow logic nodes from an entry point until a presentable node.

        Unset variables route to the default branch (the dialog must stay
        total even when the policy skips ahead of the variable question).
        Returns (final node id, ids of the logic nodes traversed).
        """
        trace: list[str] = []
        current = node_id
        while self.node(current).kind == NodeKind.LOGIC:
            if len(trace) > len(self.nodes):
                raise ValidationError(f"logic resolution loop at {node_id!r}")
            trace.append(current)
            node = self.nodes[current]
            try:
                current = self.evaluate_logic(node, beliefstate)
            except MissingVariable:
                current = node.default_edge().target
        return current, trace

    def shortest_constrained_path(
        self, start: str, goal: str, constraints: dict[str, Any]
    ) -> list[tuple[str, AnswerEdge]]:
        """Breadth-first shortest path where logic nodes follow the single
        branch forced by `constraints` (default branch when a variable is
        absent). Returns [(node id, edge taken)] excluding the goal itself."""
        self.node(start)
        self.node(goal)
        prev: dict[str, tuple[str, AnswerEdge]] = {}
        seen = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            if current == goal:
                break
            node = self.nodes[current]
            if node.kind == NodeKind.LOGIC:
                try:
                    forced = self.evaluate_logic(node, constraints)
                except MissingVariable:
                    forced = node.default_edge().target
                edges = [e for e in node.answers if e.target == forced][:1]
            else:
                edges = list(node.answers)
            for edge in edges:
                if edge.target not in seen:
                    seen.add(edge.target)
                    prev[edge.target] = (current, edge)
                    queue.append(edge.target)
        if goal != start and goal not in prev:
            raise Unreachable(f"no path from {start!r} to {goal!r} under constraints")
        path: list[tuple[str, AnswerEdge]] = []
        cursor = goal
        while cursor != start:
            node_id, edge = prev[cursor]
            path.append((node_id, edge))
            cursor = node_id
        path.reverse()
        return path

    def position_encoding(self, node_id: str) -> np.ndarray:
        """Fixed-width bit vector of the canonical shortest path from the start.

        Each level stores the taken action's index (as in actions_at: ASK is 0,
        skip edges count from 1) in ceil(log2(max_actions)) bits, MSB first;
        unused levels stay zero. Ties between equal-length paths are broken by
        the lowest index sequence.
        """
        indices = self._canonical_paths.get(node_id)
        if indices is None:
            raise UnknownNode(f"node {node_id!r} not reachable from start")
        bits_per_level = max(1, math.ceil(math.log2(self.max_actions))) if self.max_actions > 1 else 0
        vec = np.zeros(self.max_depth * bits_per_level, dtype=np.float64)
        for level, action_index in enumerate(indices):
            for b in range(bits_per_level):
                bit = (action_index >> (bits_per_level - 1 - b)) & 1
                vec[level * bits_per_level + b] = float(bit)
        return vec

    # -- construction helpers --------------------------------------------

    def _validate(self) -> None:
        if self.start not in self.nodes:
            raise ValidationError(f"start node {self.start!r} missing")
        starts = [n for n in self.nodes.values() if n.kind == NodeKind.START]
        if len(starts) != 1 or starts[0].node_id != self.start:
            raise ValidationError("exactly one start-kind node matching `start` required")
        declared: dict[str, str] = {}
        for node in self.nodes.values():
            if node.variable is not None:
                if node.kind != NodeKind.VARIABLE:
                    raise ValidationError(f"node {node.node_id!r}: variable spec on non-variable node")
                if node.variable.name in declared:
                    raise ValidationError(f"variable {node.variable.name!r} declared twice")
                declared[node.variable.name] = node.node_id
        for node in self.nodes.values():
            self._validate_node(node, declared)
        reachable = self._reach(self.start)
        missing = sorted(set(self.nodes) - reachable)
        if missing:
            raise ValidationError(f"nodes unreachable from start: {missing}")
        self._check_logic_loops()
        for node in self.nodes.values():
            for edge in node.answers:
                if edge.condition is not None:
                    var_node = declared[edge.condition.variable]
                    if node.node_id not in self._reach(var_node):
                        raise ValidationError(
                            f"edge {edge.edge_id!r}: variable {edge.condition.variable!r} "
                            f"is not declared upstream of logic node {node.node_id!r}"
                        )

    def _validate_node(self, node: Node, declared: dict[str, str]) -> None:
        nid = node.node_id
        edge_ids = [e.edge_id for e in node.answers]
        if len(edge_ids) != len(set(edge_ids)):
            raise ValidationError(f"node {nid!r}: duplicate edge ids")
        for edge in node.answers:
            if edge.target not in self.nodes:
                raise ValidationError(f"edge {edge.edge_id!r}: unknown target {edge.target!r}")
        if node.kind == NodeKind.LOGIC:
            if node.text:
                raise ValidationError(f"logic node {nid!r} must have empty text")
            defaults = [e for e in node.answers if e.condition is None]
            if len(defaults) != 1:
                raise ValidationError(f"logic node {nid!r}: exactly one default branch required")
            for edge in node.answers:
                if edge.condition is not None:
                    cond = edge.condition
                    if cond.variable not in declared:
                        raise ValidationError(
                            f"edge {edge.edge_id!r}: unknown variable {cond.variable!r}"
                        )
        else:
            for edge in node.answers:
                if edge.condition is not None:
                    raise ValidationError(
                        f"edge {edge.edge_id!r}: condition on non-logic node {nid!r}"
                    )
        if node.kind in (NodeKind.DIALOG, NodeKind.VARIABLE, NodeKind.START):
            if not node.text:
                raise ValidationError(f"{node.kind.value} node {nid!r} must have text")
        if node.kind == NodeKind.VARIABLE and node.variable is None:
            raise ValidationError(f"variable node {nid!r} missing variable spec")
        if node.kind == NodeKind.INFORMATION and len(node.answers) > 1:
            raise ValidationError(f"information node {nid!r} may have at most one outgoing edge")
        if node.faq_questions and node.kind != NodeKind.INFORMATION:
            raise ValidationError(f"node {nid!r}: FAQ questions only allowed on information nodes")
        for edge in node.answers:
            if not edge.prototype_text:
                target_kind = self.nodes[edge.target].kind
                if node.kind not in (NodeKind.LOGIC, NodeKind.INFORMATION) and target_kind not in (
                    NodeKind.INFORMATION,
                    NodeKind.LOGIC,
                ):
                    raise ValidationError(
                        f"edge {edge.edge_id!r}: empty answer prototype on a user-facing edge"
                    )

    def _reach(self, root: str) -> set[str]:
        seen = {root}
        queue = deque([root])
        while queue:
            for edge in self.nodes[queue.popleft()].answers:
                if edge.target not in seen:
                    seen.add(edge.target)
                    queue.append(edge.target)
        return seen

    def _check_logic_loops(self) -> None:
        # a cycle made purely of logic nodes can never terminate auto-resolution
        state: dict[str, int] = {}

        def visit(nid: str, stack: list[str]) -> None:
            state[nid] = 1
            stack.append(nid)
            for edge in self.nodes[nid].answers:
                tgt = edge.target
                if self.nodes[tgt].kind != NodeKind.LOGIC:
                    continue
                if state.get(tgt) == 1:
                    raise ValidationError(f"cycle of logic nodes through {tgt!r}")
                if tgt not in state:
                    visit(tgt, stack)
            stack.pop()
            state[nid] = 2

        for node in self.nodes.values():
            if node.kind == NodeKind.LOGIC and node.node_id not in state:
                visit(node.node_id, [])

    def _bfs_distances(self) -> dict[str, int]:
        dist = {self.start: 0}
        queue = deque([self.start])
        while queue:
            current = queue.popleft()
            for edge in self.nodes[current].answers:
                if edge.target not in dist:
                    dist[edge.target] = dist[current] + 1
                    queue.append(edge.target)
        return dist

    def _bfs_canonical_paths(self) -> dict[str, tuple[int, ...]]:
        """Per node, the action-index sequence of its canonical shortest path.

        FIFO BFS expanding edges in file order discovers every node through the
        lexicographically smallest index sequence among its shortest paths.
        """
        paths: dict[str, tuple[int, ...]] = {self.start: ()}
        queue = deque([self.start])
        while queue:
            current = queue.popleft()
            base = paths[current]
            for pos, edge in enumerate(self.nodes[current].answers, start=1):
                if edge.target not in paths:
                    paths[edge.target] = base + (pos,)
                    queue.append(edge.target)
        return paths


# -- value handling --------------------------------------------------------

_NUMBER_RE = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*([^\s\d]\S*)?\s*$")

_TRUE_WORDS = {"true", "yes", "ja", "y", "1"}
_FALSE_WORDS = {"false", "no", "nein", "n", "0"}


def parse_value(text: str, spec: VariableSpec) -> Any:
    """Interpret a user utterance as a typed variable value (numbers in base units)."""
    stripped = text.strip()
    if spec.value_type == "boolean":
        lowered = stripped.lower()
        if lowered in _TRUE_WORDS:
            return True
        if lowered in _FALSE_WORDS:
            return False
        raise ValueError(f"cannot read boolean from {text!r}")
    if spec.value_type == "number":
        match = _NUMBER_RE.match(stripped)
        if not match:
            raise ValueError(f"cannot read number from {text!r}")
        magnitude = float(match.group(1))
        unit = match.group(2)
        if unit:
            key = unit.lower()
            if key not in spec.units:
                raise ValueError(f"unknown unit {unit!r} for variable {spec.name!r}")
            magnitude *= spec.units[key]
        return magnitude
    return stripped


def render_value(value: Any, spec: VariableSpec, rng=None) -> str:
    """Render a typed value as user text, optionally in a random display unit."""
    if spec.value_type == "boolean":
        return "true" if value else "false"
    if spec.value_type == "number":
        units = [(u, m) for u, m in spec.units.items() if m > 0]
        if units and rng is not None:
            candidates = [(u, m) for u, m in units if float(value) % m == 0]
            if candidates:
                unit, mult = candidates[int(rng.integers(len(candidates)))]
                return f"{int(value // mult)} {unit}"
        if float(value) == int(value):
            return str(int(value))
        return str(value)
    return str(value)


def _resolve_literal(raw: Any, op: CompareOp, spec: VariableSpec | None) -> Any:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str) and spec is not None:
        if spec.value_type == "number":
            return parse_value(raw, spec)
        if spec.value_type == "boolean":
            return parse_value(raw, spec)
    return raw


# -- parsing / serialization ------------------------------------------------

_KIND_ALIASES = {k.value: k for k in NodeKind}


def parse_tree(document: str | dict) -> DialogTree:
    """Parse the native tree format (see docs/tree-format.md) or a designer
    export (see parse_designer_export), validating all invariants."""
    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed document: {exc}") from exc
    else:
        data = document
    if not isinstance(data, dict):
        raise ParseError("top-level value must be an object")
    if "connections" in data and "start" not in data:
        return parse_designer_export(data)
    if "start" not in data or "nodes" not in data:
        raise ParseError("missing required `start` / `nodes` keys")
    return _build_tree(data["start"], data["nodes"])


def _build_tree(start: Any, raw_nodes: Any) -> DialogTree:
    if not isinstance(raw_nodes, list):
        raise ParseError("`nodes` must be a list")
    specs: dict[str, VariableSpec] = {}
    staged: list[dict] = []
    for raw in raw_nodes:
        if not isinstance(raw, dict) or "id" not in raw or "kind" not in raw:
            raise ParseError(f"node record missing id/kind: {raw!r}")
        kind = _KIND_ALIASES.get(str(raw["kind"]).lower())
        if kind is None:
            raise ParseError(f"node {raw['id']!r}: unknown kind {raw['kind']!r}")
        variable = None
        if raw.get("variable") is not None:
            v = raw["variable"]
            try:
                variable = VariableSpec(
                    name=str(v["name"]),
                    value_type=str(v["type"]),
                    units={str(k).lower(): float(m) for k, m in (v.get("units") or {}).items()},
                )
            except KeyError as exc:
                raise ParseError(f"node {raw['id']!r}: variable spec missing {exc}") from exc
            if variable.value_type not in ("boolean", "number", "category"):
                raise ParseError(
                    f"node {raw['id']!r}: bad variable type {variable.value_type!r}"
                )
            specs[variable.name] = variable
        staged.append({"raw": raw, "kind": kind, "variable": variable})
    nodes = []
    for item in staged:
        raw, kind = item["raw"], item["kind"]
        answers = []
        for edge_raw in raw.get("answers") or []:
            if "id" not in edge_raw or "target" not in edge_raw:
                raise ParseError(f"node {raw['id']!r}: edge record missing id/target")
            condition = None
            if edge_raw.get("condition") is not None:
                c = edge_raw["condition"]
                try:
                    op = CompareOp(str(c["op"]).lower())
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"edge {edge_raw['id']!r}: bad condition op") from exc
                var_name = str(c.get("var", ""))
                raw_literal = c.get("value")
                spec = specs.get(var_name)
                value = _resolve_literal(raw_literal, op, spec)
                if spec is not None and spec.value_type in ("boolean", "category") and op in _ORDER_OPS:
                    raise ParseError(
                        f"edge {edge_raw['id']!r}: ordering comparison on {spec.value_type} variable"
                    )
                condition = Condition(variable=var_name, op=op, value=value, raw=raw_literal)
            answers.append(
                AnswerEdge(
                    edge_id=str(edge_raw["id"]),
                    prototype_text=str(edge_raw.get("text", "")),
                    target=str(edge_raw["target"]),
                    condition=condition,
                )
            )
        nodes.append(
            Node(
                node_id=str(raw["id"]),
                kind=kind,
                text=str(raw.get("text", "")),
                answers=tuple(answers),
                faq_questions=tuple(str(q) for q in (raw.get("faq") or [])),
                variable=item["variable"],
            )
        )
    return DialogTree(start=str(start), nodes=nodes)


def serialize_tree(tree: DialogTree) -> dict:
    """Inverse of parse_tree for validated trees (parse(serialize(t)) == t)."""
    nodes = []
    for node in tree.nodes.values():
        raw: dict[str, Any] = {"id": node.node_id, "kind": node.kind.value, "text": node.text}
        if node.answers:
            answers = []
            for edge in node.answers:
                e: dict[str, Any] = {
                    "id": edge.edge_id,
                    "text": edge.prototype_text,
                    "target": edge.target,
                }
                if edge.condition is not None:
                    e["condition"] = {
                        "var": edge.condition.variable,
                        "op": edge.condition.op.value,
                        "value": edge.condition.raw
                        if edge.condition.raw is not None
                        else edge.condition.value,
                    }
                answers.append(e)
            raw["answers"] = answers
        if node.faq_questions:
            raw["faq"] = list(node.faq_questions)
        if node.variable is not None:
            v: dict[str, Any] = {"name": node.variable.name, "type": node.variable.value_type}
            if node.variable.units:
                v["units"] = dict(node.variable.units)
            raw["variable"] = v
        nodes.append(raw)
    return {"start": tree.start, "nodes": nodes}


_DESIGNER_KINDS = {
    "startnode": NodeKind.START,
    "dialognode": NodeKind.DIALOG,
    "userinputnode": NodeKind.VARIABLE,
    "infonode": NodeKind.INFORMATION,
    "logicnode": NodeKind.LOGIC,
}


def parse_designer_export(data: dict) -> DialogTree:
    """Adapter for graphical-designer exports: flat node list plus a separate
    `connections` list; node payloads under `data`. See docs/tree-format.md."""
    try:
        raw_nodes = data["nodes"]
        raw_connections = data.get("connections", [])
    except (TypeError, KeyError) as exc:
        raise ParseError(f"designer export missing nodes: {exc}") from exc
    by_source: dict[tuple[str, str], str] = {}
    for conn in raw_connections:
        try:
            by_source[(str(conn["source"]), str(conn["sourceHandle"]))] = str(conn["target"])
        except KeyError as exc:
            raise ParseError(f"connection record missing {exc}") from exc
    native_nodes = []
    start_id = None
    for raw in raw_nodes:
        kind = _DESIGNER_KINDS.get(str(raw.get("type", "")).lower())
        if kind is None:
            raise ParseError(f"node {raw.get('id')!r}: unknown designer type {raw.get('type')!r}")
        nid = str(raw["id"])
        if kind == NodeKind.START:
            start_id = nid
        payload = raw.get("data") or {}
        answers = []
        for ans in payload.get("answers") or []:
            handle = str(ans["id"])
            target = by_source.get((nid, handle))
            if target is None:
                raise ParseError(f"edge {handle!r}: no connection from node {nid!r}")
            entry: dict[str, Any] = {"id": handle, "text": ans.get("text", ""), "target": target}
            if ans.get("condition") is not None:
                entry["condition"] = ans["condition"]
            answers.append(entry)
        native: dict[str, Any] = {
            "id": nid,
            "kind": kind.value,
            "text": payload.get("text", ""),
            "answers": answers,
        }
        if payload.get("questions"):
            native["faq"] = payload["questions"]
        if payload.get("variable"):
            native["variable"] = payload["variable"]
        native_nodes.append(native)
    if start_id is None:
        raise ParseError("designer export has no start node")
    return _build_tree(start_id, native_nodes)


def load_tree(path: str) -> DialogTree:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tree(fh.read())


def tree_fingerprint(tree: DialogTree) -> str:
    import hashlib

    payload = json.dumps(serialize_tree(tree), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:16]
