"""Rule-based user simulator generating guided and free dialogs.

Guided dialogs model exploratory users: the goal is one answer edge of the
current node, resampled after every node transition, and the policy is
rewarded for asking right after a correct skip (+2) and for skipping to the
goal right after asking (+3). Free dialogs model users with one fixed
information goal: every turn costs -1, asking a question off the stored goal
path costs an extra -4, and presenting the goal pays 4 x tree depth.

A dialog stops after 50 turns, when the goal is presented, when the same node
is presented three times, or when a leaf has been presented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .graph import (
    Action,
    AnswerEdge,
    CompareOp,
    Condition,
    DialogTree,
    Node,
    NodeKind,
    render_value,
)
from .synth import UtteranceCorpus


class NoEligibleGoal(ValueError):
    pass


class SessionClosed(RuntimeError):
    pass


class DialogMode(str, Enum):
    GUIDED = "guided"
    FREE = "free"


class DoneReason(str, Enum):
    MAX_TURNS = "max_turns"
    GOAL_PRESENTED = "goal_presented"
    PATIENCE_EXHAUSTED = "patience_exhausted"
    LEAF_REACHED = "leaf_reached"


@dataclass(frozen=True)
class RewardConstants:
    guided_ask_after_skip: float = 2.0
    guided_correct_skip_after_ask: float = 3.0
    guided_step: float = -1.0
    free_step: float = -1.0
    free_offpath_ask: float = -4.0
    free_goal_per_depth: float = 4.0

    def free_goal(self, tree: DialogTree) -> float:
        return self.free_goal_per_depth * tree.max_depth


@dataclass(frozen=True)
class SimulatorConfig:
    rewards: RewardConstants = RewardConstants()
    max_turns: int = 50
    patience: int = 3
    guided_prob: float = 0.5
    split: str = "train"


@dataclass
class TurnRecord:
    turn: int
    node: str
    action: str  # "ask" | "skip"
    edge: str | None
    landed: str
    utterance: str | None
    reward: float
    done: bool
    done_reason: str | None
    goal_edge: str | None  # guided turn-goal before the action
    predicted_mode: str | None = None

    def to_json(self) -> dict:
        return {
            "record": "turn",
            "turn": self.turn,
            "node": self.node,
            "action": self.action,
            "edge": self.edge,
            "landed": self.landed,
            "utterance": self.utterance,
            "reward": self.reward,
            "done": self.done,
            "done_reason": self.done_reason,
            "goal_edge": self.goal_edge,
            "predicted_mode": self.predicted_mode,
        }


# -- variable value sampling -------------------------------------------------


def variable_literals(tree: DialogTree, variable: str) -> list[Any]:
    return [
        edge.condition.value
        for node in tree.nodes.values()
        for edge in node.answers
        if edge.condition is not None and edge.condition.variable == variable
    ]


def _numeric_ceiling(tree: DialogTree, variable: str) -> int:
    literals = [float(v) for v in variable_literals(tree, variable)]
    return int(max(literals, default=10.0) * 2) + 10


def category_labels(tree: DialogTree, variable: str) -> list[str]:
    labels = sorted({str(v) for v in variable_literals(tree, variable)})
    return labels + ["other"]


def sample_variable_value(tree: DialogTree, variable: str, rng: np.random.Generator) -> Any:
    """A uniformly random legal value for the variable."""
    spec = tree.variables[variable]
    if spec.value_type == "boolean":
        return bool(rng.integers(2))
    if spec.value_type == "number":
        return float(rng.integers(0, _numeric_ceiling(tree, variable) + 1))
    labels = category_labels(tree, variable)
    return labels[int(rng.integers(len(labels)))]


class _Requirements:
    """Conjunction of condition outcomes on one variable, solvable by sampling."""

    def __init__(self) -> None:
        self.items: list[tuple[Condition, bool]] = []

    def add(self, cond: Condition, must_hold: bool) -> None:
        self.items.append((cond, must_hold))

    def solve(self, tree: DialogTree, variable: str, rng: np.random.Generator) -> tuple[bool, Any]:
        spec = tree.variables[variable]
        if spec.value_type == "boolean":
            allowed = [v for v in (True, False) if self._ok(v)]
        elif spec.value_type == "category":
            allowed = [v for v in category_labels(tree, variable) if self._ok(v)]
        else:
            return self._solve_numeric(tree, variable, rng)
        if not allowed:
            return False, None
        return True, allowed[int(rng.integers(len(allowed)))]

    def _ok(self, value: Any) -> bool:
        return all(cond.holds(value) == must for cond, must in self.items)

    def _solve_numeric(
        self, tree: DialogTree, variable: str, rng: np.random.Generator
    ) -> tuple[bool, Any]:
        lo, hi = 0, _numeric_ceiling(tree, variable)
        excluded: set[float] = set()
        pinned: float | None = None
        for cond, must in self.items:
            v = float(cond.value)
            op = cond.op
            if not must:
                op = {
                    CompareOp.EQ: CompareOp.NEQ,
                    CompareOp.NEQ: CompareOp.EQ,
                    CompareOp.LT: CompareOp.GTE,
                    CompareOp.GTE: CompareOp.LT,
                    CompareOp.LTE: CompareOp.GT,
                    CompareOp.GT: CompareOp.LTE,
                }[op]
            if op == CompareOp.EQ:
                if pinned is not None and pinned != v:
                    return False, None
                pinned = v
            elif op == CompareOp.NEQ:
                excluded.add(v)
            elif op == CompareOp.LT:
                hi = min(hi, math.ceil(v) - 1 if v == int(v) else math.floor(v))
            elif op == CompareOp.LTE:
                hi = min(hi, math.floor(v))
            elif op == CompareOp.GT:
                lo = max(lo, math.floor(v) + 1)
            else:  # GTE
                lo = max(lo, math.ceil(v))
        if pinned is not None:
            ok = lo <= pinned <= hi and pinned not in excluded
            return (True, pinned) if ok else (False, None)
        if lo > hi:
            return False, None
        candidates = [v for v in range(lo, hi + 1) if float(v) not in excluded]
        if not candidates:
            return False, None
        return True, float(candidates[int(rng.integers(len(candidates)))])


# -- free-mode goal/path sampling ---------------------------------------------


def eligible_free_goals(tree: DialogTree) -> list[str]:
    return sorted(
        nid
        for nid, node in tree.nodes.items()
        if node.kind == NodeKind.INFORMATION and node.faq_questions
    )


def _enumerate_paths(tree: DialogTree, goal: str, max_extra: int = 4, cap: int = 512):
    """Simple paths from start to goal grouped by length, shortest group first."""
    try:
        base = tree.depth_of(goal)
    except KeyError:
        return
    limit = base + max_extra
    groups: dict[int, list[list[tuple[str, AnswerEdge]]]] = {}
    count = 0
    stack: list[tuple[str, list[tuple[str, AnswerEdge]], set[str]]] = [
        (tree.start, [], {tree.start})
    ]
    while stack and count < cap:
        current, path, seen = stack.pop()
        if current == goal:
            groups.setdefault(len(path), []).append(path)
            count += 1
            continue
        if len(path) >= limit:
            continue
        for edge in reversed(tree.nodes[current].answers):
            if edge.target not in seen:
                stack.append((edge.target, path + [(current, edge)], seen | {edge.target}))
    for length in sorted(groups):
        yield groups[length]


def _path_requirements(
    tree: DialogTree, path: list[tuple[str, AnswerEdge]]
) -> dict[str, _Requirements] | None:
    """Per-variable requirements forcing each on-path logic node onto the path,
    or None when the path cannot be realized by any constraint assignment."""
    filled: set[str] = set()
    requirements: dict[str, _Requirements] = {}
    for node_id, edge in path:
        node = tree.nodes[node_id]
        if node.kind == NodeKind.VARIABLE and node.variable is not None:
            filled.add(node.variable.name)
            continue
        if node.kind != NodeKind.LOGIC:
            continue
        chosen = node.answers.index(edge)
        chosen_cond = edge.condition
        if chosen_cond is not None:
            if chosen_cond.variable not in filled:
                return None
            requirements.setdefault(chosen_cond.variable, _Requirements()).add(chosen_cond, True)
        for idx, other in enumerate(node.answers):
            cond = other.condition
            if cond is None or idx == chosen:
                continue
            if chosen_cond is not None and idx > chosen:
                continue  # first-match semantics: later branches are irrelevant
            if cond.variable in filled:
                requirements.setdefault(cond.variable, _Requirements()).add(cond, False)
    return requirements


def sample_goal_path(
    tree: DialogTree, goal: str, rng: np.random.Generator
) -> tuple[list[tuple[str, AnswerEdge]], dict[str, Any]] | None:
    """Pick uniformly among the shortest realizable paths to the goal and draw
    constraint values for every variable node along it."""
    for group in _enumerate_paths(tree, goal):
        annotated = []
        for path in group:
            reqs = _path_requirements(tree, path)
            if reqs is not None:
                annotated.append((path, reqs))
        if not annotated:
            continue
        path, reqs = annotated[int(rng.integers(len(annotated)))]
        constraints: dict[str, Any] = {}
        feasible = True
        for variable in sorted(reqs):
            ok, value = reqs[variable].solve(tree, variable, rng)
            if not ok:
                feasible = False
                break
            constraints[variable] = value
        if not feasible:
            continue
        for node_id, _ in path:
            node = tree.nodes[node_id]
            if node.kind == NodeKind.VARIABLE and node.variable is not None:
                if node.variable.name not in constraints:
                    constraints[node.variable.name] = sample_variable_value(
                        tree, node.variable.name, rng
                    )
        return path, constraints
    return None


# -- the session ---------------------------------------------------------------


@dataclass
class TurnOutcome:
    utterance: str | None
    reward: float
    done: bool
    done_reason: DoneReason | None


class DialogSession:
    """One simulated dialog; all randomness comes from the supplied generator."""

    def __init__(
        self,
        tree: DialogTree,
        corpus: UtteranceCorpus,
        rng: np.random.Generator,
        config: SimulatorConfig = SimulatorConfig(),
        mode: DialogMode | None = None,
    ):
        self.tree = tree
        self.corpus = corpus
        self.rng = rng
        self.config = config
        if mode is None:
            mode = DialogMode.GUIDED if rng.random() < config.guided_prob else DialogMode.FREE
        self.mode = mode
        self.current = tree.start
        self.beliefstate: dict[str, Any] = {}
        self.turn_count = 0
        self.ask_counts: dict[str, int] = {tree.start: 1}  # the greeting presents start
        self.last_sys_act = "ask"
        self.done = False
        self.done_reason: DoneReason | None = None
        self.records: list[TurnRecord] = []
        self.goal_fail = False
        self.pending_ask: str | None = None

        self.goal: str | None = None
        self.goal_path: list[tuple[str, AnswerEdge]] = []
        self.constraints: dict[str, Any] = {}
        self.on_path: set[str] = set()
        self._path_next: dict[str, AnswerEdge] = {}
        self.goal_edge: AnswerEdge | None = None

        if mode == DialogMode.GUIDED:
            edges = tree.nodes[tree.start].answers
            if not edges:
                raise NoEligibleGoal("start node has no answer edges")
            self.goal_edge = edges[int(rng.integers(len(edges)))]
            self.initial_utterance = self._answer_text(self.goal_edge)
        else:
            goals = eligible_free_goals(tree)
            if not goals:
                raise NoEligibleGoal("no information node carries FAQ questions")
            order = rng.permutation(len(goals))
            chosen = None
            for idx in order:
                result = sample_goal_path(tree, goals[int(idx)], rng)
                if result is not None:
                    chosen = (goals[int(idx)], result)
                    break
            if chosen is None:
                raise NoEligibleGoal("no FAQ-bearing node is reachable under any constraints")
            self.goal, (self.goal_path, self.constraints) = chosen
            self.on_path = {nid for nid, _ in self.goal_path} | {self.goal}
            self._path_next = {nid: edge for nid, edge in self.goal_path}
            questions = corpus.faq_texts(self.goal, config.split)
            self.initial_utterance = questions[int(rng.integers(len(questions)))]

        self.history: list[tuple[str, str]] = [
            ("sys", tree.nodes[tree.start].text),
            ("usr", self.initial_utterance),
        ]

    # -- helpers --

    def _answer_text(self, edge: AnswerEdge) -> str:
        texts = self.corpus.answer_texts(edge.edge_id, self.config.split)
        if not texts:
            texts = [edge.prototype_text]
        return texts[int(self.rng.integers(len(texts)))]

    def _variable_utterance(self, node: Node, value: Any) -> str:
        assert node.variable is not None
        self.beliefstate[node.variable.name] = value
        return render_value(value, node.variable, self.rng)

    def _resample_guided_goal(self) -> None:
        edges = self.tree.nodes[self.current].answers
        self.goal_edge = edges[int(self.rng.integers(len(edges)))] if edges else None

    def _finish(self, reason: DoneReason) -> None:
        self.done = True
        self.done_reason = reason

    # -- the core transition --

    def respond(self, action: Action) -> TurnOutcome:
        """Advance the dialog one system action; returns the user's reaction."""
        if self.done:
            raise SessionClosed("dialog already terminated")
        self.turn_count += 1
        node = self.tree.nodes[self.current]
        pre_node = self.current
        pre_goal_edge = self.goal_edge.edge_id if self.goal_edge else None
        utterance: str | None = None

        if action.is_ask:
            edge_id = None
            self.ask_counts[pre_node] = self.ask_counts.get(pre_node, 0) + 1
            if self.mode == DialogMode.FREE:
                reward, utterance = self._free_ask(node)
            else:
                reward, utterance = self._guided_ask(node)
            self.history.append(("sys", node.text))
            if utterance is not None:
                self.history.append(("usr", utterance))
            if not self.done and self.ask_counts[pre_node] >= self.config.patience:
                self._finish(DoneReason.PATIENCE_EXHAUSTED)
            self.last_sys_act = "ask"
        else:
            assert action.edge is not None and action.edge in node.answers
            edge_id = action.edge.edge_id
            landed, _ = self.tree.resolve_entry(action.edge.target, self.beliefstate)
            if self.mode == DialogMode.FREE:
                reward = self.config.rewards.free_step
            else:
                correct = (
                    self.goal_edge is not None
                    and action.edge.edge_id == self.goal_edge.edge_id
                )
                if not correct:
                    self.goal_fail = True
                if self.pending_ask is not None:
                    self.goal_fail = True
                if correct and self.last_sys_act == "ask":
                    reward = self.config.rewards.guided_correct_skip_after_ask
                else:
                    reward = self.config.rewards.guided_step
                self.pending_ask = landed
            self.current = landed
            if self.mode == DialogMode.GUIDED:
                self._resample_guided_goal()
            self.last_sys_act = "skip"

        if not self.done and self.turn_count >= self.config.max_turns:
            self._finish(DoneReason.MAX_TURNS)

        self.records.append(
            TurnRecord(
                turn=self.turn_count,
                node=pre_node,
                action="ask" if action.is_ask else "skip",
                edge=edge_id,
                landed=self.current,
                utterance=utterance,
                reward=reward,
                done=self.done,
                done_reason=self.done_reason.value if self.done_reason else None,
                goal_edge=pre_goal_edge if self.mode == DialogMode.GUIDED else None,
            )
        )
        return TurnOutcome(utterance, reward, self.done, self.done_reason)

    def _free_ask(self, node: Node) -> tuple[float, str | None]:
        rewards = self.config.rewards
        if node.node_id == self.goal:
            self._finish(DoneReason.GOAL_PRESENTED)
            return rewards.free_goal(self.tree), None
        reward = rewards.free_step
        if node.node_id not in self.on_path:
            reward += rewards.free_offpath_ask
        utterance = None
        if node.kind in (NodeKind.START, NodeKind.DIALOG, NodeKind.VARIABLE):
            stored = self._path_next.get(node.node_id)
            if stored is not None:
                if node.kind == NodeKind.VARIABLE:
                    utterance = self._variable_utterance(
                        node, self.constraints[node.variable.name]
                    )
                else:
                    utterance = self._answer_text(stored)
            elif node.answers:
                if node.kind == NodeKind.VARIABLE:
                    value = sample_variable_value(self.tree, node.variable.name, self.rng)
                    utterance = self._variable_utterance(node, value)
                else:
                    edge = node.answers[int(self.rng.integers(len(node.answers)))]
                    utterance = self._answer_text(edge)
        if not node.answers:
            self._finish(DoneReason.LEAF_REACHED)
        return reward, utterance

    def _guided_ask(self, node: Node) -> tuple[float, str | None]:
        rewards = self.config.rewards
        if self.last_sys_act == "skip":
            reward = rewards.guided_ask_after_skip
        else:
            reward = rewards.guided_step
        if self.pending_ask == node.node_id:
            self.pending_ask = None
        utterance = None
        if self.goal_edge is not None and node.kind in (
            NodeKind.START,
            NodeKind.DIALOG,
            NodeKind.VARIABLE,
        ):
            if node.kind == NodeKind.VARIABLE:
                value = sample_variable_value(self.tree, node.variable.name, self.rng)
                utterance = self._variable_utterance(node, value)
            else:
                utterance = self._answer_text(self.goal_edge)
        if not node.answers and self.pending_ask is None:
            self._finish(DoneReason.LEAF_REACHED)
        return reward, utterance


def start_dialog(
    tree: DialogTree,
    corpus: UtteranceCorpus,
    rng: np.random.Generator,
    config: SimulatorConfig = SimulatorConfig(),
    mode: DialogMode | None = None,
) -> DialogSession:
    return DialogSession(tree, corpus, rng, config, mode)


def free_success(session: DialogSession) -> bool:
    """The fixed goal's text was presented: ASK(goal) occurred along the path."""
    if session.mode != DialogMode.FREE:
        raise ValueError("free_success applies to free-mode dialogs")
    return any(r.action == "ask" and r.node == session.goal for r in session.records)


def guided_success(session: DialogSession) -> bool:
    """Every turn-goal was skipped to and presented; no patience failure."""
    if session.mode != DialogMode.GUIDED:
        raise ValueError("guided_success applies to guided-mode dialogs")
    if session.done_reason not in (DoneReason.LEAF_REACHED, DoneReason.MAX_TURNS):
        return False
    return not session.goal_fail


def dialog_success(session: DialogSession) -> bool:
    return (
        free_success(session)
        if session.mode == DialogMode.FREE
        else guided_success(session)
    )
