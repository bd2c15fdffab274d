"""Perfect-knowledge policy reading the simulator's goal state directly.

Used as the sanity upper bound: in free mode it walks the stored goal path,
asking variable questions on the way so logic nodes route correctly, then
presents the goal; in guided mode it alternates asking and skipping to the
current turn-goal. It must reach success 1.0 on any synthesized tree.
"""

from __future__ import annotations

import numpy as np

from .graph import NodeKind
from .simulator import DialogMode


class OraclePolicy:
    def __init__(self):
        self._env = None

    def bind(self, env) -> None:
        self._env = env

    def start_dialog_hook(self, obs: np.ndarray, candidates: np.ndarray) -> None:
        pass

    def act(self, obs: np.ndarray, candidates: np.ndarray) -> int:
        session = self._env.session
        tree = self._env.tree
        node = tree.nodes[session.current]
        if session.mode == DialogMode.FREE:
            if session.current == session.goal:
                return 0
            if (
                node.kind == NodeKind.VARIABLE
                and node.variable is not None
                and node.variable.name not in session.beliefstate
            ):
                return 0  # fill the value so downstream logic routes on-path
            edge = session._path_next.get(session.current)
            if edge is not None and edge in node.answers:
                return node.answers.index(edge) + 1
            return 0
        # guided: ask whatever we just skipped to, then skip to the new goal
        if session.last_sys_act == "skip" or session.goal_edge is None:
            return 0
        return node.answers.index(session.goal_edge) + 1

    def predict_mode(self, obs: np.ndarray) -> str:
        return self._env.session.mode.value
