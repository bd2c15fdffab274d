"""Hindsight goal relabeling for failed free-mode dialogs.

Walking the presented nodes backwards from the episode end, the first
FAQ-bearing information node that was actually asked becomes the substitute
goal. One of its attached user questions replaces the initial utterance in
every retained observation, the episode is truncated at the first ask of the
new goal (which becomes the terminal, goal-reward transition), and all rewards
are recomputed against the shortest path to the new goal under the values the
user actually gave.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoding import add_noise
from ..environment import DialogEnv, EpisodeLog
from ..graph import NodeKind, Unreachable
from ..simulator import DialogMode
from .replay import Transition


@dataclass
class RelabeledEpisode:
    goal: str
    question: str
    constraints: dict
    on_path: set[str]
    transitions: list[Transition]
    step_meta: list[tuple[str, bool]]  # (node presented/acted on, is_ask)


def her_relabel(
    episode: EpisodeLog, env: DialogEnv, rng: np.random.Generator
) -> RelabeledEpisode | None:
    """Relabel one finished free-mode episode, or None when no visited node
    qualifies (never asked anything with user questions, or no path exists)."""
    if episode.mode != DialogMode.FREE or not episode.steps:
        return None
    tree = env.tree
    merged = {**episode.constraints, **episode.final_beliefstate}

    for t in range(len(episode.steps) - 1, -1, -1):
        step = episode.steps[t]
        if not step.action_is_ask:
            continue
        node = tree.nodes[step.node]
        if node.kind != NodeKind.INFORMATION or not node.faq_questions:
            continue
        new_goal = step.node
        try:
            path = tree.shortest_constrained_path(tree.start, new_goal, merged)
        except Unreachable:
            continue
        on_path = {nid for nid, _ in path} | {new_goal}
        terminal = next(
            i
            for i, s in enumerate(episode.steps)
            if s.action_is_ask and s.node == new_goal
        )
        question_idx = int(rng.integers(len(node.faq_questions)))
        question = node.faq_questions[question_idx]
        new_raw = add_noise(
            env.encoder.encode(question), env.config.noise, rng, env.config.noise_isotropic
        )
        new_tagged = add_noise(
            env.encoder.encode("USR: " + question), env.config.noise, rng, env.config.noise_isotropic
        )

        layout = env.layout.slices
        rewards = env.config.sim.rewards
        scale = env.reward_scale

        def rewrite(obs: np.ndarray, nhist: int, cur_is_init: bool) -> np.ndarray:
            out = obs.copy()
            out[layout["initial_utterance"]] = new_raw
            if "history" in layout:
                out[layout["history"]] += (new_tagged - episode.init_tagged_enc) / nhist
            if cur_is_init:
                out[layout["current_utterance"]] = new_raw
            return out

        transitions: list[Transition] = []
        meta: list[tuple[str, bool]] = []
        for i in range(terminal + 1):
            s = episode.steps[i]
            is_terminal = i == terminal
            if s.action_is_ask:
                if is_terminal:
                    raw = rewards.free_goal(tree)
                else:
                    raw = rewards.free_step + (
                        rewards.free_offpath_ask if s.node not in on_path else 0.0
                    )
            else:
                raw = rewards.free_step
            transitions.append(
                Transition(
                    obs=rewrite(s.obs, s.obs_nhist, s.obs_cur_is_init),
                    candidates=s.candidates,
                    chosen=s.chosen,
                    reward=raw / scale,
                    next_obs=rewrite(s.next_obs, s.next_nhist, s.next_cur_is_init),
                    next_candidates=s.next_candidates,
                    done=is_terminal,
                    mode_label=1.0,
                )
            )
            meta.append((s.node, s.action_is_ask))
        return RelabeledEpisode(
            goal=new_goal,
            question=question,
            constraints=merged,
            on_path=on_path,
            transitions=transitions,
            step_meta=meta,
        )
    return None
