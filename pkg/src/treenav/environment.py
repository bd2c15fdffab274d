"""Episodic decision-process wrapper around the simulator.

Assembles the policy's state features (each individually removable through the
ablation mask), exposes the per-action input matrix with ASK always at index
0, normalizes rewards into [-1, 1] by the goal payout, and records everything
goal-relabeling needs to rewrite an episode afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .encoding import TrigramEncoder, add_noise
from .graph import Action, DialogTree, NodeKind
from .simulator import (
    DialogMode,
    DialogSession,
    DoneReason,
    SimulatorConfig,
    start_dialog,
)
from .synth import UtteranceCorpus


class IndexOutOfRange(IndexError):
    pass


ABLATABLE = (
    "action_positions",
    "action_text",
    "node_text",
    "node_positions",
    "node_type",
    "mode_prediction",
    "beliefstate",
    "history",
)

_NODE_KIND_ORDER = (
    NodeKind.START,
    NodeKind.DIALOG,
    NodeKind.VARIABLE,
    NodeKind.INFORMATION,
    NodeKind.LOGIC,
)


@dataclass(frozen=True)
class EnvConfig:
    noise: float = 0.0
    noise_isotropic: bool = False
    disable: tuple[str, ...] = ()
    sim: SimulatorConfig = SimulatorConfig()

    def __post_init__(self):
        unknown = set(self.disable) - set(ABLATABLE)
        if unknown:
            raise ValueError(f"unknown ablation keys: {sorted(unknown)}")


class ObsLayout:
    """Fixed segment order; ablated segments are dropped and the vector shrinks."""

    def __init__(self, tree: DialogTree, dim: int, disable: tuple[str, ...]):
        pos_bits = len(tree.position_encoding(tree.start))
        segments = [
            ("beliefstate", len(tree.variable_order)),
            ("last_action", 3),
            ("node_type", len(_NODE_KIND_ORDER)),
            ("node_position", pos_bits),
            ("history", dim),
            ("initial_utterance", dim),
            ("current_utterance", dim),
            ("node_text", dim),
        ]
        drop = {
            "beliefstate": "beliefstate",
            "node_type": "node_type",
            "node_position": "node_positions",
            "history": "history",
            "node_text": "node_text",
        }
        self.segments: list[tuple[str, int]] = [
            (name, size)
            for name, size in segments
            if drop.get(name) not in disable
        ]
        self.slices: dict[str, slice] = {}
        offset = 0
        for name, size in self.segments:
            self.slices[name] = slice(offset, offset + size)
            offset += size
        self.dim = offset


class ActionLayout:
    """Per-action input: is_ask bit, index one-hot (ASK is index 0), text encoding."""

    def __init__(self, tree: DialogTree, dim: int, disable: tuple[str, ...]):
        self.index_width = 0 if "action_positions" in disable else tree.max_actions + 1
        self.text_width = 0 if "action_text" in disable else dim
        self.dim = 1 + self.index_width + self.text_width


@dataclass
class EnvStep:
    """One transition plus the bookkeeping needed to relabel it later."""

    obs: np.ndarray
    candidates: np.ndarray
    chosen: int
    reward: float
    raw_reward: float
    next_obs: np.ndarray
    next_candidates: np.ndarray
    done: bool
    done_reason: DoneReason | None
    mode_label: float
    node: str
    action_is_ask: bool
    edge_id: str | None
    landed: str
    obs_nhist: int
    obs_cur_is_init: bool
    next_nhist: int
    next_cur_is_init: bool


@dataclass
class EpisodeLog:
    mode: DialogMode
    goal: str | None
    constraints: dict[str, Any]
    initial_utterance: str
    init_raw_enc: np.ndarray
    init_tagged_enc: np.ndarray
    steps: list[EnvStep] = field(default_factory=list)
    final_beliefstate: dict[str, Any] = field(default_factory=dict)


class DialogEnv:
    """One environment per worker; shares an immutable tree/encoder/corpus."""

    def __init__(
        self,
        tree: DialogTree,
        corpus: UtteranceCorpus,
        encoder: TrigramEncoder,
        config: EnvConfig = EnvConfig(),
        dtype=np.float32,
    ):
        self.tree = tree
        self.corpus = corpus
        self.encoder = encoder
        self.config = config
        self.dtype = dtype
        self.layout = ObsLayout(tree, encoder.dim, config.disable)
        self.action_layout = ActionLayout(tree, encoder.dim, config.disable)
        self.reward_scale = config.sim.rewards.free_goal_per_depth * tree.max_depth
        self._action_cache: dict[str, np.ndarray] = {}
        self._position_cache: dict[str, np.ndarray] = {}
        self.session: DialogSession | None = None
        self.episode: EpisodeLog | None = None

    # -- encoding helpers --

    def _encode_utterance(self, text: str) -> np.ndarray:
        vec = self.encoder.encode(text)
        return add_noise(vec, self.config.noise, self._noise_rng, self.config.noise_isotropic)

    def assemble_history(self) -> np.ndarray:
        if not self._turn_encs:
            return np.zeros(self.encoder.dim)
        return np.mean(self._turn_encs, axis=0)

    # -- feature assembly --

    def _build_obs(self) -> np.ndarray:
        session = self.session
        return assemble_observation(
            self.tree,
            self.layout,
            self.encoder,
            self._position_cache,
            current=session.current,
            beliefstate=session.beliefstate,
            last_action=self._last_agent_action,
            history_vec=self.assemble_history(),
            init_vec=self._init_raw_enc,
            cur_vec=self._current_enc,
            dtype=self.dtype,
        )

    def _build_candidates(self) -> np.ndarray:
        return action_matrix(
            self.tree,
            self.action_layout,
            self.encoder,
            self.session.current,
            self._action_cache,
            dtype=self.dtype,
        )

    # -- protocol --

    def reset(
        self,
        seed: int | np.random.SeedSequence | None = None,
        mode: DialogMode | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        sim_seed, noise_seed = seq.spawn(2)
        self._noise_rng = np.random.default_rng(noise_seed)
        self.session = start_dialog(
            self.tree, self.corpus, np.random.default_rng(sim_seed), self.config.sim, mode
        )
        self._last_agent_action: str | None = None
        start_text = self.tree.nodes[self.tree.start].text
        init_tagged = self._encode_utterance("USR: " + self.session.initial_utterance)
        init_raw = self._encode_utterance(self.session.initial_utterance)
        self._turn_encs: list[np.ndarray] = [
            self.encoder.encode("SYS: " + start_text),
            init_tagged,
        ]
        self._init_raw_enc = init_raw
        self._current_enc = init_raw
        self._cur_is_init = True
        self.episode = EpisodeLog(
            mode=self.session.mode,
            goal=self.session.goal,
            constraints=dict(self.session.constraints),
            initial_utterance=self.session.initial_utterance,
            init_raw_enc=init_raw,
            init_tagged_enc=init_tagged,
        )
        obs = self._build_obs()
        cands = self._build_candidates()
        self._pending = (obs, cands, len(self._turn_encs), self._cur_is_init)
        return obs, cands

    @property
    def n_actions(self) -> int:
        return len(self.tree.nodes[self.session.current].answers) + 1

    @property
    def mode_label(self) -> float:
        return 1.0 if self.session.mode == DialogMode.FREE else 0.0

    def step(self, index: int) -> EnvStep:
        session = self.session
        if session is None or session.done:
            raise IndexOutOfRange("no active dialog; call reset()")
        node = self.tree.nodes[session.current]
        n = len(node.answers) + 1
        if not 0 <= index < n:
            raise IndexOutOfRange(f"action index {index} out of range for n(s)={n}")
        action = Action(is_ask=True) if index == 0 else Action(False, node.answers[index - 1])
        obs, cands, nhist, cur_init = self._pending

        outcome = session.respond(action)
        self._last_agent_action = "ask" if action.is_ask else "skip"
        if action.is_ask:
            self._turn_encs.append(self.encoder.encode("SYS: " + node.text))
        if outcome.utterance is not None:
            self._turn_encs.append(self._encode_utterance("USR: " + outcome.utterance))
            self._current_enc = self._encode_utterance(outcome.utterance)
            self._cur_is_init = False

        next_obs = self._build_obs()
        next_cands = self._build_candidates()
        self._pending = (next_obs, next_cands, len(self._turn_encs), self._cur_is_init)

        record = session.records[-1]
        step = EnvStep(
            obs=obs,
            candidates=cands,
            chosen=index,
            reward=outcome.reward / self.reward_scale,
            raw_reward=outcome.reward,
            next_obs=next_obs,
            next_candidates=next_cands,
            done=outcome.done,
            done_reason=outcome.done_reason,
            mode_label=self.mode_label,
            node=record.node,
            action_is_ask=action.is_ask,
            edge_id=record.edge,
            landed=record.landed,
            obs_nhist=nhist,
            obs_cur_is_init=cur_init,
            next_nhist=len(self._turn_encs),
            next_cur_is_init=self._cur_is_init,
        )
        self.episode.steps.append(step)
        if outcome.done:
            self.episode.final_beliefstate = dict(session.beliefstate)
        return step


def assemble_history(texts: list[tuple[str, str]], encoder: TrigramEncoder) -> np.ndarray:
    """Mean of speaker-tagged turn encodings; zero vector for an empty history."""
    if not texts:
        return np.zeros(encoder.dim)
    tags = {"sys": "SYS: ", "usr": "USR: "}
    return np.mean([encoder.encode(tags[speaker] + text) for speaker, text in texts], axis=0)


def assemble_observation(
    tree: DialogTree,
    layout: ObsLayout,
    encoder: TrigramEncoder,
    position_cache: dict[str, np.ndarray],
    *,
    current: str,
    beliefstate: dict,
    last_action: str | None,
    history_vec: np.ndarray,
    init_vec: np.ndarray,
    cur_vec: np.ndarray,
    dtype=np.float32,
) -> np.ndarray:
    node = tree.nodes[current]
    vec = np.zeros(layout.dim, dtype=dtype)
    sl = layout.slices
    if "beliefstate" in sl:
        for i, var in enumerate(tree.variable_order):
            if var in beliefstate:
                vec[sl["beliefstate"].start + i] = 1.0
    last_idx = {"ask": 0, "skip": 1, None: 2}[last_action]
    vec[sl["last_action"].start + last_idx] = 1.0
    if "node_type" in sl:
        vec[sl["node_type"].start + _NODE_KIND_ORDER.index(node.kind)] = 1.0
    if "node_position" in sl:
        cached = position_cache.get(current)
        if cached is None:
            cached = tree.position_encoding(current).astype(dtype)
            position_cache[current] = cached
        vec[sl["node_position"]] = cached
    if "history" in sl:
        vec[sl["history"]] = history_vec
    vec[sl["initial_utterance"]] = init_vec
    vec[sl["current_utterance"]] = cur_vec
    if "node_text" in sl:
        vec[sl["node_text"]] = encoder.encode(node.text)
    return vec


def action_matrix(
    tree: DialogTree,
    layout: ActionLayout,
    encoder: TrigramEncoder,
    node_id: str,
    cache: dict[str, np.ndarray],
    dtype=np.float32,
) -> np.ndarray:
    cached = cache.get(node_id)
    if cached is not None:
        return cached
    actions = tree.actions_at(node_id)
    mat = np.zeros((len(actions), layout.dim), dtype=dtype)
    for idx, action in enumerate(actions):
        mat[idx, 0] = 1.0 if action.is_ask else 0.0
        if layout.index_width:
            mat[idx, 1 + idx] = 1.0
        if layout.text_width and not action.is_ask:
            mat[idx, 1 + layout.index_width :] = encoder.encode(action.edge.prototype_text)
    mat.flags.writeable = False
    cache[node_id] = mat
    return mat
