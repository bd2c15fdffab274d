"""Per-action dueling Q-network with a shared trunk and a mode-prediction head.

Instead of one output per action, the network scores (state, action-input)
pairs one at a time: the trunk runs once per state, the advantage head runs
once per candidate action on concat(trunk output, encoded action input), and
Q(s, a_i) = V(s) + A(s, a_i) - mean_j A(s, a_j). The value and mode heads see
only the trunk output, so they are invariant to the candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import nn
from ..nn import autograd as ag


@dataclass(frozen=True)
class NetworkProfile:
    shared: tuple[int, ...]
    value: tuple[int, ...]
    advantage: tuple[int, ...]
    mode: tuple[int, ...]
    action_encoder: tuple[int, ...]
    dropout: float = 0.25

    def to_json(self) -> dict:
        return {
            "shared": list(self.shared),
            "value": list(self.value),
            "advantage": list(self.advantage),
            "mode": list(self.mode),
            "action_encoder": list(self.action_encoder),
            "dropout": self.dropout,
        }

    @classmethod
    def from_json(cls, data: dict) -> "NetworkProfile":
        return cls(
            shared=tuple(data["shared"]),
            value=tuple(data["value"]),
            advantage=tuple(data["advantage"]),
            mode=tuple(data["mode"]),
            action_encoder=tuple(data["action_encoder"]),
            dropout=float(data.get("dropout", 0.25)),
        )


DESK_PROFILE = NetworkProfile(
    shared=(512, 256, 256),
    value=(128, 64),
    advantage=(256, 128, 64),
    mode=(64,),
    action_encoder=(128,),
)

PAPER_PROFILE = NetworkProfile(
    shared=(8096, 4096, 4096),
    value=(2048, 1024),
    advantage=(4096, 2048, 1024),
    mode=(256,),
    action_encoder=(1024,),
)

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}


@dataclass
class BatchOutput:
    q_chosen: ag.Tensor  # (B, 1)
    mode_logits: ag.Tensor  # (B, 1)


class DuelingQNetwork:
    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        profile: NetworkProfile,
        rng: np.random.Generator,
        dtype=np.float64,
    ):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.profile = profile
        drop = profile.dropout
        self.trunk = nn.Mlp(obs_dim, list(profile.shared), rng, dropout_rate=drop, dtype=dtype)
        self.value_head = nn.Mlp(
            profile.shared[-1], list(profile.value), rng, out_dim=1, dropout_rate=drop, dtype=dtype
        )
        self.action_encoder = nn.Mlp(
            action_dim, list(profile.action_encoder), rng, dropout_rate=drop, dtype=dtype
        )
        adv_in = profile.shared[-1] + profile.action_encoder[-1]
        self.advantage_head = nn.Mlp(
            adv_in, list(profile.advantage), rng, out_dim=1, dropout_rate=drop, dtype=dtype
        )
        # the mode classifier head carries no activation between its layers
        self.mode_head = nn.Mlp(
            profile.shared[-1],
            list(profile.mode),
            rng,
            out_dim=1,
            activation="none",
            dropout_rate=drop,
            dtype=dtype,
        )
        self._stacks = {
            "trunk": self.trunk,
            "value": self.value_head,
            "action_encoder": self.action_encoder,
            "advantage": self.advantage_head,
            "mode": self.mode_head,
        }

    # -- parameter plumbing --

    def parameters(self) -> list[ag.Tensor]:
        return [p for stack in self._stacks.values() for p in stack.parameters()]

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, stack in self._stacks.items():
            for idx, param in enumerate(stack.parameters()):
                out[f"{name}/{idx}"] = param.data
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, stack in self._stacks.items():
            for idx, param in enumerate(stack.parameters()):
                source = arrays[f"{name}/{idx}"]
                param.data[...] = source.astype(param.data.dtype).reshape(param.data.shape)

    def copy_from(self, other: "DuelingQNetwork") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst.data[...] = src.data

    # -- forward passes --

    def forward_batch(
        self,
        obs_batch: np.ndarray,
        candidate_mats: Sequence[np.ndarray],
        chosen: np.ndarray,
        train: bool,
        rng: np.random.Generator | None,
    ) -> BatchOutput:
        """One trunk pass per state plus one advantage pass per candidate."""
        batch = obs_batch.shape[0]
        counts = np.array([m.shape[0] for m in candidate_mats])
        segments = np.repeat(np.arange(batch), counts)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])

        obs_t = ag.constant(obs_batch)
        trunk_out = self.trunk(obs_t, train, rng)
        v = self.value_head(trunk_out, train, rng)
        tiled = ag.gather_rows(trunk_out, segments)
        acts = ag.constant(np.vstack(candidate_mats))
        enc = self.action_encoder(acts, train, rng)
        adv = self.advantage_head(ag.concat_cols(tiled, enc), train, rng)
        adv_centered = ag.segment_center(adv, segments, batch)
        chosen_flat = offsets + np.asarray(chosen)
        q_chosen = ag.add(v, ag.gather_rows(adv_centered, chosen_flat))
        mode_logits = self.mode_head(trunk_out, train, rng)
        return BatchOutput(q_chosen=q_chosen, mode_logits=mode_logits)

    def q_matrix(
        self, obs_batch: np.ndarray, candidate_mats: Sequence[np.ndarray]
    ) -> list[np.ndarray]:
        """Per-sample Q vectors over all candidates, deterministic eval mode."""
        batch = obs_batch.shape[0]
        counts = np.array([m.shape[0] for m in candidate_mats])
        segments = np.repeat(np.arange(batch), counts)
        with ag.no_grad():
            obs_t = ag.constant(obs_batch)
            trunk_out = self.trunk(obs_t, False, None)
            v = self.value_head(trunk_out, False, None).data
            tiled = ag.gather_rows(trunk_out, segments)
            acts = ag.constant(np.vstack(candidate_mats))
            enc = self.action_encoder(acts, False, None)
            adv = self.advantage_head(ag.concat_cols(tiled, enc), False, None)
            adv_centered = ag.segment_center(adv, segments, batch).data
        q_flat = v[segments, 0] + adv_centered[:, 0]
        out = []
        cursor = 0
        for count in counts:
            out.append(q_flat[cursor : cursor + count])
            cursor += count
        return out

    def q_values(self, obs: np.ndarray, candidates: np.ndarray) -> np.ndarray:
        return self.q_matrix(obs[None, :], [candidates])[0]

    def value_of(self, obs: np.ndarray) -> float:
        with ag.no_grad():
            trunk_out = self.trunk(ag.constant(obs[None, :]), False, None)
            return float(self.value_head(trunk_out, False, None).data[0, 0])

    def mode_logit(self, obs: np.ndarray) -> float:
        with ag.no_grad():
            trunk_out = self.trunk(ag.constant(obs[None, :]), False, None)
            return float(self.mode_head(trunk_out, False, None).data[0, 0])

    def mode_probability(self, obs: np.ndarray) -> float:
        """P(free mode) for the current observation."""
        return float(1.0 / (1.0 + np.exp(-self.mode_logit(obs))))


def select_action(
    q: np.ndarray, epsilon: float, rng: np.random.Generator | None, training: bool
) -> int:
    """Epsilon-greedy during training, pure argmax in evaluation; ties take the
    lowest index."""
    if training and epsilon > 0 and rng is not None and rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


class GreedyPolicy:
    """Evaluation-facing adapter: greedy action choice plus mode prediction."""

    def __init__(self, network: DuelingQNetwork):
        self.network = network

    def act(self, obs: np.ndarray, candidates: np.ndarray) -> int:
        return select_action(self.network.q_values(obs, candidates), 0.0, None, False)

    def predict_mode(self, obs: np.ndarray) -> str:
        return "free" if self.network.mode_probability(obs) >= 0.5 else "guided"

    def start_dialog_hook(self, obs: np.ndarray, candidates: np.ndarray) -> None:
        pass
