"""Q-learning trainer: soft-policy targets with a scaled log-policy bonus,
prioritized replay, hindsight relabeling, and periodic greedy evaluation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .. import nn
from ..environment import DialogEnv
from ..nn import autograd as ag
from .her import her_relabel
from .network import DuelingQNetwork, NetworkProfile, select_action
from .replay import ReplayBuffer, Transition


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.99
    eps_start: float = 0.6
    eps_end: float = 0.0
    exploration_fraction: float = 0.99
    max_turns: int = 1_500_000
    batch_size: int = 128
    train_freq: int = 3
    train_start: int = 1280
    target_update: int = 15
    q_clip: float = 10.0
    munchausen_tau: float = 0.03
    munchausen_alpha: float = 0.9
    munchausen_clip: float = -1.0
    per_alpha: float = 0.6
    per_beta: float = 0.4
    buffer_size: int = 100_000
    lambda_intent: float = 1.0
    eval_freq: int = 10_000
    eval_dialogs: int = 500
    learning_rate: float = 1e-4
    clip_norm: float = 1.0
    huber_delta: float = 1.0
    use_her: bool = True
    double_q_online_policy: bool = False

    def fingerprint(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]


def epsilon_at(cfg: TrainerConfig, turn: int) -> float:
    span = cfg.exploration_fraction * cfg.max_turns
    fraction = min(1.0, turn / span) if span > 0 else 1.0
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * fraction


def _log_softmax(q: np.ndarray, tau: float) -> np.ndarray:
    z = q / tau
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def munchausen_targets(
    batch: list[Transition],
    online: DuelingQNetwork,
    target: DuelingQNetwork,
    cfg: TrainerConfig,
) -> np.ndarray:
    """Per-sample scalar regression targets (no gradients flow through these).

    target = r + alpha*tau*[ln pi(a|s)]_clip
               + gamma*(1-done)*sum_a' pi(a'|s')*(Q_t(s',a') - tau*ln pi(a'|s'))
    with pi the softmax of target-net Q values at temperature tau, and all
    target-net Q values (and the final target) clipped to +/- q_clip.
    """
    tau = cfg.munchausen_tau
    obs = np.stack([t.obs for t in batch])
    next_obs = np.stack([t.next_obs for t in batch])
    stacked = target.q_matrix(
        np.concatenate([obs, next_obs]),
        [t.candidates for t in batch] + [t.next_candidates for t in batch],
    )
    q_s, q_next = stacked[: len(batch)], stacked[len(batch) :]
    if cfg.double_q_online_policy:
        policy_next = online.q_matrix(next_obs, [t.next_candidates for t in batch])
    else:
        policy_next = q_next

    out = np.empty(len(batch))
    for i, transition in enumerate(batch):
        qs = np.clip(q_s[i], -cfg.q_clip, cfg.q_clip)
        log_pi_s = _log_softmax(qs, tau)
        bonus = cfg.munchausen_alpha * tau * max(
            float(log_pi_s[transition.chosen]), cfg.munchausen_clip
        )
        if transition.done:
            backup = 0.0
        else:
            qn = np.clip(q_next[i], -cfg.q_clip, cfg.q_clip)
            pn = np.clip(policy_next[i], -cfg.q_clip, cfg.q_clip)
            log_pi_next = _log_softmax(pn, tau)
            pi_next = np.exp(log_pi_next)
            backup = float((pi_next * (qn - tau * log_pi_next)).sum())
        out[i] = transition.reward + bonus + cfg.gamma * backup
    return np.clip(out, -cfg.q_clip, cfg.q_clip)


@dataclass
class TrainingResult:
    best_arrays: dict[str, np.ndarray]
    best_row: dict | None
    log_rows: list[dict] = field(default_factory=list)
    turns: int = 0


class AgentTrainer:
    def __init__(
        self,
        env: DialogEnv,
        cfg: TrainerConfig,
        profile: NetworkProfile,
        seed: int,
        dtype=np.float32,
    ):
        self.env = env
        self.cfg = cfg
        self.profile = profile
        self.seed = seed
        seq = np.random.SeedSequence((seed, 0xA9E17))
        init_seq, explore_seq, dropout_seq, buffer_seq, her_seq = seq.spawn(5)
        self.online = DuelingQNetwork(
            env.layout.dim, env.action_layout.dim, profile, np.random.default_rng(init_seq), dtype
        )
        self.target = DuelingQNetwork(
            env.layout.dim, env.action_layout.dim, profile, np.random.default_rng(init_seq), dtype
        )
        self.target.copy_from(self.online)
        self.explore_rng = np.random.default_rng(explore_seq)
        self.dropout_rng = np.random.default_rng(dropout_seq)
        self.buffer_rng = np.random.default_rng(buffer_seq)
        self.her_rng = np.random.default_rng(her_seq)
        self.buffer = ReplayBuffer(cfg.buffer_size, cfg.per_alpha)
        lambda_intent = cfg.lambda_intent
        if "mode_prediction" in env.config.disable:
            lambda_intent = 0.0
        self.lambda_intent = lambda_intent
        self.adam = nn.Adam(
            self.online.parameters(), lr=cfg.learning_rate, clip_norm=cfg.clip_norm
        )
        self.train_steps = 0

    # -- one optimization step --

    def train_step(self) -> dict[str, float]:
        cfg = self.cfg
        batch, indices, weights = self.buffer.sample(cfg.batch_size, cfg.per_beta, self.buffer_rng)
        dtype = self.online.parameters()[0].data.dtype
        targets = munchausen_targets(batch, self.online, self.target, cfg).astype(dtype)
        weights = weights.astype(dtype)

        obs = np.stack([t.obs for t in batch])
        cands = [t.candidates for t in batch]
        chosen = np.array([t.chosen for t in batch])
        out = self.online.forward_batch(obs, cands, chosen, train=True, rng=self.dropout_rng)

        deltas = out.q_chosen.data[:, 0].astype(np.float64) - targets
        q_loss = ag.huber_loss_mean(
            out.q_chosen, targets[:, None], weights[:, None], cfg.huber_delta
        )
        if self.lambda_intent > 0:
            labels = np.array([t.mode_label for t in batch], dtype=dtype)[:, None]
            intent_loss = ag.bce_logits_mean(out.mode_logits, labels)
            loss = ag.add_scaled(q_loss, intent_loss, self.lambda_intent)
            intent_value = float(intent_loss.data)
        else:
            loss = q_loss
            intent_value = 0.0

        ag.zero_grads(self.online.parameters())
        ag.backward(loss)
        self.adam.step()
        self.buffer.update_priorities(indices, np.abs(deltas))

        self.train_steps += 1
        if self.train_steps % self.cfg.target_update == 0:
            self.target.copy_from(self.online)
        return {"q_loss": float(q_loss.data), "intent_loss": intent_value}

    # -- the turn loop --

    def train(
        self,
        eval_fn: Callable[[DuelingQNetwork, int], dict] | None = None,
        progress: Callable[[int], None] | None = None,
    ) -> TrainingResult:
        cfg = self.cfg
        result = TrainingResult(best_arrays=self._snapshot(), best_row=None)
        turn = 0
        episode_idx = 0
        best_key: tuple[float, float] | None = None

        def run_eval() -> None:
            nonlocal best_key
            if eval_fn is None:
                return
            row = dict(eval_fn(self.online, turn))
            row["turn"] = turn
            row["epsilon"] = epsilon_at(cfg, turn)
            result.log_rows.append(row)
            key = (row.get("success_combined", 0.0), row.get("skip_free", 0.0))
            if best_key is None or key > best_key:
                best_key = key
                result.best_arrays = self._snapshot()
                result.best_row = row

        while turn < cfg.max_turns:
            obs, cands = self.env.reset(
                seed=np.random.SeedSequence((self.seed, 0xD1A, episode_idx))
            )
            episode_idx += 1
            done = False
            while not done and turn < cfg.max_turns:
                eps = epsilon_at(cfg, turn)
                q = self.online.q_values(obs, cands)
                action = select_action(q, eps, self.explore_rng, training=True)
                step = self.env.step(action)
                self.buffer.add(
                    Transition(
                        obs=step.obs,
                        candidates=step.candidates,
                        chosen=step.chosen,
                        reward=step.reward,
                        next_obs=step.next_obs,
                        next_candidates=step.next_candidates,
                        done=step.done,
                        mode_label=step.mode_label,
                    )
                )
                obs, cands = step.next_obs, step.next_candidates
                done = step.done
                turn += 1
                if (
                    turn >= cfg.train_start
                    and turn % cfg.train_freq == 0
                    and len(self.buffer) >= cfg.batch_size
                ):
                    self.train_step()
                if turn % cfg.eval_freq == 0:
                    run_eval()
                if progress is not None:
                    progress(turn)
            if done and cfg.use_her:
                relabeled = her_relabel(self.env.episode, self.env, self.her_rng)
                if relabeled is not None:
                    for transition in relabeled.transitions:
                        self.buffer.add(transition)

        if turn % cfg.eval_freq != 0:
            run_eval()
        result.turns = turn
        return result

    def _snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.online.named_arrays().items()}
