"""INI run configuration. Every training/simulation constant has a key whose
default is the published value; a `desk` network profile plus smaller buffer
and evaluation settings suit laptop-scale runs (see docs/config-reference.ini)."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .agent.network import PROFILES, NetworkProfile
from .agent.trainer import TrainerConfig
from .environment import ABLATABLE, EnvConfig
from .simulator import RewardConstants, SimulatorConfig


@dataclass
class RunConfig:
    tree_path: str = ""
    corpus_path: str = ""
    seed: int = 0
    encoder_dim: int = 256
    noise: float = 0.1
    noise_isotropic: bool = False
    disable: tuple[str, ...] = ()
    split: str = "train"
    profile_name: str = "desk"
    profile: NetworkProfile = field(default_factory=lambda: PROFILES["desk"])
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    sim: SimulatorConfig = field(default_factory=SimulatorConfig)
    checkpoint_path: str = "agent.ckpt"
    log_path: str = "training_log.jsonl"

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            noise=self.noise,
            noise_isotropic=self.noise_isotropic,
            disable=self.disable,
            sim=self.sim,
        )


def _get(parser: configparser.ConfigParser, section: str, option: str, conv, default):
    if parser.has_option(section, option):
        if conv is bool:
            return parser.getboolean(section, option)
        return conv(parser.get(section, option))
    return default


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    cfg = RunConfig()

    cfg.tree_path = _get(parser, "run", "tree", str, cfg.tree_path)
    cfg.corpus_path = _get(parser, "run", "corpus", str, cfg.corpus_path)
    cfg.seed = _get(parser, "run", "seed", int, cfg.seed)
    cfg.split = _get(parser, "run", "split", str, cfg.split)
    cfg.checkpoint_path = _get(parser, "run", "checkpoint", str, cfg.checkpoint_path)
    cfg.log_path = _get(parser, "run", "log", str, cfg.log_path)

    cfg.encoder_dim = _get(parser, "encoder", "dim", int, cfg.encoder_dim)

    cfg.noise = _get(parser, "noise", "level", float, cfg.noise)
    cfg.noise_isotropic = _get(parser, "noise", "isotropic", bool, cfg.noise_isotropic)

    raw_disable = _get(parser, "obs", "disable", str, "")
    if raw_disable:
        keys = tuple(k.strip() for k in raw_disable.replace(",", " ").split() if k.strip())
        unknown = set(keys) - set(ABLATABLE)
        if unknown:
            raise ValueError(f"unknown ablation keys {sorted(unknown)}; valid: {ABLATABLE}")
        cfg.disable = keys

    rewards = RewardConstants(
        guided_ask_after_skip=_get(parser, "reward", "guided_ask_after_skip", float, 2.0),
        guided_correct_skip_after_ask=_get(
            parser, "reward", "guided_correct_skip_after_ask", float, 3.0
        ),
        guided_step=_get(parser, "reward", "guided_step", float, -1.0),
        free_step=_get(parser, "reward", "free_step", float, -1.0),
        free_offpath_ask=_get(parser, "reward", "free_offpath_ask", float, -4.0),
        free_goal_per_depth=_get(parser, "reward", "free_goal_per_depth", float, 4.0),
    )
    cfg.sim = SimulatorConfig(
        rewards=rewards,
        max_turns=_get(parser, "simulator", "max_turns", int, 50),
        patience=_get(parser, "simulator", "patience", int, 3),
        guided_prob=_get(parser, "simulator", "guided_prob", float, 0.5),
        split=cfg.split,
    )

    cfg.profile_name = _get(parser, "network", "profile", str, cfg.profile_name)
    if parser.has_section("network") and parser.has_option("network", "shared"):
        dims = lambda opt, dflt: tuple(
            int(x) for x in parser.get("network", opt, fallback=dflt).split()
        )
        cfg.profile = NetworkProfile(
            shared=dims("shared", "512 256 256"),
            value=dims("value", "128 64"),
            advantage=dims("advantage", "256 128 64"),
            mode=dims("mode", "64"),
            action_encoder=dims("action_encoder", "128"),
            dropout=_get(parser, "network", "dropout", float, 0.25),
        )
    else:
        if cfg.profile_name not in PROFILES:
            raise ValueError(f"unknown network profile {cfg.profile_name!r}")
        cfg.profile = PROFILES[cfg.profile_name]

    t = TrainerConfig()
    cfg.trainer = TrainerConfig(
        gamma=_get(parser, "training", "gamma", float, t.gamma),
        eps_start=_get(parser, "training", "eps_start", float, t.eps_start),
        eps_end=_get(parser, "training", "eps_end", float, t.eps_end),
        exploration_fraction=_get(
            parser, "training", "exploration_fraction", float, t.exploration_fraction
        ),
        max_turns=_get(parser, "training", "max_turns", int, t.max_turns),
        batch_size=_get(parser, "training", "batch_size", int, t.batch_size),
        train_freq=_get(parser, "training", "train_freq", int, t.train_freq),
        train_start=_get(parser, "training", "train_start", int, t.train_start),
        target_update=_get(parser, "training", "target_update", int, t.target_update),
        q_clip=_get(parser, "training", "q_clip", float, t.q_clip),
        munchausen_tau=_get(parser, "training", "munchausen_tau", float, t.munchausen_tau),
        munchausen_alpha=_get(parser, "training", "munchausen_alpha", float, t.munchausen_alpha),
        munchausen_clip=_get(parser, "training", "munchausen_clip", float, t.munchausen_clip),
        per_alpha=_get(parser, "training", "per_alpha", float, t.per_alpha),
        per_beta=_get(parser, "training", "per_beta", float, t.per_beta),
        buffer_size=_get(parser, "training", "buffer_size", int, t.buffer_size),
        lambda_intent=_get(parser, "training", "lambda_intent", float, t.lambda_intent),
        eval_freq=_get(parser, "training", "eval_freq", int, t.eval_freq),
        eval_dialogs=_get(parser, "training", "eval_dialogs", int, t.eval_dialogs),
        learning_rate=_get(parser, "training", "learning_rate", float, t.learning_rate),
        clip_norm=_get(parser, "training", "clip_norm", float, t.clip_norm),
        huber_delta=_get(parser, "training", "huber_delta", float, t.huber_delta),
        use_her=_get(parser, "training", "use_her", bool, t.use_her),
        double_q_online_policy=_get(
            parser, "training", "double_q_online_policy", bool, t.double_q_online_policy
        ),
    )

    for key, value in (overrides or {}).items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config override {key!r}")
        setattr(cfg, key, value)
    return cfg
