"""Pack/unpack agent networks as checkpoint files with a config fingerprint."""

from __future__ import annotations

import numpy as np

from ..graph import DialogTree, tree_fingerprint
from ..nn import load_checkpoint, save_checkpoint
from .network import DuelingQNetwork, GreedyPolicy, NetworkProfile


def save_agent_checkpoint(path: str, arrays: dict[str, np.ndarray], trainer, tree, run_cfg) -> None:
    meta = {
        "kind": "agent-q-network",
        "profile": trainer.profile.to_json(),
        "obs_dim": trainer.env.layout.dim,
        "action_dim": trainer.env.action_layout.dim,
        "encoder_dim": trainer.env.encoder.dim,
        "disable": list(trainer.env.config.disable),
        "noise": trainer.env.config.noise,
        "tree": tree_fingerprint(tree),
        "trainer_fingerprint": trainer.cfg.fingerprint(),
        "seed": trainer.seed,
        "mode_output": "p_free",
    }
    stored = {name: arr.astype(np.float32) for name, arr in arrays.items()}
    save_checkpoint(path, stored, meta)


def load_agent_network(path: str, tree: DialogTree) -> tuple[DuelingQNetwork, dict]:
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != "agent-q-network":
        raise ValueError(f"{path}: not an agent checkpoint")
    actual = tree_fingerprint(tree)
    if meta.get("tree") != actual:
        raise ValueError(
            f"{path}: checkpoint was trained on tree {meta.get('tree')}, "
            f"but the loaded tree is {actual}"
        )
    profile = NetworkProfile.from_json(meta["profile"])
    network = DuelingQNetwork(
        int(meta["obs_dim"]),
        int(meta["action_dim"]),
        profile,
        np.random.default_rng(0),
        dtype=np.float32,
    )
    network.load_arrays(arrays)
    return network, meta


def load_agent_policy(path: str, tree: DialogTree) -> GreedyPolicy:
    network, _ = load_agent_network(path, tree)
    return GreedyPolicy(network)
