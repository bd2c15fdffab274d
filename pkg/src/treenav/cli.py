"""Command line surface: tree validation/synthesis, training, evaluation,
terminal chat, and the HTTP session service."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .encoding import TrigramEncoder
from .evaluation import noise_sweep, run_evaluation, save_transcripts, write_reports
from .graph import load_tree, serialize_tree, tree_fingerprint
from .synth import load_corpus, save_tree_and_corpus, synthesize_tree


def _corpus_path_for(tree_path: str) -> str:
    return (tree_path[:-5] if tree_path.endswith(".json") else tree_path) + ".corpus.json"


def cmd_tree_validate(args) -> int:
    tree = load_tree(args.file)
    counts: dict[str, int] = {}
    for node in tree.nodes.values():
        counts[node.kind.value] = counts.get(node.kind.value, 0) + 1
    print(
        f"{args.file}: valid; {len(tree.nodes)} nodes "
        f"({', '.join(f'{k}={v}' for k, v in sorted(counts.items()))}), "
        f"depth={tree.max_depth}, max_actions={tree.max_actions}"
    )
    return 0


def cmd_tree_synth(args) -> int:
    tree, corpus = synthesize_tree(
        node_count=args.nodes,
        seed=args.seed,
        max_branching=args.max_branching,
        depth_target=args.depth,
        faq_per_info=args.faq_per_info,
        paraphrases_per_answer=args.paraphrases,
    )
    corpus_path = save_tree_and_corpus(args.output, tree, corpus)
    print(
        f"wrote {args.output} ({len(tree.nodes)} nodes, depth={tree.max_depth}, "
        f"fingerprint={tree_fingerprint(tree)}) and {corpus_path}"
    )
    return 0


def _load_pair(tree_path: str, corpus_path: str | None):
    tree = load_tree(tree_path)
    corpus = load_corpus(corpus_path or _corpus_path_for(tree_path))
    return tree, corpus


def cmd_train(args) -> int:
    from .agent import AgentTrainer, GreedyPolicy
    from .agent.checkpoint_io import save_agent_checkpoint
    from .config import load_config
    from .environment import DialogEnv

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    tree, corpus = _load_pair(cfg.tree_path, cfg.corpus_path or None)
    encoder = TrigramEncoder(cfg.encoder_dim)
    env = DialogEnv(tree, corpus, encoder, cfg.env_config())
    trainer = AgentTrainer(env, cfg.trainer, cfg.profile, seed=cfg.seed)

    def eval_fn(net, turn):
        metrics, _ = run_evaluation(
            GreedyPolicy(net), tree, corpus, encoder,
            n_dialogs=cfg.trainer.eval_dialogs, noise=cfg.noise,
            seed=cfg.seed * 1_000_003 + turn, disable=cfg.disable, split=cfg.split,
            sim_config=cfg.sim,
        )
        return metrics.to_json()

    result = trainer.train(eval_fn)
    with open(cfg.log_path, "w", encoding="utf-8") as fh:
        for row in result.log_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    save_agent_checkpoint(cfg.checkpoint_path, result.best_arrays, trainer, tree, cfg)
    best = result.best_row or {}
    print(
        f"trained {result.turns} turns; best combined success "
        f"{best.get('success_combined', 0.0):.4f}; checkpoint -> {cfg.checkpoint_path}; "
        f"log -> {cfg.log_path}"
    )
    return 0


def _build_policy(args, tree, corpus, encoder):
    from .baseline import BaselinePolicy
    from .oracle import OraclePolicy

    if args.policy == "baseline":
        return BaselinePolicy(tree, corpus, encoder, seed=args.seed)
    if args.policy == "oracle":
        return OraclePolicy()
    raise SystemExit("--checkpoint is required for --policy agent")


def cmd_eval(args) -> int:
    tree, corpus = _load_pair(args.tree, args.corpus)
    disable = tuple(args.ablate.split(",")) if args.ablate else ()
    if args.policy == "agent":
        if not args.checkpoint:
            raise SystemExit("--checkpoint is required for --policy agent")
        from .agent.checkpoint_io import load_agent_network

        network, meta = load_agent_network(args.checkpoint, tree)
        # the observation layout is baked into the trained network
        trained_mask = tuple(meta.get("disable", []))
        if disable and set(disable) != set(trained_mask):
            raise SystemExit(
                f"checkpoint was trained with ablation mask {list(trained_mask)}; "
                f"--ablate must match"
            )
        disable = trained_mask
        encoder = TrigramEncoder(int(meta["encoder_dim"]))
        from .agent import GreedyPolicy

        policy = GreedyPolicy(network)
    else:
        encoder = TrigramEncoder(args.encoder_dim)
        policy = _build_policy(args, tree, corpus, encoder)
    levels = [float(x) for x in args.noise.split(",")]
    rows = noise_sweep(
        policy, tree, corpus, encoder, levels,
        n_dialogs=args.dialogs, seed=args.seed, disable=disable, split=args.split,
    )
    named = [(f"{args.policy}@n={m.noise:g}", m) for m in rows]
    os.makedirs(args.out, exist_ok=True)
    write_reports(named, os.path.join(args.out, "report.txt"), os.path.join(args.out, "report.csv"))
    if args.transcripts:
        metrics, transcripts = run_evaluation(
            policy, tree, corpus, encoder, args.dialogs,
            noise=levels[0], seed=args.seed, disable=disable, split=args.split,
        )
        save_transcripts(transcripts, os.path.join(args.out, "transcripts.jsonl"))
    with open(os.path.join(args.out, "report.txt"), "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_chat(args) -> int:
    from .service import TerminalChat

    tree, corpus = _load_pair(args.tree, args.corpus)
    encoder = TrigramEncoder(args.encoder_dim)
    policy = _build_policy(args, tree, corpus, encoder)
    TerminalChat(tree, corpus, encoder, policy, noise=0.0).run()
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    tree, corpus = _load_pair(args.tree, args.corpus)
    app = build_app(
        tree=tree,
        corpus=corpus,
        encoder_dim=args.encoder_dim,
        checkpoint=args.checkpoint,
        baseline_seed=args.seed,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treenav", description=__doc__)
    parser.add_argument("--version", action="version", version=f"treenav {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    tree_parser = sub.add_parser("tree", help="dialog tree utilities")
    tree_sub = tree_parser.add_subparsers(dest="tree_command", required=True)
    validate = tree_sub.add_parser("validate", help="parse and validate a tree file")
    validate.add_argument("file")
    validate.set_defaults(fn=cmd_tree_validate)
    synth = tree_sub.add_parser("synth", help="generate a random tree + corpus")
    synth.add_argument("--nodes", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--max-branching", type=int, default=3)
    synth.add_argument("--depth", type=int, default=None)
    synth.add_argument("--faq-per-info", type=int, default=2)
    synth.add_argument("--paraphrases", type=int, default=4)
    synth.add_argument("-o", "--output", required=True)
    synth.set_defaults(fn=cmd_tree_synth)

    train = sub.add_parser("train", help="train the agent per an INI config")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.set_defaults(fn=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a policy on simulated dialogs")
    evaluate.add_argument("--policy", choices=["baseline", "agent", "oracle"], required=True)
    evaluate.add_argument("--checkpoint", default=None)
    evaluate.add_argument("--tree", required=True)
    evaluate.add_argument("--corpus", default=None)
    evaluate.add_argument("--noise", default="0.1", help="comma-separated noise levels")
    evaluate.add_argument("--dialogs", type=int, default=500)
    evaluate.add_argument("--ablate", default="", help="comma-separated ablation keys")
    evaluate.add_argument("--split", default="train", choices=["prototype", "train", "test"])
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--encoder-dim", type=int, default=256)
    evaluate.add_argument("--out", default="eval_out")
    evaluate.add_argument("--transcripts", action="store_true")
    evaluate.set_defaults(fn=cmd_eval)

    chat = sub.add_parser("chat", help="interactive terminal dialog")
    chat.add_argument("--policy", choices=["baseline", "agent", "oracle"], default="baseline")
    chat.add_argument("--checkpoint", default=None)
    chat.add_argument("--tree", required=True)
    chat.add_argument("--corpus", default=None)
    chat.add_argument("--seed", type=int, default=0)
    chat.add_argument("--encoder-dim", type=int, default=256)
    chat.set_defaults(fn=cmd_chat)

    serve = sub.add_parser("serve", help="HTTP session service for the chat UI")
    serve.add_argument("--port", type=int, default=int(os.environ.get("CTS_PORT", "8054")))
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--checkpoint", default=os.environ.get("CTS_CHECKPOINT") or None)
    serve.add_argument("--tree", default=os.environ.get("CTS_TREE") or None, required=False)
    serve.add_argument("--corpus", default=None)
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--encoder-dim", type=int, default=256)
    serve.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "serve" and not args.tree:
        parser.error("serve requires --tree or CTS_TREE")
    try:
        return args.fn(args)
    except (
        ValueError,
        KeyError,
        OSError,
        RuntimeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
