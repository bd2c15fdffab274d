import numpy as np, time, json, sys
from treenav.synth import synthesize_tree
from treenav.encoding import TrigramEncoder
from treenav.environment import DialogEnv, EnvConfig
from treenav.simulator import SimulatorConfig
from treenav.agent import AgentTrainer, TrainerConfig, DESK_PROFILE, GreedyPolicy
from treenav.baseline import BaselinePolicy
from treenav.evaluation import run_evaluation

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
turns = int(sys.argv[2]) if len(sys.argv) > 2 else 25000
dim = int(sys.argv[3]) if len(sys.argv) > 3 else 64
batch = int(sys.argv[4]) if len(sys.argv) > 4 else 64

# find a ~25-node tree with depth <= 6
tree_seed = 101
while True:
    tree, corpus = synthesize_tree(25, seed=tree_seed, depth_target=4)
    if tree.max_depth <= 6: break
    tree_seed += 1
print(f"tree_seed={tree_seed} depth={tree.max_depth} max_actions={tree.max_actions}", flush=True)

enc = TrigramEncoder(dim)
baseline = BaselinePolicy(tree, corpus, enc, seed=seed)
bm, _ = run_evaluation(baseline, tree, corpus, enc, n_dialogs=200, noise=0.1, seed=777+seed)
print(f"baseline: g={bm.success_guided:.3f} f={bm.success_free:.3f} c={bm.success_combined:.3f} acc={baseline.train_accuracy:.3f}", flush=True)

env = DialogEnv(tree, corpus, enc, EnvConfig(noise=0.1, sim=SimulatorConfig(split='train')))
cfg = TrainerConfig(max_turns=turns, batch_size=batch, buffer_size=10000,
                    eval_freq=max(2000, turns//8), eval_dialogs=100)
trainer = AgentTrainer(env, cfg, DESK_PROFILE, seed=seed)

def eval_fn(net, turn):
    m, _ = run_evaluation(GreedyPolicy(net), tree, corpus, enc, n_dialogs=cfg.eval_dialogs, noise=0.1, seed=999)
    return m.to_json()

t0 = time.perf_counter()
res = trainer.train(eval_fn)
dt = time.perf_counter() - t0
print(f"trained {res.turns} turns in {dt/60:.1f} min ({dt/res.turns*1000:.1f} ms/turn)", flush=True)
for row in res.log_rows:
    print(json.dumps({k: round(v, 3) if isinstance(v, float) else v for k, v in row.items()}), flush=True)
print("BEST:", json.dumps({k: round(v,3) if isinstance(v,float) else v for k,v in (res.best_row or {}).items()}), flush=True)
