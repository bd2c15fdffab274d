"""Time the hot kernels under the active backend, or compare both.

    python benchmarks/bench_kernels.py            # current backend
    python benchmarks/bench_kernels.py --compare  # numba vs numpy side by side

The numpy path is forced with TREENAV_DISABLE_NUMBA=1.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def run_suite() -> dict[str, float]:
    from treenav.nn import kernels

    rng = np.random.default_rng(0)
    x = rng.normal(size=(256, 512)).astype(np.float32)
    g = rng.normal(size=(256, 512)).astype(np.float32)
    p = rng.normal(size=500_000)
    pg = rng.normal(size=500_000)
    m = np.zeros(500_000)
    v = np.zeros(500_000)
    delta = rng.normal(size=128).astype(np.float32)

    cap = 16384
    from treenav.agent.replay import SumTree

    st = SumTree(cap)
    for i in range(cap):
        st.set(i, float(rng.random()) + 0.01)
    targets = rng.uniform(0, st.total(), size=128)

    def time_of(fn, number: int) -> float:
        return timeit.timeit(fn, number=number) / number * 1e3

    # one warmup call so jit compilation stays out of the numbers
    kernels.selu_forward(x)
    kernels.selu_backward(x, g)
    kernels.adam_update(p, pg, m, v, 1, 1e-4, 0.9, 0.999, 1e-8)
    kernels.huber(delta, 1.0)
    st.sample(targets)

    step = {"step": 2}

    def adam_call():
        kernels.adam_update(p, pg, m, v, step["step"], 1e-4, 0.9, 0.999, 1e-8)
        step["step"] += 1

    return {
        "backend": kernels.backend_name(),
        "selu_forward_256x512_ms": time_of(lambda: kernels.selu_forward(x), 200),
        "selu_backward_256x512_ms": time_of(lambda: kernels.selu_backward(x, g), 200),
        "adam_500k_ms": time_of(adam_call, 100),
        "huber_128_us": time_of(lambda: kernels.huber(delta, 1.0), 2000) * 1e3,
        "sumtree_sample_128_of_16k_us": time_of(lambda: st.sample(targets), 2000) * 1e3,
    }


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--compare", action="store_true")
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    if args.compare:
        rows = []
        for disable in ("0", "1"):
            env = dict(os.environ, TREENAV_DISABLE_NUMBA=disable)
            out = subprocess.run(
                [sys.executable, __file__, "--json"],
                env=env, capture_output=True, text=True, check=True,
            )
            rows.append(json.loads(out.stdout.strip().splitlines()[-1]))
        keys = [k for k in rows[0] if k != "backend"]
        width = max(len(k) for k in keys)
        print(f"{'kernel'.ljust(width)}  {rows[0]['backend']:>10}  {rows[1]['backend']:>10}  speedup")
        for key in keys:
            a, b = rows[0][key], rows[1][key]
            print(f"{key.ljust(width)}  {a:10.4f}  {b:10.4f}  {b / a:6.2f}x")
        return 0

    result = run_suite()
    if args.json:
        print(json.dumps(result))
    else:
        for key, value in result.items():
            print(f"{key}: {value if isinstance(value, str) else round(value, 4)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
