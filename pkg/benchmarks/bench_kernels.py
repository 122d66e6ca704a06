"""Benchmark the compiled streaming kernel against the pure-Python fallback.

Run:  python3 benchmarks/bench_kernels.py [n_samples]
"""

import sys
import time

import numpy as np

from sparsedpd.kernel import FixedPointRunner, available_backends
from sparsedpd.model import ModelConfig, ModelParams
from sparsedpd.pa import SignalSpec, gen_baseband


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 50_000
    spec = SignalSpec(n_symbols=max(n * 8 // 83 + 64, 128), seed=3)
    x = gen_baseband(spec).samples[:n]
    cfg = ModelConfig()
    i_raw = np.round(x.real * cfg.act_scale).astype(np.int64)
    q_raw = np.round(x.imag * cfg.act_scale).astype(np.int64)
    params = ModelParams.init_random(cfg, np.random.default_rng(11))

    results = {}
    for backend in available_backends():
        runner = FixedPointRunner(params, cfg, backend)
        t0 = time.perf_counter()
        out = runner.run(i_raw, q_raw)
        dt = time.perf_counter() - t0
        results[backend] = (out, dt)
        print(f"{backend:10s} {len(i_raw):>8d} samples  {dt:8.3f} s  "
              f"{len(i_raw) / dt / 1e3:9.1f} ksamp/s")

    if len(results) == 2:
        (oc, tc), (op, tp) = results["cython"], results["python"]
        same = np.array_equal(oc[0], op[0]) and np.array_equal(oc[1], op[1])
        print(f"bit-identical: {same}   speedup: {tp / tc:.1f}x")
        return 0 if same else 1
    print("only one backend available; nothing to compare")
    return 0


if __name__ == "__main__":
    sys.exit(main())
