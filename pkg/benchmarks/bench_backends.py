"""Timing comparison of the compiled and pure-Python simulator kernels.

Backend selection happens when ampsizer imports, so each measurement
runs in a subprocess with AMPSIZER_BACKEND set.  Usage:

    python benchmarks/bench_backends.py [--evals 2000]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = """
import json, time
import numpy as np
from ampsizer._core import backend_name
from ampsizer.benchmarks import get_benchmark
from ampsizer.util import substream

evals = {evals}
out = {{"backend": backend_name, "circuits": {{}}}}
for name in ("tia2", "tia3"):
    env = get_benchmark(name).build_env()
    rng = substream(0, "bench." + name)
    actions = rng.uniform(-1, 1, size=(evals, env.n_params))
    for a in actions[:20]:
        env.evaluate(a)  # warm up
    t0 = time.perf_counter()
    ok = 0
    for a in actions:
        ok += env.evaluate(a).result.ok
    dt = time.perf_counter() - t0
    out["circuits"][name] = {{"seconds": dt, "per_eval_ms": 1e3 * dt / evals, "ok": ok}}
print(json.dumps(out))
"""


def measure(backend: str, evals: int) -> dict:
    env = dict(os.environ, AMPSIZER_BACKEND=backend)
    code = _WORKER.format(evals=evals)
    proc = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True,
        check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--evals", type=int, default=2000)
    args = parser.parse_args()

    from ampsizer._core import available_backends

    names = available_backends()
    results = {name: measure(name, args.evals) for name in names}
    print(f"{args.evals} evaluations per circuit per backend\n")
    print(f"{'circuit':<8} " + " ".join(f"{n:>14}" for n in names) + "   speedup")
    for circuit in ("tia2", "tia3"):
        cells = []
        for name in names:
            ms = results[name]["circuits"][circuit]["per_eval_ms"]
            cells.append(f"{ms:>11.3f} ms")
        line = f"{circuit:<8} " + " ".join(f"{c:>14}" for c in cells)
        if "python" in results and "compiled" in results:
            py = results["python"]["circuits"][circuit]["per_eval_ms"]
            cy = results["compiled"]["circuits"][circuit]["per_eval_ms"]
            line += f"   {py / cy:6.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
