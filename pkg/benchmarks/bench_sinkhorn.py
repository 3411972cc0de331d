"""Benchmark the compiled Sinkhorn kernel against the pure-NumPy fallback.

The solver backend is chosen at import time, so each backend runs in a
fresh subprocess: the child sets INTENTOT_DISABLE_EXT=1 to force the
NumPy fallback, or leaves it unset for the compiled extension.

Usage: python3 benchmarks/bench_sinkhorn.py [--sizes 50,100,200,400] [--repeats 5]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_CHILD = r"""
import json, sys, time
import numpy as np
from intentot.ot import sinkhorn
from intentot.ot.backend import BACKEND

sizes = json.loads(sys.argv[1])
repeats = int(sys.argv[2])
rng = np.random.default_rng(0)
rows = []
for n in sizes:
    cost = rng.uniform(0.0, 10.0, size=(n, n))
    sinkhorn(cost, epsilon=0.01)  # warm-up (JIT-free, but page in code paths)
    best = min(
        _timed(sinkhorn, cost) for _ in range(repeats)
    )
    rows.append({"n": n, "seconds": best})
print(json.dumps({"backend": BACKEND, "rows": rows}))
"""

_TIMED = r"""
def _timed(fn, cost):
    import time
    t0 = time.perf_counter()
    plan = fn(cost, epsilon=0.01)
    dt = time.perf_counter() - t0
    assert plan.marginal_error < 1e-6
    return dt
"""


def run_backend(sizes: list[int], repeats: int, disable_ext: bool) -> dict:
    env = dict(os.environ)
    if disable_ext:
        env["INTENTOT_DISABLE_EXT"] = "1"
    else:
        env.pop("INTENTOT_DISABLE_EXT", None)
    script = _TIMED + _CHILD
    out = subprocess.run(
        [sys.executable, "-c", script, json.dumps(sizes), str(repeats)],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="50,100,200,400",
                        help="comma-separated square cost sizes")
    parser.add_argument("--repeats", type=int, default=5,
                        help="repeats per size; best time is reported")
    args = parser.parse_args()
    sizes = [int(tok) for tok in args.sizes.split(",")]

    compiled = run_backend(sizes, args.repeats, disable_ext=False)
    fallback = run_backend(sizes, args.repeats, disable_ext=True)
    if compiled["backend"] == fallback["backend"]:
        print(f"note: compiled extension unavailable; both runs used "
              f"{compiled['backend']!r}", file=sys.stderr)

    print(f"{'n':>6} {compiled['backend']:>12} {fallback['backend']:>12} "
          f"{'speedup':>8}")
    for a, b in zip(compiled["rows"], fallback["rows"]):
        speed = b["seconds"] / a["seconds"]
        print(f"{a['n']:>6} {a['seconds']:>11.4f}s {b['seconds']:>11.4f}s "
              f"{speed:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
