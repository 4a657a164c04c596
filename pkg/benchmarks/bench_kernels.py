"""Compare the compiled orbit kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

import homogenize.drivers as drivers
from homogenize._core import available_backends
from homogenize.estimators import green_kubo_discrete


def _inputs(kind, M, n, rng):
    words = (n + 63) // 64
    noise = rng.integers(0, 2**63, size=(M, words), dtype=np.uint64)
    if kind == "doubling":
        s = rng.integers(0, 2**53, size=M, dtype=np.uint64)
        return lambda k: k.doubling_orbit(s.copy(), noise, n, True)
    if kind == "pm":
        x = rng.random(M)
        return lambda k: k.pm_orbit(x.copy(), noise, n, 0.3, True)
    if kind == "cat":
        s = rng.integers(0, 2**53, size=(M, 2), dtype=np.uint64)
        return lambda k: k.cat_orbit(s.copy(), n, True)
    if kind == "lorenz":
        st = np.tile([1.0, 1.0, 20.0], (M, 1)) + rng.random((M, 3))
        return lambda k: k.lorenz_orbit(st.copy(), 0.005, 1, n, 10.0, 28.0, 8.0 / 3.0, True)
    raise ValueError(kind)


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat):
    backends = available_backends()
    rng = np.random.default_rng(0)
    rows = []
    for kind, n in (("doubling", 100_000), ("pm", 100_000), ("cat", 100_000), ("lorenz", 20_000)):
        for M in (1, 256):
            call = _inputs(kind, M, n, rng)
            row = {"kernel": kind, "M": M, "steps": n}
            for name, mod in backends.items():
                row[name] = _best(lambda: call(mod), repeat)
            rows.append(row)
    return rows


def bench_estimator(repeat):
    system = drivers.make_system({"kind": "pomeau-manneville", "alpha": 0.1})
    obs = drivers.center_observable(system, drivers.trig_observable([1.0]), 100_000)
    out = {"task": "green_kubo_discrete PM alpha=0.1, orbit 1e6"}
    saved = drivers.kernels
    try:
        for name, mod in available_backends().items():
            drivers.kernels = mod
            out[name] = _best(lambda: green_kubo_discrete(system, obs, orbit_len=1_000_000),
                              repeat)
    finally:
        drivers.kernels = saved
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = bench_kernels(args.repeat)
    names = [b for b in ("cython", "python") if b in rows[0]]
    print(f"{'kernel':<10}{'M':>6}{'steps':>9}" + "".join(f"{b:>12}" for b in names)
          + ("     speedup" if len(names) == 2 else ""))
    for r in rows:
        line = f"{r['kernel']:<10}{r['M']:>6}{r['steps']:>9}" + "".join(
            f"{r[b]:>11.4f}s" for b in names)
        if len(names) == 2:
            line += f"{r['python'] / r['cython']:>11.1f}x"
        print(line)
    est = bench_estimator(1)
    print(est["task"] + ": " + ", ".join(f"{b} {est[b]:.2f}s" for b in names))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": rows, "estimator": est}, fh, indent=2)


if __name__ == "__main__":
    main()
