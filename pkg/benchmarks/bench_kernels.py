"""Benchmark the compiled stepping kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--paths N] [--steps S]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sptlab import markets
from sptlab.kernels import HAVE_COMPILED, get_backend


def _bench(spec, grid, n_paths: int, seed: int, backend: str) -> float:
    t0 = time.perf_counter()
    markets.simulate_paths(spec, grid, n_paths, seed, backend=backend)
    return time.perf_counter() - t0


def _bench_raw(spec, n_paths: int, steps: int, seed: int, backend: str) -> float:
    """Time the stepping kernel alone on pre-drawn increments."""
    impl = get_backend(backend)
    dt = 1e-3
    rng = np.random.default_rng(seed)
    dw = np.sqrt(dt) * rng.standard_normal((n_paths, steps, spec.n))
    logx0 = np.tile(np.log(spec.x0), (n_paths, 1))
    family, p = spec.kernel
    t0 = time.perf_counter()
    if family == "gen_vsm":
        impl.gen_vsm_paths(logx0, dw, dt, p["alphas"], p["sigma"], p["beta"],
                           p["k_const"], max(p["mu_floor"], dt))
    elif family == "hybrid_atlas":
        impl.hybrid_atlas_paths(logx0, dw, dt, p["gamma"], p["gammas"], p["gs"],
                                p["sigmas"], p["rho"])
    else:
        impl.fkk_paths(logx0, dw, dt, p["delta"], max(p["lg_floor"], dt),
                       p["sigma"], p["gs"], p["big_m"])
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=256)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    grid = markets.SimGrid(args.steps * 1e-3, args.steps)
    n = 10
    cases = [
        ("vsm", markets.vsm_spec(n, 0.5)),
        ("hybrid_atlas", markets.atlas_spec(n, 0.2)),
        ("fkk_diverse", markets.fkk_diverse_spec(
            n, 0.6, np.eye(n), np.zeros(n), 1.0)),
    ]

    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("compiled backend unavailable; timing the fallback only")
    for section, runner in [
        ("end-to-end simulate_paths", lambda spec, b: _bench(
            spec, grid, args.paths, args.seed, backend=b)),
        ("stepping kernel only", lambda spec, b: _bench_raw(
            spec, args.paths, args.steps, args.seed, backend=b)),
    ]:
        print(f"\n{section}: {args.paths} paths x {args.steps} steps, n={n}")
        header = f"{'model':>14s} " + "".join(f"{b:>12s}" for b in backends)
        print(header + ("     speedup" if HAVE_COMPILED else ""))
        for label, spec in cases:
            times = {}
            for b in backends:
                get_backend(b)  # fail fast if unavailable
                runner(spec, b)  # warm up
                times[b] = runner(spec, b)
            row = f"{label:>14s} " + "".join(f"{times[b]:>11.3f}s" for b in backends)
            if HAVE_COMPILED:
                row += f"{times['python'] / times['compiled']:>11.1f}x"
            print(row)


if __name__ == "__main__":
    main()
