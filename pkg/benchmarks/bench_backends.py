"""Throughput of the compiled loop against the numpy fallback.

    python benchmarks/bench_backends.py [--paths 2000] [--t-max 1.0] [--eps-cut 1e-3]

Both backends simulate the same path indices; the script reports candidate
proposals per second, the speedup, and the largest coordinate difference.
Compilation is excluded by a warm-up call. The GAUSS case fixes its own
eps_cut, since that mode exists to allow a coarse cutoff.
"""

import argparse
import time

import numpy as np

from stablelike.geometry import Ball
from stablelike.kernels import KernelBounds, Modulated, kernel_from_spec
from stablelike.sampler import SimConfig, simulate_batch

CASES = {
    "standard-d1": (lambda: kernel_from_spec({"family": "standard", "d": 1, "alpha": 1.0}),
                    {}),
    "modulated-d1": (lambda: Modulated(KernelBounds(1, 1.0, 0.5), a=0.3), {}),
    "standard-d2-gauss": (lambda: kernel_from_spec({"family": "standard", "d": 2,
                                                    "alpha": 1.7}),
                          {"small_jump_mode": "GAUSS", "gauss_dt": 1e-2, "eps_cut": 0.05}),
}


def run(kernel, cfg, n, backend, domain):
    t0 = time.perf_counter()
    res = simulate_batch(kernel, np.zeros(kernel.d), cfg, np.arange(n), domain=domain,
                         record=True, backend=backend)
    return res, time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--t-max", type=float, default=1.0)
    ap.add_argument("--eps-cut", type=float, default=1e-3)
    ap.add_argument("--cases", nargs="*", default=list(CASES))
    args = ap.parse_args()

    header = f"{'case':20s} {'backend':8s} {'paths':>7s} {'seconds':>9s} {'cand/s':>12s}"
    print(header)
    print("-" * len(header))
    for name in args.cases:
        make, extra = CASES[name]
        kernel = make()
        cfg = SimConfig(**{"eps_cut": args.eps_cut, "t_max": args.t_max, "master_seed": 1, **extra})
        domain = Ball(np.zeros(kernel.d), 2.0)
        run(kernel, cfg, 4, "numba", domain)  # compile
        fast, t_fast = run(kernel, cfg, args.paths, "numba", domain)
        slow, t_slow = run(kernel, cfg, args.paths, "numpy", domain)
        for label, res, t in (("numba", fast, t_fast), ("numpy", slow, t_slow)):
            rate = res.n_candidates.sum() / t
            print(f"{name:20s} {label:8s} {args.paths:7d} {t:9.3f} {rate:12.4g}")
        same_events = np.array_equal(fast.offsets, slow.offsets)
        diff = float(np.max(np.abs(fast.positions - slow.positions))) if same_events else np.inf
        print(f"{'':20s} speedup {t_slow / t_fast:.1f}x, same events: {same_events}, "
              f"max |dx| = {diff:.3g}")


if __name__ == "__main__":
    main()
