"""Compiled vs numpy Metropolis kernels.

Times full sweeps of persistent chains on an MLP (1D) and a CNN (8x8)
Hamiltonian with each backend, checks that both end in the same chain
states, and prints a small table.

    python benchmarks/bench_kernels.py [--repeats 5] [--json out.json]
"""

import argparse
import json
import sys
import time

import numpy as np

from minmaxent.hamiltonian import EffectiveHamiltonian
from minmaxent.kernels import compiled_available
from minmaxent.observables import build_cnn_observables, build_mlp_observables
from minmaxent.sampler import init_chains, sweep


def _cases(mlp_sweeps: int, cnn_sweeps: int, n_chains: int):
    mlp = build_mlp_observables(1, (32, 32), 2, seed=1)
    H1 = EffectiveHamiltonian(mlp, [1.0, -0.5], bounds=(-15, 15))
    cnn = build_cnn_observables(8, 16, seed=2)
    H2 = EffectiveHamiltonian(cnn, np.random.default_rng(0).normal(size=16))
    return [
        ("mlp-1d", H1, "full", 1.0, mlp_sweeps, n_chains),
        ("cnn-8x8", H2, "pixel", 0.3, cnn_sweeps, n_chains),
    ]


def time_case(H, proposal, step, n_sweeps, n_chains, backend, repeats):
    best, final = np.inf, None
    for _ in range(repeats):
        chains = init_chains(H, n_chains, seed=3, step=step, proposal=proposal)
        t0 = time.perf_counter()
        sweep(chains, H, n_sweeps, backend=backend)
        best = min(best, time.perf_counter() - t0)
        final = chains.x.copy()
    return best, final


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--chains", type=int, default=64)
    ap.add_argument("--mlp-sweeps", type=int, default=500)
    ap.add_argument("--cnn-sweeps", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    if not compiled_available():
        print("compiled kernels are not built; only the numpy backend can be timed")
    backends = ["cython", "python"] if compiled_available() else ["python"]
    rows = []
    for name, H, proposal, step, n_sweeps, n_chains in _cases(args.mlp_sweeps, args.cnn_sweeps, args.chains):
        times, states = {}, {}
        for b in backends:
            times[b], states[b] = time_case(H, proposal, step, n_sweeps, n_chains, b, args.repeats)
        diff = float(np.abs(states[backends[0]] - states["python"]).max())
        row = {"case": name, "sweeps": n_sweeps, "chains": n_chains, "max_state_diff": diff, **times}
        if "cython" in times:
            row["speedup"] = times["python"] / times["cython"]
        rows.append(row)

    print(f"{'case':<10} {'sweeps':>6} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max |dx|':>10}")
    for r in rows:
        cy = f"{r['cython']:.4f}" if "cython" in r else "-"
        sp = f"{r['speedup']:.2f}x" if "speedup" in r else "-"
        print(f"{r['case']:<10} {r['sweeps']:>6} {r['python']:>11.4f} {cy:>11} {sp:>8} {r['max_state_diff']:>10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
