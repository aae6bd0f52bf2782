"""Compare the numba and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py [--n 2000] [--steps 1000000] [--repeat 3]

Both paths get identical inputs; outputs are checked for equality before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from osnsim import kernels
from osnsim._accel import NUMBA_AVAILABLE
from osnsim.analytics import undirected_csr
from osnsim.behavior import cumulative, default_matrices
from osnsim.netgen import NetGenConfig, generate_graph, scale_parameters
from osnsim.profilegen import PopulationConfig, generate_population


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000, help="graph size")
    ap.add_argument("--steps", type=int, default=1_000_000, help="Markov chain length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    pop = generate_population(PopulationConfig(n_agents=args.n, with_backstory=False))
    graph = generate_graph(pop, scale_parameters(args.n, NetGenConfig()))
    _, indptr, indices = undirected_csr(graph)
    sources = np.arange(args.n, dtype=np.int64)
    cum = cumulative(default_matrices()["advanced"])
    u = np.random.default_rng(0).random(args.steps)

    # warm-up compiles the numba kernels so timing excludes JIT
    kernels.brandes_nb(indptr, indices, sources[:2])
    kernels.sample_chain_nb(cum, 0, u[:10])

    rows = []
    t_nb, (bc_nb, ds_nb, _) = best_of(lambda: kernels.brandes_nb(indptr, indices, sources), args.repeat)
    t_np, (bc_np, ds_np, _) = best_of(lambda: kernels.brandes_np(indptr, indices, sources), args.repeat)
    assert np.allclose(bc_nb, bc_np) and np.array_equal(ds_nb, ds_np)
    rows.append((f"brandes (n={args.n}, all sources)", t_nb, t_np))

    t_nb, s_nb = best_of(lambda: kernels.sample_chain_nb(cum, 0, u), args.repeat)
    t_np, s_np = best_of(lambda: kernels.sample_chain_np(cum, 0, u), args.repeat)
    assert np.array_equal(s_nb, s_np)
    rows.append((f"sample_chain ({args.steps} steps)", t_nb, t_np))

    print(f"{'kernel':<36}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, a, b in rows:
        print(f"{name:<36}{a:>10.3f}{b:>10.3f}{b / a:>8.1f}x")


if __name__ == "__main__":
    main()
