"""Compiled vs pure-numpy message-passing kernels.

Times the two inner loops in isolation and a full decode on each backend,
and checks that both backends produce the same marginals.

    python3 benchmarks/bench_kernels.py [--n 1024] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from bhtbp import bp, kernels
from bhtbp.density import DensityGrid, centre_phase, sample_spike_slab_prior
from bhtbp.kernels import EdgeLayout
from bhtbp.model import SignalModel, generate_matrix, generate_signal, measure, NoiseModel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--n-d", type=int, default=256)
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    n, m = args.n, args.n // 2
    matrix = generate_matrix(m, n, 4, rng)
    signal = generate_signal(SignalModel(n=n), rng)
    sigma_n = 0.05
    z = measure(matrix, signal, NoiseModel(sigma_n), rng)
    grid = DensityGrid(args.n_d, 5.0)
    prior = sample_spike_slab_prior(grid, 0.05, 5.0)
    layout = EdgeLayout.from_columns(matrix.columns, m)

    e = layout.n_edges
    b = rng.random((e, args.n_d)) + 1e-3
    b /= b.sum(axis=1, keepdims=True)
    a_out = np.empty_like(b)
    marg = np.empty((n, args.n_d))
    spec = np.conj(np.fft.rfft(b, axis=1)) * centre_phase(args.n_d)
    noise = np.ascontiguousarray(np.fft.rfft(rng.random((m, args.n_d)), axis=1))
    out = np.empty_like(spec)

    print(f"N={n} M={m} edges={e} n_d={args.n_d} iterations={args.iterations}")
    print(f"{'backend':10s} {'variable_update':>16s} {'check_combine':>14s} {'full decode':>12s}")
    results = {}
    for backend in kernels.available_backends():
        t_var = best_of(lambda: kernels.variable_update(prior.mass, b, layout, a_out, marg, backend=backend),
                        args.repeat)
        t_chk = best_of(lambda: kernels.check_combine(noise, spec, layout, out, backend=backend), args.repeat)
        t_run = best_of(lambda: bp.run(matrix, z, prior, sigma_n, args.iterations, backend=backend), args.repeat)
        results[backend] = bp.run(matrix, z, prior, sigma_n, args.iterations, backend=backend).marginals
        print(f"{backend:10s} {t_var * 1e3:14.2f}ms {t_chk * 1e3:12.2f}ms {t_run:11.3f}s")
    if len(results) == 2:
        diff = np.abs(results["compiled"] - results["python"]).max()
        print(f"max |marginal difference| between backends: {diff:.2e}")
    else:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
