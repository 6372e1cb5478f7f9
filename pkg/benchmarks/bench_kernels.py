#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallbacks.

Covers the two raw kernels (sparse_project, soft_threshold_count) and the two
call paths that lean on them: sparse encoding through ProjectionMatrix and a
full AMP recovery. Prints ms/op per backend and the compiled-vs-python
speedup. The same comparison can be forced process-wide for any run with
AIRSGD_FORCE_PYTHON_KERNELS=1.

usage: python3 benchmarks/bench_kernels.py [--reps N] [--dim D] [--rows S] [--k K]
"""

import argparse
import contextlib
import time

import numpy as np

from airsgd import _kernels_py, kernels
from airsgd.amp import amp_recover
from airsgd.analog import ProjectionMatrix
from airsgd.numerics import SeededRng

try:
    from airsgd import _kernels

    BACKENDS = {"cython": _kernels, "python": _kernels_py}
except ImportError:
    BACKENDS = {"python": _kernels_py}


@contextlib.contextmanager
def facade_backend(module):
    """Route airsgd.kernels through `module` for the duration."""
    saved = (kernels.sparse_project, kernels.soft_threshold_count)
    kernels.sparse_project = module.sparse_project
    kernels.soft_threshold_count = module.soft_threshold_count
    try:
        yield
    finally:
        kernels.sparse_project, kernels.soft_threshold_count = saved


def best_of(fn, reps):
    best = float("inf")
    for _ in range(reps):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best * 1e3  # ms


def report(rows):
    width = max(len(name) for name, _, _ in rows)
    current = None
    for name, backend, ms in rows:
        if name != current:
            current = name
            others = {b: m for n, b, m in rows if n == name}
            if "cython" in others and "python" in others:
                ratio = f"   python/cython = {others['python'] / others['cython']:.1f}x"
            else:
                ratio = ""
            print(f"{name:<{width}}{ratio}")
        print(f"  {backend:<8} {ms:10.3f} ms/op")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--dim", type=int, default=7850)
    parser.add_argument("--rows", type=int, default=3924)
    parser.add_argument("--k", type=int, default=1962)
    args = parser.parse_args()

    gen = SeededRng(0).generator
    basis_t = gen.standard_normal((args.dim, args.rows))
    support = np.sort(gen.choice(args.dim, args.k, replace=False)).astype(np.int64)
    values = gen.standard_normal(args.k)
    pseudo = gen.standard_normal(args.dim)

    proj = ProjectionMatrix(1, args.rows, args.dim, dtype=np.float32)
    spikes = np.zeros(args.dim)
    spikes[gen.choice(args.dim, args.dim // 25, replace=False)] = gen.standard_normal(
        args.dim // 25
    )
    observation = proj.project(spikes)

    rows = []
    for label, make_args in (
        ("sparse_project float64", lambda: (basis_t, support, values)),
        (
            "sparse_project float32",
            lambda: (
                basis_t.astype(np.float32),
                support,
                values.astype(np.float32),
            ),
        ),
    ):
        call_args = make_args()
        for backend, module in BACKENDS.items():
            ms = best_of(lambda: module.sparse_project(*call_args), args.reps)
            rows.append((label, backend, ms))

    for backend, module in BACKENDS.items():
        ms = best_of(
            lambda: module.soft_threshold_count(pseudo, 0.5), max(args.reps * 40, 200)
        )
        rows.append(("soft_threshold_count", backend, ms))

    end_to_end = (
        ("encode: project_sparse", lambda: proj.project_sparse(support, values), args.reps),
        ("decode: amp_recover", lambda: amp_recover(observation, proj), max(args.reps // 2, 1)),
    )
    for label, fn, reps in end_to_end:
        for backend, module in BACKENDS.items():
            with facade_backend(module):
                rows.append((label, backend, best_of(fn, reps)))

    print(f"installed backend: {kernels.BACKEND}; comparing {', '.join(BACKENDS)}")
    print(f"dim={args.dim} rows={args.rows} k={args.k}, best of {args.reps}\n")
    report(rows)


if __name__ == "__main__":
    main()
