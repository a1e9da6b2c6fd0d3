#!/usr/bin/env python3
"""Benchmark the compiled product kernels against the NumPy fallback.

Run after an editable install:

    python benchmarks/bench_kernels.py [--n 32] [--reps 30]

The compiled backend fuses the component sums into single passes over the
grid; the fallback composes einsum calls.  Both produce identical results
(see tests/test_kernels.py).
"""

import argparse
import time

import numpy as np

import stochvort._kernels_py as kpy
from stochvort import diagnostics as diag
from stochvort import noise
from stochvort.field import Grid, grad_tensor, hessian_tensor

try:
    import stochvort._kernels_cy as kcy
except ImportError:
    kcy = None


def flat(a, rank):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(a.shape[:rank] + (-1,))


def bench(name, fn, reps):
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return name, (time.perf_counter() - t0) / reps * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--reps", type=int, default=30)
    args = ap.parse_args()

    g = Grid(args.n)
    basis = noise.build_fourier_basis(g, kmax=2, alpha=3.0)
    xi = basis.modes[7].xi
    f = diag.random_trig_field(g, min(6, g.dealias_cut - 4), seed=1)
    gfld = diag.random_trig_field(g, min(6, g.dealias_cut - 4), seed=2)
    gf, hf = grad_tensor(f), hessian_tensor(f)
    gg = grad_tensor(gfld)

    xp, xg, xh = flat(xi.phys, 1), flat(xi.grad, 2), flat(xi.hess, 3)
    fp, gfl, hfl = flat(f.phys, 1), flat(gf, 2), flat(hf, 3)
    gp, ggl = flat(gfld.phys, 1), flat(gg, 2)
    a = flat(xi.a_table, 2)
    out = np.empty_like(fp)
    acc = np.empty(14)

    cases = []
    backends = [("numpy", kpy)] + ([("cython", kcy)] if kcy else [])
    for label, mod in backends:
        cases.append(bench(f"lie_product[{label}]", lambda m=mod: m.lie_product(xp, xg, fp, gfl, out), args.reps))
        cases.append(bench(f"adjoint_product[{label}]", lambda m=mod: m.adjoint_product(xp, xg, fp, gfl, out), args.reps))
        cases.append(bench(f"mat_apply[{label}]", lambda m=mod: m.mat_apply(a, fp, out), args.reps))
        cases.append(
            bench(
                f"identity_checks[{label}]",
                lambda m=mod: m.identity_checks(xp, xg, xh, fp, gfl, hfl, gp, ggl, 1.0, acc),
                args.reps,
            )
        )

    print(f"n = {args.n}, {args.reps} reps, compiled backend {'present' if kcy else 'MISSING'}")
    width = max(len(c[0]) for c in cases)
    by_kernel = {}
    for name, ms in cases:
        print(f"  {name:<{width}}  {ms:8.3f} ms")
        kernel = name.split("[")[0]
        by_kernel.setdefault(kernel, {})[name.split("[")[1][:-1]] = ms
    if kcy:
        print("speedups (numpy / cython):")
        for kernel, vals in by_kernel.items():
            if "cython" in vals:
                print(f"  {kernel:<{width}}  {vals['numpy'] / vals['cython']:6.2f}x")


if __name__ == "__main__":
    main()
