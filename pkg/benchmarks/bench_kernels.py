"""Benchmark the compiled stencil/GELU kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--grid N] [--repeat R]

Times the raw kernels on both backends and one guided-sampling step end to
end (the latter is FFT/BLAS-dominated, so the kernel speedup gives a bounded
overall gain; the table makes that explicit).
"""

import argparse
import time

import numpy as np

from flowpde import kernels
from flowpde.grids import Field, Grid, GrfConfig, make_rng, observe
from flowpde.model import ModelConfig, init_model
from flowpde.pde import NormalizedResidual, PdeProblem
from flowpde.samplers import ReferenceMeasure, SamplerConfig, proximal_refine


def time_fn(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backends(n, repeat):
    rng = np.random.default_rng(0)
    a = rng.random((n, n)) + 0.5
    u = rng.standard_normal((n, n))
    r = rng.standard_normal((n - 2, n - 2))
    ub = rng.standard_normal((n, n))
    rb = rng.standard_normal((n - 1, n))
    x = rng.standard_normal((16, n, n))
    g = rng.standard_normal((16, n, n))
    h = 1.0 / (n - 1)
    rows = []
    cases = {
        "elliptic_apply": lambda impl: impl.elliptic_apply(a, u, 0.5, h, h),
        "elliptic_adjoint": lambda impl: impl.elliptic_adjoint(a, r, 0.5, h, h),
        "coeff_adjoint": lambda impl: impl.elliptic_coeff_adjoint(u, r, h, h),
        "burgers_apply": lambda impl: impl.burgers_apply(ub, 0.01, h, 1.0 / n, True),
        "burgers_adjoint": lambda impl: impl.burgers_adjoint(ub, rb, 0.01, h, 1.0 / n, False),
        "gelu_forward": lambda impl: impl.gelu_forward(x),
        "gelu_backward": lambda impl: impl.gelu_backward(x, np.tanh(x), g),
    }
    loops = max(1, 2000 // n)
    for name, call in cases.items():
        times = {}
        for backend, impl in kernels.ALL_BACKENDS.items():
            times[backend] = time_fn(lambda: [call(impl) for _ in range(loops)], repeat) / loops
        rows.append((name, times))
    return rows


def bench_prox_step(n, repeat):
    grid = Grid("spatial2d", n, n)
    problem = PdeProblem.poisson(grid, f=Field.zeros(grid))
    res = NormalizedResidual.identity(problem, 2)
    rng = make_rng(0)
    mu0 = ReferenceMeasure(grid, 2, GrfConfig(0.05, 2.0, 1.0))
    anchor = mu0.draw(rng)
    mask = rng.random((2, n, n)) < 0.5
    obs = observe(Field(grid, mu0.draw(rng)), mask, 0.05, rng)
    cfg = SamplerConfig(steps=100, lambda_pde=1e-4, prox_iters=3, eta0=1e-4)
    return time_fn(lambda: proximal_refine(anchor, obs, res, cfg, t=0.2), repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in kernels.ALL_BACKENDS:
        print("compiled backend unavailable; timing the fallback only")
    print(f"active backend: {kernels.BACKEND}   grid: {args.grid}x{args.grid}\n")
    rows = bench_backends(args.grid, args.repeat)
    header = f"{'kernel':<18}" + "".join(f"{b:>14}" for b in kernels.ALL_BACKENDS) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, times in rows:
        line = f"{name:<18}" + "".join(f"{times[b] * 1e6:>12.1f}us" for b in times)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)
    prox = bench_prox_step(args.grid, args.repeat)
    print(f"\nproximal refinement step (K=3, {args.grid}x{args.grid}, "
          f"{kernels.BACKEND} backend): {prox * 1e3:.2f} ms")
    print("note: model forward/VJP costs are FFT/BLAS-bound and identical across backends")


if __name__ == "__main__":
    main()
