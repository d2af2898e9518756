"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--n 512] [--d 16] [--P 32] [--repeat 50]

Prints the median time per call for each kernel and backend, the speedup,
and the wall time of a short ADMM solve under each backend.
"""

import argparse
import statistics
import time

import numpy as np

from cvxpref import admm, kernels, patterns, program


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--P", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--admm-iters", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.n, args.d))
    y = np.sign(rng.standard_normal(args.n))
    prog = program.ConvexProgram(X, patterns.sample_patterns(X, args.P, 0), y, 0.01)
    P, d, n = prog.P, prog.d, prog.n
    U = rng.standard_normal((2 * P, d))
    S = rng.standard_normal((2 * P, n))
    r = rng.standard_normal(n)
    rho = 0.01
    inv_diag = 1.0 / prog.jacobi_diagonal(rho).reshape(2 * P, d)
    A = np.abs(rng.standard_normal((4 * n, 2 * P)))
    labels = np.where(rng.random(4 * n) < 0.5, 1.0, -1.0)
    theta = rng.standard_normal(2 * P)

    cases = {
        "f_apply": lambda k: k.f_apply(X, prog.mask, U),
        "f_adjoint": lambda k: k.f_adjoint(X, prog.mask, r),
        "g_apply": lambda k: k.g_apply(X, prog.sign, U),
        "g_adjoint": lambda k: k.g_adjoint(X, prog.sign, S),
        "normal_apply": lambda k: k.normal_apply(X, prog.mask, prog.gram, U, rho),
        "normal_pcg(20)": lambda k: k.normal_pcg(X, prog.mask, prog.gram, rho, U, np.zeros_like(U), inv_diag, 0.0, 20),
        "group_shrink": lambda k: k.group_shrink(U, 0.5),
        "logistic_loss_grad": lambda k: k.logistic_loss_grad(A, labels, theta, 1.0, 0.5),
    }
    backends = kernels.available_backends()
    print(f"n={n} d={d} P={P}; backends: {', '.join(backends)}")
    results = {}
    for name in backends:
        mod = kernels.load_backend(name)
        for case, fn in cases.items():
            results[case, name] = median_time(lambda: fn(mod), args.repeat)
    header = f"{'kernel':<20}" + "".join(f"{b + ' (us)':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for case in cases:
        row = f"{case:<20}" + "".join(f"{results[case, b] * 1e6:>16.1f}" for b in backends)
        if len(backends) == 2:
            row += f"{results[case, 'python'] / results[case, 'cython']:>10.2f}"
        print(row)

    cfg = admm.AdmmConfig(rho=rho, max_iters=args.admm_iters, stop_tol=0.0)
    for name in backends:
        with kernels.use_backend(name):
            t0 = time.perf_counter()
            sol = admm.solve(prog, cfg)
            print(f"ADMM {args.admm_iters} iterations [{name}]: {time.perf_counter() - t0:.3f} s, "
                  f"objective {sol.objective:.6g}")


if __name__ == "__main__":
    main()
