"""Time the compiled and numpy kernel backends on the same problems.

Runs loss+gradient and Hessian-vector products on a dense MNIST-shaped
problem and a sparse LIBSVM-shaped one, once per available backend, and
checks that both backends agree before reporting timings.

    python3 benchmarks/bench_kernels.py --repeat 20
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from newton_admm import kernels
from newton_admm.softmax import Dataset, SoftmaxObjective


def dense_problem(n, p, C, rng):
    X = rng.random((n, p))
    X[X < 0.8] = 0.0  # roughly MNIST's share of blank pixels
    return Dataset(X, rng.integers(1, C + 1, n), C)


def sparse_problem(n, p, C, density, rng):
    A = sp.random(n, p, density=density, format="csr", random_state=rng)
    return Dataset(A, rng.integers(1, C + 1, n), C)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_case(name, data, repeat, rng):
    w = 0.01 * rng.standard_normal(data.d)
    v = rng.standard_normal(data.d)
    results = {}
    for backend in kernels.available():
        with kernels.use_backend(backend):
            obj = SoftmaxObjective(data, 1e-5)
            op = obj.hessian_operator(w)
            f, g = obj.value_and_gradient(w)
            hv = op(v)
            t_fg = best_of(lambda: obj.value_and_gradient(w), repeat)
            t_hv = best_of(lambda: op(v), repeat)
        results[backend] = (f, g, hv, t_fg, t_hv)
    ref = results["python"]
    for backend, (f, g, hv, t_fg, t_hv) in sorted(results.items()):
        err = max(abs(f - ref[0]) / abs(ref[0]),
                  np.linalg.norm(g - ref[1]) / np.linalg.norm(ref[1]),
                  np.linalg.norm(hv - ref[2]) / np.linalg.norm(ref[2]))
        print(f"{name:<28} {backend:<9} f+g {t_fg * 1e3:9.3f} ms   Hv {t_hv * 1e3:9.3f} ms"
              f"   max rel diff vs python {err:.1e}")
    if "compiled" in results:
        c, p = results["compiled"], results["python"]
        print(f"{'':<28} speedup   f+g {p[3] / c[3]:7.2f}x      Hv {p[4] / c[4]:7.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"backends available: {', '.join(kernels.available())}")
    run_case("shard 2250x10, C=4", dense_problem(2250, 10, 4, rng), args.repeat, rng)
    run_case("shard 2250x10 as CSR", dense_problem(2250, 10, 4, rng).to_sparse(), args.repeat, rng)
    run_case("dense 5000x784, C=10", dense_problem(5000, 784, 10, rng), args.repeat, rng)
    run_case("dense 5000x784 as CSR", dense_problem(5000, 784, 10, rng).to_sparse(), args.repeat, rng)
    run_case("sparse 20000x5000 (1%)", sparse_problem(20000, 5000, 5, 0.01, rng), args.repeat, rng)


if __name__ == "__main__":
    main()
