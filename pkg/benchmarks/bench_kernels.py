"""Compare the compiled and pure-Python E-step kernels.

Usage: python benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import timeit

import numpy as np

from noisykoop import _backend, kbk
from noisykoop.embed import BlockData

SIZES = [(2, 25), (4, 50), (4, 200), (8, 100)]


def make_problem(M, Q, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, M))
    A *= 0.9 / np.abs(np.linalg.eigvals(A)).max()
    z, Y = rng.standard_normal(M), []
    for _ in range(Q):
        Y.append(z + 0.1 * rng.standard_normal(M))
        z = A @ z + 0.01 * rng.standard_normal(M)
    data = BlockData(np.array(Y))
    return kbk.default_init(data), data


def best_of(fn, repeats):
    return min(timeit.repeat(fn, number=1, repeat=repeats))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--em-iters", type=int, default=50)
    args = p.parse_args()
    backends = ["python"] + (["cython"] if _backend.compiled_kernel is not None else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the Python fallback only")
    em_cfg = kbk.EMConfig(max_iterations=args.em_iters, likelihood_rel_tol=1e-300)
    print(f"{'task':<8} {'M':>3} {'Q':>5} " + " ".join(f"{b + ' [ms]':>14}" for b in backends) + f" {'speedup':>8}")
    for task in ("e_step", "em_fit"):
        for M, Q in SIZES:
            model, data = make_problem(M, Q)
            times = []
            for b in backends:
                if task == "e_step":
                    fn = lambda b=b: kbk.e_step(model, data, b)  # noqa: E731
                    reps = args.repeats
                else:
                    fn = lambda b=b: kbk.em_fit(data, em_cfg, model, b)  # noqa: E731
                    reps = max(1, args.repeats // 10)
                times.append(1e3 * best_of(fn, reps))
            speed = f"{times[0] / times[-1]:>7.1f}x" if len(times) > 1 else ""
            print(f"{task:<8} {M:>3} {Q:>5} " + " ".join(f"{t:>14.3f}" for t in times) + f" {speed:>8}")


if __name__ == "__main__":
    main()
