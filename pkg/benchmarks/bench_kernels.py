"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 200] [--clients 20]

Both backends are imported side by side, so ``FEDACS_NUMBA`` does not
matter here. The numba functions are warmed up once before timing so that
JIT compilation is not counted. Each line reports the median wall time per
call and the max absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from fedacs._kernels import numba_kernels, numpy_kernels


def _median_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cases(n_clients, rng):
    d, C, H, m = 20, 10, 32, 64
    X = rng.normal(size=(m, d))
    y = rng.integers(0, C, size=m)
    lin = rng.normal(size=(d + 1) * C) * 0.1
    mlp = rng.normal(size=(d + 1) * H + (H + 1) * C) * 0.1
    W = rng.normal(size=(n_clients, (d + 1) * C))
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    S = numpy_kernels.cosine_matrix(W, norms)
    return [
        ("linear_loss_grad", (X, y, lin, C)),
        ("mlp_loss_grad", (X, y, mlp, H, C, 0)),
        ("quadratic_loss_grad", (X, X[0].copy())),
        ("row_norms", (W,)),
        ("cosine_matrix", (W, norms)),
        ("attention_weights", (S, 0.0)),
        ("regularizer", (W, S)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--clients", type=int, default=20)
    args = parser.parse_args(argv)
    if numba_kernels is None:
        print("numba backend unavailable (FEDACS_NUMBA=0 or numba missing); nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy us':>12}{'numba us':>12}{'speedup':>10}{'max diff':>12}")
    for name, fn_args in cases(args.clients, rng):
        f_np, f_nb = getattr(numpy_kernels, name), getattr(numba_kernels, name)
        f_nb(*fn_args)  # compile
        t_np = _median_time(f_np, fn_args, args.repeat)
        t_nb = _median_time(f_nb, fn_args, args.repeat)
        diff = _max_diff(f_np(*fn_args), f_nb(*fn_args))
        print(f"{name:<22}{t_np * 1e6:>12.1f}{t_nb * 1e6:>12.1f}{t_np / t_nb:>10.2f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
