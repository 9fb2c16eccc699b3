"""Compare the compiled and pure-Python conv1d kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow the desk-scale network (16 filters, width 3, input length 8)
and the full-scale one (128 filters) for a 32-sample minibatch.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from uwbsel.nn import kernels

CASES = {
    "desk conv1 (1->16, L=8)": (32, 1, 8, 16),
    "desk conv2 (16->16, L=6)": (32, 16, 6, 16),
    "full-width conv2 (128->128, L=6)": (32, 128, 6, 128),
}


def bench(backend, x, w, b, dy, repeat: int) -> tuple[float, float]:
    fwd = timeit.timeit(lambda: backend.conv1d_forward(x, w, b, 1, 0), number=repeat) / repeat
    bwd = timeit.timeit(lambda: backend.conv1d_backward(x, w, dy, 1, 0), number=repeat) / repeat
    return fwd, bwd


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["compiled"] = kernels.compiled_backend
    else:
        print("compiled backend not built; timing the Python kernels only")
    rng = np.random.default_rng(0)
    print(f"{'case':30s} {'backend':9s} {'forward us':>11s} {'backward us':>12s}")
    for name, (n, c_in, length, c_out) in CASES.items():
        x = rng.standard_normal((n, c_in, length))
        w = rng.standard_normal((c_out, c_in, 3))
        b = rng.standard_normal(c_out)
        dy = rng.standard_normal((n, c_out, length - 2))
        ref = None
        for label, be in backends.items():
            y = be.conv1d_forward(x, w, b, 1, 0)
            if ref is None:
                ref = y
            elif not np.allclose(y, ref, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{label} disagrees with the reference on {name}")
            f, g = bench(be, x, w, b, dy, args.repeat)
            print(f"{name:30s} {label:9s} {f * 1e6:11.1f} {g * 1e6:12.1f}")


if __name__ == "__main__":
    main()
