"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--size PX]

Each case runs once per backend to warm up, then ``--repeats`` times; the
best wall time is reported together with the compiled speed-up and the
largest difference between the two backends' results.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hemisym import _kernels
from hemisym.classify import SVMConfig, train_svm
from hemisym.hemithorax import segment_hemithoraces
from hemisym.phantom import generate, random_spec
from hemisym.snake import SnakeParams, SnakeTrace, circle_contour, contour_to_mask, fit_snake


def best_time(func, repeats):
    result = func()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = func()
        best = min(best, time.perf_counter() - t0)
    return best, result


def cases(size):
    rng = np.random.default_rng(0)
    ph = generate(random_spec(rng, False, frame=(size, size)))
    params = SnakeParams()

    def snake():
        trace = SnakeTrace([], 0, False)
        c = fit_snake(ph.ribs, params, trace=trace)
        return c.vertices

    def segmentation():
        pair = segment_hemithoraces(ph.ribs, ph.spine, params)
        return np.concatenate([pair.left.ravel(), pair.right.ravel()]).astype(float)

    X = rng.random((400, 7))
    y = (X[:, 0] + 0.2 * rng.standard_normal(400) > 0.5).astype(int)

    def svm():
        model = train_svm(X, y, SVMConfig(C=1.0, gamma=1.0))
        return model.decision(X)

    c = circle_contour(size / 2, size / 2, size * 0.4, 400)

    def fill():
        return contour_to_mask(c, size, size).astype(float)

    return {"snake descent": snake, "SMO solver (400 rows)": svm,
            f"polygon fill ({size}^2)": fill, f"segmentation ({size}^2)": segmentation}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--size", type=int, default=1024)
    args = parser.parse_args(argv)
    if not _kernels.COMPILED_AVAILABLE:
        print("compiled kernels not built; only the Python backend is available")
        return 1
    previous = _kernels.backend()
    print(f"{'case':<28}{'python s':>10}{'compiled s':>12}{'speed-up':>10}{'max diff':>11}")
    try:
        for name, func in cases(args.size).items():
            _kernels.use_backend("python")
            t_py, r_py = best_time(func, args.repeats)
            _kernels.use_backend("compiled")
            t_c, r_c = best_time(func, args.repeats)
            diff = float(np.max(np.abs(np.asarray(r_py) - np.asarray(r_c))))
            print(f"{name:<28}{t_py:>10.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x{diff:>11.2e}")
    finally:
        _kernels.use_backend(previous)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
