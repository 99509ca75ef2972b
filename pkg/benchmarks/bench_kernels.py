"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 200]

Prints one row per kernel and shape with the per-call time of each backend
and the speedup. Also checks that both backends return the same values.
"""

import argparse
import timeit

import numpy as np

from ctm.tensor.kernels import available_backends

SHAPES = [(8, 16), (64, 64), (256, 128)]


def cases(rng, n, d):
    q, k, v = (rng.normal(size=(n, d)) for _ in range(3))
    w = rng.normal(size=(d, d)) / np.sqrt(d)
    x = rng.normal(size=(n, d))
    yield "splitmix_bits", lambda m: m.splitmix_bits(7, 0, n * d)
    yield "dropout_mask", lambda m: m.dropout_mask(7, 0, n * d, 0.1, np.float64)
    yield "softmax_rows", lambda m: m.softmax_rows(x)
    yield "max_pool_rows", lambda m: m.max_pool_rows(x)
    yield "attend", lambda m: m.attend(q, w, k, v)

    def backward(m):
        proj, g, e = m.attend(q, w, k, v)
        return m.attend_backward(q, w, k, v, proj, g, np.ones_like(e))
    yield "attend+backward", backward


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-10, atol=1e-12)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; run `pip install -e . --no-build-isolation` first")
    names = sorted(backends)
    print(f"{'kernel':<16} {'shape':>10} " + " ".join(f"{b + ' us':>12}" for b in names) + "  speedup")
    rng = np.random.default_rng(0)
    for n, d in SHAPES:
        for name, fn in cases(rng, n, d):
            times = {b: min(timeit.repeat(lambda: fn(backends[b]), number=args.repeat, repeat=3)) / args.repeat * 1e6
                     for b in names}
            agree = "" if len(names) == 1 or _same(fn(backends["python"]), fn(backends["cython"])) else "  MISMATCH"
            speed = f"{times['python'] / times['cython']:7.2f}x" if "cython" in times else "      -"
            print(f"{name:<16} {f'{n}x{d}':>10} " + " ".join(f"{times[b]:12.1f}" for b in names) + f"  {speed}{agree}")


if __name__ == "__main__":
    main()
