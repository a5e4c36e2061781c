"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from cqls import _kernels_py
from cqls.structures import Structure, config_probabilities_hwe

try:
    from cqls import _ext
except ImportError:
    _ext = None


def cases():
    st = Structure([(0, 1), (0, 2), (1, 3), (2, 3), (0, 3)])
    phi = np.linspace(0.05, 0.45, 2000)
    P = config_probabilities_hwe(phi, st.minor_counts, st.n)
    yield "class_moments", (P, st.bits, st.config_class, st.n_classes, phi)
    rng = np.random.default_rng(1)
    z = rng.normal(size=3000)
    m = 300
    swaps = np.arange(m)[None, :] + (rng.random((1000, m)) * (3000 - np.arange(m))).astype(np.int64)
    yield "subset_sums", (z, swaps)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<15}{'numpy (ms)':>12}{'cython (ms)':>13}{'speedup':>9}")
    for name, inputs in cases():
        py = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat))
        if _ext is None:
            print(f"{name:<15}{t_py * 1e3:>12.2f}{'n/a':>13}{'':>9}")
            continue
        ext = getattr(_ext, name)
        a, b = py(*inputs), ext(*inputs)
        for x, y in zip(a, b) if isinstance(a, tuple) else [(a, b)]:
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
        t_ext = min(timeit.repeat(lambda: ext(*inputs), number=1, repeat=args.repeat))
        print(f"{name:<15}{t_py * 1e3:>12.2f}{t_ext * 1e3:>13.2f}{t_py / t_ext:>8.1f}x")


if __name__ == "__main__":
    main()
