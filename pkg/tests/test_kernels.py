import os
import subprocess
import sys

import numpy as np
import pytest

from cqls import _kernels_py, kernels
from cqls.structures import Structure, config_probabilities_hwe

try:
    from cqls import _ext
except ImportError:  # pragma: no cover
    _ext = None

needs_ext = pytest.mark.skipif(_ext is None, reason="compiled extension not built")


def test_subset_sums_reference():
    # partial Fisher-Yates: swap slot j with swaps[j], then sum the first m
    z = np.arange(10.0)
    swaps = np.array([[3, 1, 9], [0, 5, 2]])
    out = _kernels_py.subset_sums(z, swaps)
    ref = []
    for row in swaps:
        idx = list(range(10))
        for j, s in enumerate(row):
            idx[j], idx[s] = idx[s], idx[j]
        ref.append(z[idx[:3]].sum())
    np.testing.assert_allclose(out, ref)


@needs_ext
@pytest.mark.parametrize("labels", [[(0, 1)], [(0, 1), (1, 2)], [(0, 1), (0, 2), (1, 3), (2, 3), (0, 3)]])
def test_class_moments_backends_agree(labels):
    st = Structure(labels)
    phi = np.linspace(0.02, 0.5, 17)
    P = config_probabilities_hwe(phi, st.minor_counts, st.n)
    a = _kernels_py.class_moments(P, st.bits, st.config_class, st.n_classes, phi)
    b = _ext.class_moments(P, st.bits, st.config_class, st.n_classes, phi)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15)


@needs_ext
def test_subset_sums_backends_agree():
    rng = np.random.default_rng(0)
    z = rng.normal(size=500)
    m = 120
    swaps = np.arange(m)[None, :] + (rng.random((64, m)) * (500 - np.arange(m))).astype(np.int64)
    np.testing.assert_allclose(_kernels_py.subset_sums(z, swaps), _ext.subset_sums(z, swaps), rtol=1e-12)


def test_pure_python_switch():
    code = "from cqls import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CQLS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("python", "cython")
