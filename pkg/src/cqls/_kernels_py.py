"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_ext.pyx`` must agree with them.
"""

from __future__ import annotations

import numpy as np


def class_moments(P_cfg, bits, config_class, n_classes, phi):
    """Per-class probability and centred posterior allele means.

    P_cfg : (R, C) configuration probabilities for R allele frequencies.
    bits : (C, n) allele of chromosome k in configuration c.
    config_class : (C,) class index of each configuration.
    """
    P_cfg = np.asarray(P_cfg, dtype=float)
    R = P_cfg.shape[0]
    n = bits.shape[1]
    onehot = np.zeros((bits.shape[0], n_classes))
    onehot[np.arange(bits.shape[0]), config_class] = 1.0
    Pc = P_cfg @ onehot
    num = np.einsum("rc,ck,cq->rqk", P_cfg, bits.astype(float), onehot)
    with np.errstate(invalid="ignore", divide="ignore"):
        ybar = num / Pc[:, :, None]
    ybar = np.where(Pc[:, :, None] > 0, ybar, 0.0)
    a = ybar - np.asarray(phi, dtype=float).reshape(R, 1, 1)
    return Pc, a


def subset_sums(values, swaps):
    """Sum of ``values`` over random subsets chosen by partial Fisher-Yates.

    ``swaps[b, i]`` is the position (in ``[i, N)``) swapped into slot ``i``
    during shuffle ``b``; the first ``m = swaps.shape[1]`` slots form the
    subset.
    """
    values = np.asarray(values, dtype=float)
    swaps = np.asarray(swaps, dtype=np.int64)
    B, m = swaps.shape
    N = values.shape[0]
    out = np.zeros(B)
    chunk = max(1, min(B, 2_000_000 // max(N, 1)))
    for start in range(0, B, chunk):
        sw = swaps[start:start + chunk]
        b = sw.shape[0]
        perm = np.tile(np.arange(N, dtype=np.int64), (b, 1))
        rows = np.arange(b)
        acc = np.zeros(b)
        for i in range(m):
            j = sw[:, i]
            pick = perm[rows, j]
            perm[rows, j] = perm[rows, i]
            perm[rows, i] = pick
            acc += values[pick]
        out[start:start + b] = acc
    return out
