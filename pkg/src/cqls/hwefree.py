"""Score variance without assuming Hardy-Weinberg equilibrium.

Alleles on the (up to four) founder chromosomes of a family are modelled
through the joint genotype distribution of the two founding individuals,

    p = (p200, p110, p101, p020, p011, p002),

where ``p_xyz`` is the probability that the pair contains ``x`` individuals
with genotype 0, ``y`` with genotype 1 and ``z`` with genotype 2. A
heterozygous founder transmits either phase with probability 1/2.

``p`` is estimated per dataset by weighted least squares between observed
and predicted class frequencies (weight = chromosomes x families for each
structure) subject to ``p >= 0``, ``sum p = 1`` and the allele frequency
matching ``phi_hat``. The variance of each family's score is then taken
under this distribution.
"""

from __future__ import annotations

import itertools
import warnings

import numpy as np
from scipy import optimize

from .errors import UnsupportedTopologyError
from .structures import Structure

P_ORDER = ("p200", "p110", "p101", "p020", "p011", "p002")
# minor-allele weight of each entry, divided by four chromosomes
_FREQ_ROW = np.array([0.0, 0.25, 0.5, 0.5, 0.75, 1.0])
# ordered founder genotype pair -> (index into p, share of the unordered mass)
_PAIR = {
    (0, 0): (0, 1.0), (0, 1): (1, 0.5), (1, 0): (1, 0.5),
    (0, 2): (2, 0.5), (2, 0): (2, 0.5), (1, 1): (3, 1.0),
    (1, 2): (4, 0.5), (2, 1): (4, 0.5), (2, 2): (5, 1.0),
}


def hwe_genotype_model(phi: float) -> np.ndarray:
    """Founder-pair genotype distribution under random mating."""
    q = 1.0 - phi
    g = np.array([q * q, 2 * phi * q, phi * phi])
    return np.array([g[0] ** 2, 2 * g[0] * g[1], 2 * g[0] * g[2], g[1] ** 2, 2 * g[1] * g[2], g[2] ** 2])


def _colorings(st: Structure) -> list[np.ndarray]:
    """Assignments of chromosomes to the two founding individuals."""
    if st.founder_rows is None:
        founder_rows = np.zeros(st.n_ind, dtype=bool)
    else:
        founder_rows = st.founder_rows
    out = []
    for col in itertools.product((0, 1), repeat=st.n):
        col = np.array(col)
        if np.bincount(col, minlength=2).max() > 2:
            continue
        ok = True
        for (a, b), fr in zip(st.labels, founder_rows):
            if (col[a] == col[b]) != bool(fr):
                ok = False
                break
        if ok:
            out.append(col)
    return out


def _allele_prob(ys: np.ndarray, g: int) -> float:
    """P(observed alleles on one founder's chromosomes | its genotype)."""
    if len(ys) == 0:
        return 1.0
    if len(ys) == 1:
        return g / 2.0 if ys[0] == 1 else 1.0 - g / 2.0
    if ys.sum() != g:
        return 0.0
    return 0.5 if g == 1 else 1.0


def configuration_matrix(st: Structure) -> np.ndarray:
    """(2^n, 6) matrix ``K`` with configuration probabilities ``K @ p``.

    Averages uniformly over the assignments of chromosomes to founding
    individuals allowed by the pedigree (a founder's two chromosomes share
    an origin; a non-founder's two chromosomes do not).
    """
    K = getattr(st, "_hwefree_K", None)
    if K is not None:
        return K
    if st.n > 4:
        raise UnsupportedTopologyError(f"HWE-free variance needs at most four founder chromosomes, family has {st.n}")
    cols = _colorings(st)
    if not cols:
        raise UnsupportedTopologyError("no assignment of chromosomes to two founding individuals fits the family")
    K = np.zeros((2**st.n, 6))
    for col in cols:
        for c, y in enumerate(st.bits):
            ya, yb = y[col == 0], y[col == 1]
            for (ga, gb), (j, share) in _PAIR.items():
                K[c, j] += share * _allele_prob(ya, ga) * _allele_prob(yb, gb)
    K /= len(cols)
    st._hwefree_K = K
    return K


def class_matrix(st: Structure) -> np.ndarray:
    """(n_classes, 6) class probabilities as linear functions of ``p``."""
    K = configuration_matrix(st)
    out = np.zeros((st.n_classes, 6))
    np.add.at(out, st.config_class, K)
    return out


def fit_genotype_model(blocks, phi: float) -> np.ndarray:
    """Constrained least-squares estimate of ``p`` for one dataset.

    ``blocks`` is a list of ``(class_matrix, class_counts, n_chromosomes)``
    per structure. Falls back to the random-mating point with a warning if
    the optimizer fails.
    """
    H = np.zeros((6, 6))
    b = np.zeros(6)
    for Kc, counts, n in blocks:
        total = counts.sum()
        if total == 0:
            continue
        V = counts / total
        w = n * total
        H += w * Kc.T @ Kc
        b += w * Kc.T @ V
    p0 = hwe_genotype_model(phi)
    if not np.any(H):
        return p0
    scale = max(float(np.abs(H).max()), 1e-300)
    cons = [
        {"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones(6)},
        {"type": "eq", "fun": lambda p: _FREQ_ROW @ p - phi, "jac": lambda p: _FREQ_ROW},
    ]
    res = optimize.minimize(
        lambda p: (p @ H @ p - 2 * b @ p) / scale,
        p0,
        jac=lambda p: (2 * H @ p - 2 * b) / scale,
        bounds=[(0.0, 1.0)] * 6,
        constraints=cons,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    p = np.clip(res.x, 0.0, None)
    if not res.success or abs(p.sum() - 1) > 1e-6 or abs(_FREQ_ROW @ p - phi) > 1e-6:
        warnings.warn(f"HWE-free genotype model fit failed ({res.message}); using random-mating variance", RuntimeWarning)
        return p0
    return p / p.sum()


def fit_genotype_models(scores, valid: np.ndarray, phi: np.ndarray, fixed=None) -> np.ndarray:
    """(n_groups, 6) genotype models, one per dataset in ``scores``."""
    G = scores.n_groups
    if fixed is not None:
        fixed = np.asarray(fixed, dtype=float)
        if fixed.shape != (6,) or np.any(fixed < 0) or abs(fixed.sum() - 1) > 1e-9:
            raise ValueError("genotype model must be six nonnegative probabilities summing to 1")
        return np.tile(fixed, (G, 1))
    blocks: dict[int, list] = {g: [] for g in range(G)}
    for sid in np.unique(scores.structure[valid]):
        st = scores.cache[sid]
        Kc = class_matrix(st)
        idx = np.flatnonzero(valid & (scores.structure == sid))
        g = scores.group[idx]
        cnt = np.bincount(g * st.n_classes + scores.klass[idx], minlength=G * st.n_classes).reshape(G, st.n_classes)
        for gg in np.unique(g):
            blocks[int(gg)].append((Kc, cnt[gg].astype(float), st.n))
    out = np.zeros((G, 6))
    for g in range(G):
        if blocks[g] and 0.0 < phi[g] < 1.0:
            out[g] = fit_genotype_model(blocks[g], float(phi[g]))
        else:
            out[g] = hwe_genotype_model(float(np.clip(phi[g], 0.0, 1.0)))
    return out


def structure_covariance(st: Structure, a: np.ndarray, p: np.ndarray) -> np.ndarray:
    """(R, n, n) covariance of the centred allele scores ``a`` under ``p``.

    ``a`` is the (R, n_classes, n) table from ``Structure.class_moments``.
    """
    K = configuration_matrix(st)
    P_cfg = np.atleast_2d(p) @ K.T
    Pc = np.zeros((P_cfg.shape[0], st.n_classes))
    for r in range(P_cfg.shape[0]):
        Pc[r] = np.bincount(st.config_class, weights=P_cfg[r], minlength=st.n_classes)
    M = np.einsum("rc,rck,rcl->rkl", Pc, a, a)
    mu = np.einsum("rc,rck->rk", Pc, a)
    return M - mu[:, :, None] * mu[:, None, :]


def hwe_free_variance(scores, genotype_model=None) -> float:
    """Score variance of a single dataset under the fitted (or given) model."""
    from .core import cqls_batch

    res = cqls_batch(scores, "hwe_free", genotype_model=genotype_model)
    return float(res.variance[0])
