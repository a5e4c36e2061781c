"""Permutation p-values for cQLS.

Founder chromosomes are independent under the null, so the minor alleles
observed on them are exchangeable across chromosome slots. Each
permutation deals the observed multiset of alleles uniformly over all
slots while the chromosome scores ``Z`` stay put.

Families are left out (and counted) when their labeling admits any
genotype pattern with non-identifiable alleles. Dropping only the families
whose observed genotypes are ambiguous would select on the alleles
themselves (for an IBD-1 sib pair it removes shared chromosomes carrying
the minor allele) and break exchangeability; selecting on the labeling
alone does not. In every retained family each chromosome's allele is known
up to swaps between chromosomes with identical carriers, which share
``Z``, so any representative configuration gives the same statistic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels, numerics
from .core import ScoreVector
from .errors import DegenerateDesignError, MonomorphicError
from .numerics import RandomStream

BLOCK = 256


@dataclass(frozen=True)
class PermutationPlan:
    """``n_permutations`` shuffles drawn from ``rng``.

    Permutations are generated in blocks of :data:`BLOCK`; block ``k`` uses
    ``rng.child(k)``, so results do not depend on how blocks are scheduled.
    """

    n_permutations: int
    rng: RandomStream = RandomStream(0)

    def __post_init__(self):
        if int(self.n_permutations) < 1:
            raise ValueError("need at least one permutation")


@dataclass
class PermutationResult:
    p_value: float
    statistic: float
    asymptotic_p: float
    n_permutations: int
    n_excluded: int
    n_chromosomes: int
    phi_hat: float


def slot_alleles(scores: ScoreVector) -> tuple[np.ndarray, np.ndarray, int]:
    """Chromosome scores and alleles of families whose labeling never
    leaves alleles ambiguous.

    Returns ``(z, y, n_excluded)``.
    """
    if scores.n_groups != 1:
        raise ValueError("permutation works on a single dataset")
    can = np.array([s.can_be_ambiguous for s in scores.cache.structures], dtype=bool)
    keep = (scores.klass >= 0) & ~can[scores.structure]
    zs, ys = [], []
    for f in np.flatnonzero(keep):
        st = scores.cache[scores.structure[f]]
        zs.append(scores.family_z(f))
        ys.append(st.class_representative[scores.klass[f]])
    n_excluded = int(len(keep) - keep.sum() + scores.excluded[0])
    if not zs:
        return np.zeros(0), np.zeros(0, dtype=np.int64), n_excluded
    return np.concatenate(zs), np.concatenate(ys).astype(np.int64), n_excluded


def _block_sums(z: np.ndarray, m: int, count: int, stream: RandomStream) -> np.ndarray:
    """Sum of ``z`` over ``count`` uniformly random ``m``-subsets."""
    N = len(z)
    gen = stream.generator()
    low = np.arange(m)
    swaps = low[None, :] + np.floor(gen.random((count, m)) * (N - low)[None, :]).astype(np.int64)
    return kernels.subset_sums(z, swaps)


def permutation_pvalue(scores: ScoreVector, plan: PermutationPlan, threads: int = 1) -> PermutationResult:
    """Add-one permutation p-value of the cQLS statistic.

    ``p = (1 + #{b : T_b >= T_obs}) / (B + 1)`` where ``T`` is the squared
    centred score over its variance; with every allele identified this is
    the cQLS statistic.
    """
    z, y, n_excl = slot_alleles(scores)
    N = len(z)
    m = int(y.sum())
    if N == 0 or m == 0 or m == N:
        raise MonomorphicError("no variation in alleles among identifiable families")
    phi = m / N
    zbar = z.mean()
    var = phi * (1 - phi) * float(((z - zbar) ** 2).sum())
    if not var > 1e-12 * phi * (1 - phi) * float((z * z).sum()):
        raise DegenerateDesignError("chromosome scores do not vary")
    center = phi * float(z.sum())
    obs = float(z @ y) - center
    stat = obs * obs / var

    # draw the smaller of minor / major subsets
    flip = m > N - m
    k = N - m if flip else m
    total = float(z.sum())
    B = int(plan.n_permutations)
    blocks = [(b, min(BLOCK, B - b * BLOCK)) for b in range((B + BLOCK - 1) // BLOCK)]

    def run(blk):
        idx, count = blk
        s = _block_sums(z, k, count, plan.rng.child(idx))
        return total - s if flip else s

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            sums = np.concatenate(list(ex.map(run, blocks)))
    else:
        sums = np.concatenate([run(b) for b in blocks])
    dev = np.abs(sums - center)
    tol = 1e-9 * max(abs(obs), float(np.abs(z).sum()) * 1e-3)
    hits = int(np.sum(dev >= abs(obs) - tol))
    return PermutationResult(
        p_value=(1 + hits) / (B + 1),
        statistic=stat,
        asymptotic_p=numerics.chisq1_sf(stat),
        n_permutations=B,
        n_excluded=n_excl,
        n_chromosomes=N,
        phi_hat=phi,
    )
