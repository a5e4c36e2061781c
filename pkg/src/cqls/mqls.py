"""Kinship-based quasi-likelihood score test (mQLS).

With ``Phi`` the kinship matrix of the genotyped individuals (``N``) and
the cross block ``Phi_NM`` to phenotype-only relatives (``M``), phenotype
codes ``a`` (1 affected, 0 unknown, ``-pi0/(1-pi0)`` unaffected):

    alpha = a_N + Phi^{-1} Phi_NM a_M
    Gamma = alpha^T Phi alpha - (1^T alpha)^2 / (1^T Phi^{-1} 1)
    p     = 1/2 (1^T Phi^{-1} 1)^{-1} 1^T Phi^{-1} G
    raw   = [1/2 p (1-p)]^{-1} ((G/2 - p)^T alpha)^2 / Gamma

Under the null ``Cov(G/2) = p(1-p) Phi``, so ``raw`` is twice a
chi-square(1) variable. The reported statistic divides by two (``scale=
"aligned"``); ``scale="raw"`` keeps ``raw``. For unrelated
individuals the aligned statistic equals the allelic chromosome-count
score test.

Families are independent, so every quantity is a sum of per-family terms;
:class:`MqlsPlan` precomputes them once per family layout and evaluates
many genotype replicates at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from . import numerics
from .core import TestResult
from .errors import DegenerateDesignError, MonomorphicError
from .pedigree import AFFECTED, UNAFFECTED, UNKNOWN, Pedigree, family_kinship

SCALES = {"aligned": 0.5, "raw": 1.0}


def phenotype_code(affection: int, pi0: float, positive_unaffected: bool = False) -> float:
    """Phenotype weight: 1 affected, 0 unknown, -pi0/(1-pi0) unaffected.

    ``positive_unaffected`` drops the minus sign on the unaffected weight.
    """
    if affection == AFFECTED:
        return 1.0
    if affection == UNKNOWN:
        return 0.0
    if affection == UNAFFECTED:
        w = pi0 / (1.0 - pi0)
        return w if positive_unaffected else -w
    raise ValueError(f"bad affection code {affection!r}")


@dataclass
class MqlsInput:
    """Dense inputs: genotypes of the first ``len(G)`` individuals, the full
    kinship matrix (genotyped first) and the phenotype codes."""

    G: np.ndarray
    kinship: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.kinship = np.asarray(self.kinship, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        n = len(self.a)
        if self.kinship.shape != (n, n) or len(self.G) > n:
            raise ValueError("mQLS inputs are not conformable")

    @property
    def n_genotyped(self) -> int:
        return len(self.G)


def _cholesky(P: np.ndarray):
    try:
        return linalg.cho_factor(P, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise DegenerateDesignError("kinship matrix of genotyped individuals is not positive definite") from exc


def family_terms(kinship: np.ndarray, a: np.ndarray, n_genotyped: int):
    """Per-family ``(alpha, w, alpha^T Phi alpha, 1^T alpha, 1^T w)`` with
    ``w = Phi^{-1} 1``."""
    ng = n_genotyped
    P = kinship[:ng, :ng]
    cf = _cholesky(P)
    alpha = a[:ng].copy()
    if kinship.shape[0] > ng:
        alpha = alpha + linalg.cho_solve(cf, kinship[:ng, ng:] @ a[ng:])
    w = linalg.cho_solve(cf, np.ones(ng))
    return alpha, w, float(alpha @ P @ alpha), float(alpha.sum()), float(w.sum())


def mqls(inp: MqlsInput, scale: str = "aligned") -> TestResult:
    """mQLS from dense inputs (one Cholesky of the genotyped block)."""
    if inp.n_genotyped < 2:
        raise DegenerateDesignError("mQLS needs at least two genotyped individuals")
    alpha, w, aPa, s_alpha, s_w = family_terms(inp.kinship, inp.a, inp.n_genotyped)
    return _finish(float(w @ inp.G), s_w, float(inp.G @ alpha), s_alpha, aPa, inp.n_genotyped, scale)


def _finish(wG, s_w, Galpha, s_alpha, aPa, n_g, scale) -> TestResult:
    p = 0.5 * wG / s_w
    if not 0.0 < p < 1.0:
        raise MonomorphicError(f"null allele frequency estimate {p} is not inside (0, 1)")
    gamma = aPa - s_alpha * s_alpha / s_w
    if not gamma > 1e-12 * max(abs(aPa), 1e-300):
        raise DegenerateDesignError("mQLS variance factor Gamma is not positive")
    num = 0.5 * Galpha - p * s_alpha
    stat = SCALES[scale] * num * num / (0.5 * p * (1.0 - p) * gamma)
    return TestResult(
        statistic=stat,
        score=num,
        variance=0.5 * p * (1 - p) * gamma / SCALES[scale],
        p_value=numerics.chisq1_sf(stat),
        method="mqls",
        n_chromosomes=2 * n_g,
        n_excluded_families=0,
        phi_hat=p,
    )


class MqlsPlan:
    """Precomputed per-family terms for batched evaluation.

    Parameters
    ----------
    layouts
        Distinct family layouts, each ``(kinship, a, n_genotyped)`` with the
        family's genotyped members first.
    """

    def __init__(self, layouts: Sequence[tuple[np.ndarray, np.ndarray, int]], scale: str = "aligned"):
        if scale not in SCALES:
            raise ValueError(f"unknown scale {scale!r}")
        self.scale = scale
        self.width = max(int(ng) for _, _, ng in layouts)
        L = len(layouts)
        self.alpha = np.zeros((L, self.width))
        self.w = np.zeros((L, self.width))
        self.aPa = np.zeros(L)
        self.s_alpha = np.zeros(L)
        self.s_w = np.zeros(L)
        self.n_g = np.zeros(L, dtype=np.int64)
        for k, (K, a, ng) in enumerate(layouts):
            al, w, aPa, sa, sw = family_terms(np.asarray(K, float), np.asarray(a, float), int(ng))
            self.alpha[k, :ng] = al
            self.w[k, :ng] = w
            self.aPa[k], self.s_alpha[k], self.s_w[k], self.n_g[k] = aPa, sa, sw, ng

    def evaluate(self, layout: np.ndarray, genotypes: np.ndarray, group: np.ndarray, n_groups: int):
        """Statistics for ``n_groups`` datasets.

        ``layout[f]`` indexes the family layout, ``genotypes[f, :n_g]`` its
        genotypes (padding ignored), ``group[f]`` its dataset. Returns
        ``(statistic, p_value, phi_hat, status)`` arrays; status uses the
        codes of :mod:`cqls.core`.
        """
        from .core import STATUS_DEGENERATE, STATUS_MONOMORPHIC, STATUS_OK

        layout = np.asarray(layout, dtype=np.int64)
        G = np.asarray(genotypes, dtype=float)[:, : self.width]
        if G.shape[1] < self.width:
            G = np.pad(G, ((0, 0), (0, self.width - G.shape[1])))
        wG = np.bincount(group, weights=(self.w[layout] * G).sum(axis=1), minlength=n_groups)
        Ga = np.bincount(group, weights=(self.alpha[layout] * G).sum(axis=1), minlength=n_groups)
        s_w = np.bincount(group, weights=self.s_w[layout], minlength=n_groups)
        s_a = np.bincount(group, weights=self.s_alpha[layout], minlength=n_groups)
        aPa = np.bincount(group, weights=self.aPa[layout], minlength=n_groups)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = 0.5 * wG / s_w
            gamma = aPa - s_a * s_a / s_w
            num = 0.5 * Ga - p * s_a
            stat = SCALES[self.scale] * num * num / (0.5 * p * (1 - p) * gamma)
        mono = ~((p > 0) & (p < 1))
        degen = ~mono & ~(gamma > 1e-12 * np.abs(aPa))
        status = np.where(mono, STATUS_MONOMORPHIC, np.where(degen, STATUS_DEGENERATE, STATUS_OK))
        ok = status == STATUS_OK
        stat = np.where(ok, stat, np.nan)
        pval = np.full(n_groups, np.nan)
        pval[ok] = numerics.chisq1_sf_array(stat[ok])
        return stat, pval, p, status


def mqls_pedigree(
    ped: Pedigree,
    genotypes: Mapping[tuple[str, str], float | None],
    pi0: float,
    positive_unaffected: bool = False,
    scale: str = "aligned",
) -> TestResult:
    """mQLS for one SNP over a pedigree.

    Members without a genotype at the SNP join the phenotype-only block.
    """
    layouts, G = [], []
    for fid in sorted(ped.families):
        fam = ped[fid]
        typed = [i for i in sorted(fam.members) if _has(genotypes.get((fid, i)))]
        other = [i for i in sorted(fam.members) if i not in typed]
        if not typed:
            continue
        order = typed + other
        K = family_kinship(fam, order)
        a = np.array([phenotype_code(fam.members[i].affection, pi0, positive_unaffected) for i in order])
        layouts.append((K, a, len(typed)))
        G.append([float(genotypes[(fid, i)]) for i in typed])
    n_g = sum(len(g) for g in G)
    if n_g < 2:
        raise DegenerateDesignError("mQLS needs at least two genotyped individuals")
    plan = MqlsPlan(layouts, scale=scale)
    width = plan.width
    Gm = np.zeros((len(G), width))
    for k, g in enumerate(G):
        Gm[k, : len(g)] = g
    f = np.arange(len(G))
    wG = float((plan.w[f] * Gm).sum())
    Ga = float((plan.alpha[f] * Gm).sum())
    return _finish(wG, float(plan.s_w.sum()), Ga, float(plan.s_alpha.sum()), float(plan.aPa.sum()), n_g, scale)


def _has(g) -> bool:
    return g is not None and not (isinstance(g, float) and np.isnan(g))
