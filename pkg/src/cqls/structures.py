"""Enumeration of founder-allele configurations for one family structure.

A *structure* is the incidence of a family's genotyped individuals on its
observed founder chromosomes: row ``i`` of ``labels`` holds the two local
chromosome indices carried by individual ``i``. Every 0/1 assignment of
alleles to the ``n`` chromosomes (a *configuration*) produces a genotype
vector; configurations producing the same genotype vector form a *class*,
and a class is exactly what an observed family reveals about its alleles.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import kernels

MAX_CHROMOSOMES = 16


def canonical_labels(labels) -> tuple[tuple[int, int], ...]:
    """Relabel chromosomes 0..n-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    out = []
    for a, b in labels:
        a, b = sorted((a, b))
        for x in (a, b):
            if x not in mapping:
                mapping[x] = len(mapping)
        out.append(tuple(sorted((mapping[a], mapping[b]))))
    return tuple(out)


class Structure:
    """Configuration table for a fixed labeling of genotyped individuals.

    Parameters
    ----------
    labels
        Sequence of ``(chrom_a, chrom_b)`` pairs with chromosomes numbered
        ``0..n-1`` and ``chrom_a != chrom_b``.
    founder_rows
        Optional flag per individual marking pedigree founders (whose two
        chromosomes come from the same founding individual); needed only by
        the HWE-free variance.
    """

    def __init__(self, labels, founder_rows=None):
        lab = np.asarray(labels, dtype=np.int64).reshape(-1, 2)
        if lab.size == 0:
            raise ValueError("structure needs at least one individual")
        if np.any(lab[:, 0] == lab[:, 1]):
            raise ValueError("an individual cannot carry the same founder chromosome twice")
        n = int(lab.max()) + 1
        if sorted(set(lab.ravel().tolist())) != list(range(n)):
            raise ValueError("chromosome labels must be contiguous from 0")
        if n > MAX_CHROMOSOMES:
            raise ValueError(f"structures with more than {MAX_CHROMOSOMES} chromosomes are not enumerable")
        self.labels = lab
        self.n = n
        self.n_ind = lab.shape[0]
        self.founder_rows = None if founder_rows is None else np.asarray(founder_rows, dtype=bool).reshape(-1)

    @cached_property
    def incidence(self) -> np.ndarray:
        """(n, n_ind) copy counts of chromosome k in individual i."""
        inc = np.zeros((self.n, self.n_ind), dtype=np.int64)
        for i, (a, b) in enumerate(self.labels):
            inc[a, i] += 1
            inc[b, i] += 1
        return inc

    @cached_property
    def bits(self) -> np.ndarray:
        idx = np.arange(2**self.n, dtype=np.int64)
        return ((idx[:, None] >> np.arange(self.n)) & 1).astype(np.int64)

    @cached_property
    def minor_counts(self) -> np.ndarray:
        return self.bits.sum(axis=1)

    @cached_property
    def _classes(self):
        geno = self.bits @ self.incidence
        codes = geno @ (3 ** np.arange(self.n_ind, dtype=np.int64))
        uniq, inverse = np.unique(codes, return_inverse=True)
        return uniq, inverse.astype(np.int64)

    @property
    def class_codes(self) -> np.ndarray:
        return self._classes[0]

    @property
    def config_class(self) -> np.ndarray:
        return self._classes[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_codes)

    def genotype_code(self, genotypes) -> np.ndarray:
        g = np.asarray(genotypes, dtype=np.int64)
        return g @ (3 ** np.arange(self.n_ind, dtype=np.int64))

    def class_of(self, genotypes) -> np.ndarray:
        """Class index for each genotype row (-1 when no configuration fits)."""
        codes = np.atleast_1d(self.genotype_code(genotypes))
        pos = np.searchsorted(self.class_codes, codes)
        pos = np.clip(pos, 0, self.n_classes - 1)
        return np.where(self.class_codes[pos] == codes, pos, -1)

    @cached_property
    def carrier_groups(self) -> np.ndarray:
        """Group id per chromosome; chromosomes with the same carriers share a group."""
        _, groups = np.unique(self.incidence, axis=0, return_inverse=True)
        return np.asarray(groups).reshape(-1)

    @cached_property
    def class_count_table(self) -> np.ndarray:
        """(n_classes, n+1) number of configurations per class and minor count."""
        t = np.zeros((self.n_classes, self.n + 1), dtype=np.int64)
        np.add.at(t, (self.config_class, self.minor_counts), 1)
        return t

    @cached_property
    def class_determined_m(self) -> np.ndarray:
        """Minor-allele count of each class when unique, else -1."""
        t = self.class_count_table
        nz = (t > 0).sum(axis=1)
        return np.where(nz == 1, t.argmax(axis=1), -1)

    @cached_property
    def ambiguous_classes(self) -> np.ndarray:
        """True for classes whose configurations differ beyond swaps of
        chromosomes with identical carriers (alleles not identifiable)."""
        ngroups = int(self.carrier_groups.max()) + 1
        eff = np.zeros((2**self.n, ngroups), dtype=np.int64)
        for k in range(self.n):
            eff[:, self.carrier_groups[k]] += self.bits[:, k]
        amb = np.zeros(self.n_classes, dtype=bool)
        for c in range(self.n_classes):
            rows = eff[self.config_class == c]
            amb[c] = bool(np.any(rows != rows[0]))
        return amb

    @cached_property
    def can_be_ambiguous(self) -> bool:
        return bool(self.ambiguous_classes.any())

    @cached_property
    def class_representative(self) -> np.ndarray:
        """(n_classes, n) lowest-index configuration of each class."""
        first = np.full(self.n_classes, -1, dtype=np.int64)
        for c, q in enumerate(self.config_class):
            if first[q] < 0:
                first[q] = c
        return self.bits[first]

    def solutions(self, genotypes) -> np.ndarray:
        """All allele configurations consistent with one genotype vector."""
        c = int(self.class_of(np.asarray(genotypes)[None, :])[0])
        if c < 0:
            return np.zeros((0, self.n), dtype=np.int64)
        return self.bits[self.config_class == c]

    def class_moments(self, phi) -> tuple[np.ndarray, np.ndarray]:
        """Per-class probabilities and centred posterior allele means.

        Returns ``P`` with shape (len(phi), n_classes) and ``a`` with shape
        (len(phi), n_classes, n) where ``a[r, c, k] = E[y_k | class c] - phi_r``
        under independent Bernoulli(phi_r) alleles.
        """
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        P_cfg = config_probabilities_hwe(phi, self.minor_counts, self.n)
        return kernels.class_moments(P_cfg, self.bits, self.config_class, self.n_classes, phi)

    def score_second_moments(self, phi, P_cfg=None):
        """Second-moment matrix of the per-family score direction.

        With ``a`` from :meth:`class_moments` (always evaluated at ``phi``),
        returns ``(M, mu)`` where ``M = sum_c P_c a_c a_c^T`` and
        ``mu = sum_c P_c a_c``. ``P_cfg`` overrides the configuration
        probabilities used for the expectation (HWE when omitted).
        """
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        _, a = self.class_moments(phi)
        if P_cfg is None:
            P_cfg = config_probabilities_hwe(phi, self.minor_counts, self.n)
        Pc = np.zeros((len(phi), self.n_classes))
        for r in range(len(phi)):
            Pc[r] = np.bincount(self.config_class, weights=P_cfg[r], minlength=self.n_classes)
        M = np.einsum("rc,rck,rcl->rkl", Pc, a, a)
        mu = np.einsum("rc,rck->rk", Pc, a)
        return M, mu


def config_probabilities_hwe(phi: np.ndarray, m: np.ndarray, n: int) -> np.ndarray:
    phi = np.atleast_1d(phi)
    with np.errstate(divide="ignore"):
        lp = np.log(phi)[:, None]
        lq = np.log1p(-phi)[:, None]
    mm = m[None, :]
    out = np.exp(np.where(mm > 0, mm * lp, 0.0) + np.where(n - mm > 0, (n - mm) * lq, 0.0))
    return out


class StructureCache:
    """Interns structures by canonical labeling so enumeration happens once."""

    def __init__(self):
        self._by_key: dict = {}
        self.structures: list[Structure] = []

    def get(self, labels, founder_rows=None) -> int:
        key = (
            tuple(map(tuple, np.asarray(labels).tolist())),
            None if founder_rows is None else tuple(bool(x) for x in founder_rows),
        )
        sid = self._by_key.get(key)
        if sid is None:
            sid = len(self.structures)
            self.structures.append(Structure(labels, founder_rows))
            self._by_key[key] = sid
        return sid

    def __getitem__(self, sid: int) -> Structure:
        return self.structures[sid]

    def __len__(self):
        return len(self.structures)
