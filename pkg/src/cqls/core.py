"""The cQLS statistic.

Each family contributes its founder chromosomes' score weights ``Z`` and
the class (observed genotype vector) of its founder-allele configuration.
For a family with chromosomes ``k = 1..n`` let ``a_k = E[Y_k | class] - phi``
under independent Bernoulli(phi) alleles. The score for the genetic effect
is ``U = sum Z_k a_k`` evaluated at the maximum-likelihood ``phi_hat``;
when every allele is identifiable this is ``sum (Z - Zbar)(Y - phi_hat)``.
Its variance accounts for estimating ``phi``:

    sigma^2 = A - B^2 / C,
    A = sum Z^T M Z,  B = sum Z^T M 1,  C = sum 1^T M 1,

with ``M = E[a a^T]`` for the family's structure. Without ambiguity
``B / C = Zbar`` and ``sigma^2 = phi(1-phi) sum (Z - Zbar)^2``.

Everything here is batched: a :class:`ScoreVector` can hold many
independent datasets ("groups"), and :func:`cqls_batch` returns one result
per group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import numerics
from .errors import CoverageError, DegenerateDesignError, MonomorphicError
from .labeling import ChromosomeLabeling
from .pedigree import AFFECTED, UNAFFECTED, UNKNOWN, Pedigree
from .structures import StructureCache

STATUS_OK = 0
STATUS_MONOMORPHIC = 1
STATUS_DEGENERATE = 2
STATUS_NAMES = {
    STATUS_OK: "ok",
    STATUS_MONOMORPHIC: "skipped_monomorphic",
    STATUS_DEGENERATE: "skipped_degenerate",
}

_BISECTION_STEPS = 200


@dataclass(frozen=True)
class NullModel:
    """Null-model inputs for the chromosome scores.

    Parameters
    ----------
    pi0
        Population prevalence.
    prevalence
        Optional per-individual prevalence keyed by ``(family_id, individual_id)``.
    weights
        Optional per-individual multiplicative weight on the score
        contribution (default 1).
    """

    pi0: float
    prevalence: Mapping[tuple[str, str], float] = field(default_factory=dict)
    weights: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.pi0 < 1.0:
            raise ValueError(f"pi0 must lie in (0, 1), got {self.pi0}")
        for key, p in self.prevalence.items():
            if not 0.0 < p < 1.0:
                raise ValueError(f"prevalence for {key} must lie in (0, 1), got {p}")
        for key, w in self.weights.items():
            if not w > 0:
                raise ValueError(f"weight for {key} must be positive, got {w}")

    def phenotype_score(self, family_id: str, individual_id: str, affection: int) -> float:
        """d log h_i / d theta at the null, times the individual's weight."""
        if affection == UNKNOWN:
            return 0.0
        key = (family_id, individual_id)
        w = self.weights.get(key, 1.0)
        if affection == AFFECTED:
            return w
        if affection == UNAFFECTED:
            pi = self.prevalence.get(key, self.pi0)
            return -w * pi / (1.0 - pi)
        raise ValueError(f"bad affection code {affection!r}")


@dataclass
class ScoreVector:
    """Chromosome scores and allele classes for one or more datasets.

    Families are rows; chromosome-level arrays are concatenated in family
    order with family ``f`` occupying ``z[offsets[f] : offsets[f] + n_f]``
    where ``n_f = cache[structure[f]].n``.

    Attributes
    ----------
    cache
        Interned family structures.
    structure, klass, group, offsets
        Per-family structure id, observed class index (-1 when the genotypes
        contradict the labeling), dataset index and chromosome offset.
    z
        Score weight per chromosome.
    n_groups
        Number of datasets.
    excluded
        Per-dataset count of families dropped before scoring (for example
        genotype/labeling conflicts found upstream).
    family_ids
        Optional family names, for reporting.
    """

    cache: StructureCache
    structure: np.ndarray
    klass: np.ndarray
    group: np.ndarray
    offsets: np.ndarray
    z: np.ndarray
    n_groups: int = 1
    excluded: np.ndarray | None = None
    family_ids: list[str] | None = None

    def __post_init__(self):
        self.structure = np.asarray(self.structure, dtype=np.int64)
        self.klass = np.asarray(self.klass, dtype=np.int64)
        self.group = np.asarray(self.group, dtype=np.int64)
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.z = np.asarray(self.z, dtype=float)
        if self.excluded is None:
            self.excluded = np.zeros(self.n_groups, dtype=np.int64)

    @property
    def n_families(self) -> int:
        return len(self.structure)

    @property
    def sizes(self) -> np.ndarray:
        sz = np.array([s.n for s in self.cache.structures], dtype=np.int64)
        return sz[self.structure] if len(self.structure) else np.zeros(0, dtype=np.int64)

    @property
    def ambiguous(self) -> np.ndarray:
        """Per family: True when its alleles are not identifiable (Q = 1)."""
        out = np.zeros(self.n_families, dtype=bool)
        for sid in np.unique(self.structure):
            st = self.cache[sid]
            idx = np.flatnonzero((self.structure == sid) & (self.klass >= 0))
            out[idx] = st.ambiguous_classes[self.klass[idx]]
        return out

    def family_z(self, f: int) -> np.ndarray:
        n = self.cache[self.structure[f]].n
        return self.z[self.offsets[f]:self.offsets[f] + n]

    def alleles(self) -> np.ndarray:
        """Minor-allele indicator per chromosome, -1 where not identifiable.

        Chromosomes carried by exactly the same individuals cannot be told
        apart; they get a fixed representative assignment.
        """
        y = np.full(len(self.z), -1, dtype=np.int64)
        for sid in np.unique(self.structure):
            st = self.cache[sid]
            idx = np.flatnonzero((self.structure == sid) & (self.klass >= 0))
            idx = idx[~st.ambiguous_classes[self.klass[idx]]]
            if len(idx) == 0:
                continue
            pos = self.offsets[idx][:, None] + np.arange(st.n)
            y[pos] = st.class_representative[self.klass[idx]]
        return y

    def select(self, mask) -> "ScoreVector":
        """Keep the families where ``mask`` is true (chromosomes re-packed)."""
        idx = np.flatnonzero(np.asarray(mask, dtype=bool))
        sizes = self.sizes[idx]
        offs = np.zeros(len(idx), dtype=np.int64)
        if len(idx):
            offs[1:] = np.cumsum(sizes)[:-1]
        pos = np.concatenate([np.arange(o, o + s) for o, s in zip(self.offsets[idx], sizes)]) if len(idx) else np.zeros(0, dtype=np.int64)
        return ScoreVector(
            cache=self.cache,
            structure=self.structure[idx],
            klass=self.klass[idx],
            group=self.group[idx],
            offsets=offs,
            z=self.z[pos],
            n_groups=self.n_groups,
            excluded=self.excluded.copy(),
            family_ids=None if self.family_ids is None else [self.family_ids[i] for i in idx],
        )

    @classmethod
    def from_families(cls, families: Sequence, family_ids=None, cache: StructureCache | None = None) -> "ScoreVector":
        """Build a single-dataset vector.

        Each entry is ``(labels, genotypes, z)`` or
        ``(labels, genotypes, z, founder_rows)``: ``labels`` lists the two
        local chromosome indices (``0..n-1``) of each genotyped individual,
        ``genotypes`` their minor-allele counts and ``z`` one score weight
        per local chromosome.
        """
        cache = cache if cache is not None else StructureCache()
        structure, klass, offsets, zs = [], [], [], []
        pos = 0
        for fam in families:
            labels, genos, z = fam[0], fam[1], fam[2]
            founder_rows = fam[3] if len(fam) > 3 else None
            sid = cache.get(labels, founder_rows)
            st = cache[sid]
            z = np.asarray(z, dtype=float)
            if z.shape != (st.n,):
                raise ValueError(f"expected {st.n} chromosome scores, got {z.shape}")
            structure.append(sid)
            klass.append(int(st.class_of(np.asarray(genos)[None, :])[0]))
            offsets.append(pos)
            zs.append(z)
            pos += st.n
        return cls(
            cache=cache,
            structure=np.array(structure, dtype=np.int64),
            klass=np.array(klass, dtype=np.int64),
            group=np.zeros(len(structure), dtype=np.int64),
            offsets=np.array(offsets, dtype=np.int64),
            z=np.concatenate(zs) if zs else np.zeros(0),
            n_groups=1,
            family_ids=family_ids,
        )


@dataclass(frozen=True)
class TestResult:
    """Outcome of one association test."""

    statistic: float
    score: float
    variance: float
    p_value: float
    method: str
    n_chromosomes: int
    n_excluded_families: int
    phi_hat: float = math.nan
    n_ambiguous: int = 0
    status: str = "ok"

    __test__ = False

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class BatchResult:
    """Per-dataset arrays from :func:`cqls_batch`."""

    statistic: np.ndarray
    score: np.ndarray
    variance: np.ndarray
    p_value: np.ndarray
    phi_hat: np.ndarray
    n_chromosomes: np.ndarray
    n_excluded: np.ndarray
    n_ambiguous: np.ndarray
    status: np.ndarray
    method: list[str]

    def __len__(self):
        return len(self.statistic)

    def result(self, g: int) -> TestResult:
        return TestResult(
            statistic=float(self.statistic[g]),
            score=float(self.score[g]),
            variance=float(self.variance[g]),
            p_value=float(self.p_value[g]),
            method=self.method[g],
            n_chromosomes=int(self.n_chromosomes[g]),
            n_excluded_families=int(self.n_excluded[g]),
            phi_hat=float(self.phi_hat[g]),
            n_ambiguous=int(self.n_ambiguous[g]),
            status=STATUS_NAMES[int(self.status[g])],
        )


# ---------------------------------------------------------------------------
# chromosome scores from a labeled pedigree


def affected_count(labeling: ChromosomeLabeling, ped: Pedigree) -> dict[tuple[str, int], int]:
    """Number of affected allele copies descending from each founder chromosome."""
    out: dict[tuple[str, int], int] = {}
    for fl in labeling:
        fam = ped.families[fl.family_id]
        for lab in fl.labels:
            out[(fl.family_id, lab)] = 0
        for iid, (a, b) in fl.hard.items():
            if a == b:
                raise ValueError(f"{fl.family_id}/{iid} carries label {a} on both copies")
            if fam.members[iid].affection == AFFECTED:
                out[(fl.family_id, a)] += 1
                out[(fl.family_id, b)] += 1
    return out


def compute_z(labeling: ChromosomeLabeling, ped: Pedigree, null: NullModel) -> dict[str, dict[int, float]]:
    """Score weight of every founder chromosome seen in a genotyped member.

    Hard-labeled members add their phenotype score once per copy; members
    with descent probabilities add it weighted by expected copies. Every
    member with known affection in a labeled family must be covered.
    """
    out: dict[str, dict[int, float]] = {}
    for fl in labeling:
        fam = ped.families[fl.family_id]
        z = {lab: 0.0 for lab in fl.labels}
        for iid in sorted(fam.members):
            ind = fam.members[iid]
            s = null.phenotype_score(fl.family_id, iid, ind.affection)
            if iid in fl.hard:
                a, b = fl.hard[iid]
                if a == b:
                    raise ValueError(f"{fl.family_id}/{iid} carries label {a} on both copies")
                z[a] += s
                z[b] += s
            elif iid in fl.soft:
                for lab, p in sorted(fl.soft[iid].items()):
                    if lab in z:
                        z[lab] += s * p
            elif ind.affection != UNKNOWN:
                raise CoverageError(
                    f"family {fl.family_id}: phenotyped member {iid} has neither labels nor descent probabilities"
                )
        out[fl.family_id] = z
    return out


def build_scores(
    ped: Pedigree,
    labeling: ChromosomeLabeling,
    genotypes: Mapping[tuple[str, str], int | None],
    null: NullModel,
    z: Mapping[str, Mapping[int, float]] | None = None,
    cache: StructureCache | None = None,
) -> ScoreVector:
    """Assemble the score vector for one SNP.

    Only members with a hard label and an observed genotype at this SNP
    constrain the alleles; founder chromosomes not carried by any of them
    are dropped. Families are processed in sorted id order and local
    chromosome indices follow first appearance among members sorted by id,
    so the result does not depend on input order or label names.
    """
    if z is None:
        z = compute_z(labeling, ped, null)
    cache = cache if cache is not None else StructureCache()
    structure, klass, offsets, zs, fids = [], [], [], [], []
    pos = 0
    for fid in sorted(labeling.families):
        fl = labeling.families[fid]
        fam = ped.families[fid]
        rows, genos, founders = [], [], []
        for iid in sorted(fl.hard):
            g = genotypes.get((fid, iid))
            if g is None or (isinstance(g, float) and math.isnan(g)):
                continue
            rows.append(fl.hard[iid])
            genos.append(int(g))
            founders.append(fam.members[iid].is_founder)
        if not rows:
            continue
        mapping: dict[int, int] = {}
        local = []
        for a, b in rows:
            for x in (a, b):
                if x not in mapping:
                    mapping[x] = len(mapping)
            local.append(tuple(sorted((mapping[a], mapping[b]))))
        sid = cache.get(local, founders)
        st = cache[sid]
        order = sorted(mapping, key=mapping.get)
        structure.append(sid)
        klass.append(int(st.class_of(np.array(genos)[None, :])[0]))
        offsets.append(pos)
        zs.append(np.array([z[fid][lab] for lab in order]))
        fids.append(fid)
        pos += st.n
    return ScoreVector(
        cache=cache,
        structure=np.array(structure, dtype=np.int64),
        klass=np.array(klass, dtype=np.int64),
        group=np.zeros(len(structure), dtype=np.int64),
        offsets=np.array(offsets, dtype=np.int64),
        z=np.concatenate(zs) if zs else np.zeros(0),
        n_groups=1,
        family_ids=fids,
    )


# ---------------------------------------------------------------------------
# allele frequency


def _phi_mle(sv: ScoreVector, valid: np.ndarray):
    """Maximum-likelihood minor-allele frequency per group.

    Returns ``(phi, n_chromosomes, monomorphic)``. Families whose class fixes
    the minor-allele count contribute it directly; the rest enter through
    ``E[m | class]`` and the score equation is solved by bisection.
    """
    G = sv.n_groups
    N = np.zeros(G)
    det = np.zeros(G)
    lo_m = np.zeros(G)
    hi_m = np.zeros(G)
    pending = []
    for sid in np.unique(sv.structure[valid]):
        st = sv.cache[sid]
        idx = np.flatnonzero(valid & (sv.structure == sid))
        g = sv.group[idx]
        c = sv.klass[idx]
        t = st.class_count_table
        has = t > 0
        mmin = has.argmax(axis=1)
        mmax = st.n - has[:, ::-1].argmax(axis=1)
        N += np.bincount(g, minlength=G) * st.n
        lo_m += np.bincount(g, weights=mmin[c], minlength=G)
        hi_m += np.bincount(g, weights=mmax[c], minlength=G)
        dm = st.class_determined_m[c]
        d = dm >= 0
        det += np.bincount(g[d], weights=dm[d], minlength=G)
        if not d.all():
            nc = st.n_classes
            cnt = np.bincount(g[~d] * nc + c[~d], minlength=G * nc).reshape(G, nc)
            pending.append((t, cnt))
    mono = (hi_m == 0) | (lo_m == N)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = det / N
    if pending:
        need = np.zeros(G, dtype=bool)
        for _, cnt in pending:
            need |= cnt.sum(axis=1) > 0
        need &= ~mono
        rows = np.flatnonzero(need)
        if len(rows):
            lo = np.zeros(len(rows))
            hi = np.ones(len(rows))
            for _ in range(_BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                f = det[rows] - N[rows] * mid
                for t, cnt in pending:
                    f += (cnt[rows] * _expected_minor(t, mid)).sum(axis=1)
                up = f > 0
                lo = np.where(up, mid, lo)
                hi = np.where(up, hi, mid)
                if np.all(hi - lo <= 1e-16):
                    break
            phi[rows] = 0.5 * (lo + hi)
    phi = np.where(mono, np.where(hi_m == 0, 0.0, 1.0), phi)
    return phi, N, mono


def _expected_minor(t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """(R, n_classes) E[minor count | class] from a class-by-count table."""
    n = t.shape[1] - 1
    m = np.arange(n + 1)
    phi = phi[:, None]
    with np.errstate(divide="ignore"):
        lw = m * np.log(phi) + (n - m) * np.log1p(-phi)
    lw -= lw.max(axis=1, keepdims=True)
    w = np.exp(lw)
    den = w @ t.T
    num = (w * m) @ t.T
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, 0.0)


def estimate_phi(scores: ScoreVector) -> float:
    """Minor-allele frequency estimate for a single-dataset score vector."""
    valid = scores.klass >= 0
    phi, N, mono = _phi_mle(scores, valid)
    if N[0] == 0 or mono[0]:
        raise MonomorphicError(f"allele frequency estimate is {phi[0]}; the SNP is monomorphic in the sample")
    return float(phi[0])


# ---------------------------------------------------------------------------
# statistic


def cqls_batch(
    scores: ScoreVector,
    variance_mode: str = "hwe",
    exclude_ambiguous: bool = False,
    genotype_model=None,
) -> BatchResult:
    """cQLS for every dataset in ``scores``.

    Parameters
    ----------
    variance_mode
        ``"hwe"`` (independent alleles) or ``"hwe_free"`` (variance under an
        estimated founder-genotype distribution; see :mod:`cqls.hwefree`).
    exclude_ambiguous
        Drop families whose alleles are not identifiable instead of
        averaging over their possible configurations. The allele frequency
        is still estimated from every family; retained families are scored
        conditionally on being identifiable.
    genotype_model
        Optional fixed founder-pair genotype distribution for
        ``"hwe_free"`` (length-6 array); estimated per dataset when omitted.
    """
    if variance_mode not in ("hwe", "hwe_free"):
        raise ValueError(f"unknown variance mode {variance_mode!r}")
    G = scores.n_groups
    valid = scores.klass >= 0
    amb = scores.ambiguous
    excluded = scores.excluded + np.bincount(scores.group[~valid], minlength=G)
    n_amb = np.bincount(scores.group[amb], minlength=G)
    phi, N, mono = _phi_mle(scores, valid)
    if exclude_ambiguous:
        excluded = excluded + n_amb
        valid = valid & ~amb
        n_amb = np.zeros(G, dtype=np.int64)
        N = np.zeros(G)
        for sid in np.unique(scores.structure[valid]):
            N += np.bincount(scores.group[valid & (scores.structure == sid)], minlength=G) * scores.cache[sid].n
    live = ~mono & (N > 0)
    S_t = np.zeros(G)
    S_p = np.zeros(G)
    A = np.zeros(G)
    B = np.zeros(G)
    C = np.zeros(G)
    A2 = np.zeros(G)
    B2 = np.zeros(G)
    C2 = np.zeros(G)
    tag_amb = np.zeros(G, dtype=bool)

    p_models = None
    if variance_mode == "hwe_free":
        from . import hwefree

        p_models = hwefree.fit_genotype_models(scores, valid & live[scores.group], phi, genotype_model)

    for sid in np.unique(scores.structure[valid]):
        st = scores.cache[sid]
        idx = np.flatnonzero(valid & (scores.structure == sid) & live[scores.group])
        if len(idx) == 0:
            continue
        g = scores.group[idx]
        if st.can_be_ambiguous:
            tag_amb[np.unique(g)] = True
        ug, r = np.unique(g, return_inverse=True)
        Pc, a = st.class_moments(phi[ug])
        if exclude_ambiguous and st.can_be_ambiguous:
            Pc, a = _retained_moments(st, Pc, a)
        M = np.einsum("rc,rck,rcl->rkl", Pc, a, a)
        af = a[r, scores.klass[idx]]
        Zf = scores.z[scores.offsets[idx][:, None] + np.arange(st.n)]
        S_t += np.bincount(g, weights=(Zf * af).sum(axis=1), minlength=G)
        S_p += np.bincount(g, weights=af.sum(axis=1), minlength=G)
        Af, Bf, Cf = _quadratic_terms(M, r, Zf)
        A += np.bincount(g, weights=Af, minlength=G)
        B += np.bincount(g, weights=Bf, minlength=G)
        C += np.bincount(g, weights=Cf, minlength=G)
        if p_models is not None:
            from . import hwefree

            V = hwefree.structure_covariance(st, a, p_models[ug])
            Af, Bf, Cf = _quadratic_terms(V, r, Zf)
            A2 += np.bincount(g, weights=Af, minlength=G)
            B2 += np.bincount(g, weights=Bf, minlength=G)
            C2 += np.bincount(g, weights=Cf, minlength=G)

    with np.errstate(invalid="ignore", divide="ignore"):
        cstar = B / C
        U = S_t - cstar * S_p
        if variance_mode == "hwe":
            var = A - B * cstar
        else:
            var = A2 - 2.0 * cstar * B2 + cstar * cstar * C2
    degenerate = live & ~(var > 1e-10 * np.maximum(np.abs(A), np.abs(A2)))
    status = np.where(mono | (N == 0), STATUS_MONOMORPHIC, np.where(degenerate, STATUS_DEGENERATE, STATUS_OK))
    ok = status == STATUS_OK
    stat = np.full(G, np.nan)
    pval = np.full(G, np.nan)
    stat[ok] = U[ok] ** 2 / var[ok]
    pval[ok] = numerics.chisq1_sf_array(stat[ok])
    if variance_mode == "hwe_free":
        method = ["cqls_hwefree"] * G
    else:
        method = ["cqls_ambig" if t else "cqls_hwe" for t in tag_amb]
    return BatchResult(
        statistic=stat,
        score=np.where(live, U, np.nan),
        variance=np.where(live, var, np.nan),
        p_value=pval,
        phi_hat=phi,
        n_chromosomes=N.astype(np.int64),
        n_excluded=np.asarray(excluded, dtype=np.int64),
        n_ambiguous=np.asarray(n_amb, dtype=np.int64),
        status=status,
        method=method,
    )


def _retained_moments(st, Pc: np.ndarray, a: np.ndarray):
    """Class moments conditional on the family being identifiable.

    Dropping ambiguous families selects on genotypes, which shifts the
    allele distribution of the retained ones; recentring on the retained
    mean keeps the score unbiased under the null.
    """
    keep = ~st.ambiguous_classes
    Pk = np.where(keep[None, :], Pc, 0.0)
    Pk = Pk / Pk.sum(axis=1, keepdims=True)
    mu = np.einsum("rc,rck->rk", Pk, a)
    return Pk, a - mu[:, None, :]


def _quadratic_terms(M: np.ndarray, r: np.ndarray, Zf: np.ndarray):
    Mf = M[r]
    MZ = np.einsum("fkl,fl->fk", Mf, Zf)
    return (Zf * MZ).sum(axis=1), MZ.sum(axis=1), Mf.sum(axis=(1, 2))


def cqls(scores: ScoreVector, variance_mode: str = "hwe", exclude_ambiguous: bool = False, genotype_model=None) -> TestResult:
    """cQLS for a single dataset.

    Raises
    ------
    MonomorphicError
        When the allele-frequency estimate is 0 or 1.
    DegenerateDesignError
        When the score variance is zero (for example all ``Z`` equal).
    """
    if scores.n_groups != 1:
        raise ValueError("cqls() takes a single dataset; use cqls_batch() for several")
    res = cqls_batch(scores, variance_mode, exclude_ambiguous, genotype_model).result(0)
    if res.status == STATUS_NAMES[STATUS_MONOMORPHIC]:
        raise MonomorphicError(f"allele frequency estimate is {res.phi_hat}; statistic undefined")
    if res.status == STATUS_NAMES[STATUS_DEGENERATE]:
        raise DegenerateDesignError("score variance is zero; chromosome scores carry no contrast")
    return res


def allelic_score_statistic(z, y) -> float:
    """Standard chromosome-count score statistic for identified alleles.

    ``U = sum (Z - Zbar)(Y - Ybar)``, ``Var = Ybar(1-Ybar) sum (Z - Zbar)^2``.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = y.mean()
    zc = z - z.mean()
    u = float(zc @ (y - phi))
    return u * u / (phi * (1 - phi) * float(zc @ zc))


# ---------------------------------------------------------------------------
# closed forms for sibling pairs sharing one chromosome


def sibpair_phi(n0: int, n1: int, n_ambiguous: int) -> float:
    """MLE of phi when ``n_ambiguous`` sib pairs share one chromosome and are
    both heterozygous, and ``n0``/``n1`` identified chromosomes carry the
    major/minor allele.

    Each ambiguous pair is (minor, major, minor) or (major, minor, major)
    across (unique to sib 1, shared, unique to sib 2); maximizing
    ``phi^n1 (1-phi)^n0 [phi(1-phi)]^f`` gives the closed form below.
    """
    return (n1 + n_ambiguous) / (n0 + n1 + 2 * n_ambiguous)


def sibpair_variance_terms(z, zbar: float, phi: float, uncorrected: bool = False) -> float:
    """Null variance contribution of one sib pair sharing one chromosome.

    ``z`` holds the scores of the chromosomes unique to sib 1, shared, and
    unique to sib 2. Returns ``sum_t p_t Zstar_t`` over the four minor-count
    levels of the three alleles, with every configuration's centred score
    contribution squared and weighted by its probability. The two
    double-heterozygote configurations both contribute ``(1-2 phi)(Z2-Zbar)``.

    ``uncorrected=True`` gives the variant in which the ambiguous
    contribution uses ``(1-phi)`` instead of ``(1-2 phi)`` and the all-major
    level sums squares instead of squaring the sum; it does not match the
    enumerated variance and is kept only for comparison.
    """
    d = np.asarray(z, dtype=float) - zbar
    s = d.sum()
    q = 1.0 - phi
    amb = d[1] * (q if uncorrected else (1.0 - 2.0 * phi))
    z1 = (s * q) ** 2
    z2 = (s * q - d[2]) ** 2 + amb**2 + (s * q - d[0]) ** 2
    z3 = (s * q - d[1] - d[2]) ** 2 + amb**2 + (s * q - d[0] - d[1]) ** 2
    z4 = float(((d * -phi) ** 2).sum()) if uncorrected else (s * phi) ** 2
    p = (phi**3, phi**2 * q, phi * q**2, q**3)
    return p[0] * z1 + p[1] * z2 + p[2] * z3 + p[3] * z4


# ---------------------------------------------------------------------------
# partial likelihood oracle


def _log_h(theta: float, affection: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """log h_i for the multiplicative-risk link H = exp(theta)."""
    H = math.exp(theta)
    out = np.zeros(len(affection))
    aff = affection == AFFECTED
    una = affection == UNAFFECTED
    out[aff] = theta
    out[una] = np.log((1.0 - H * pi[una]) / (1.0 - pi[una]))
    return out


def partial_prob(y: int, copies, affection, pi, theta: float, odds: float, weights=None) -> float:
    """P[Y_k = y] for one founder chromosome given its carriers.

    Parameters
    ----------
    y
        Allele (0 or 1).
    copies
        Copies of the chromosome carried by each phenotyped individual.
    affection, pi
        Affection codes and prevalences of the same individuals.
    theta
        Log relative risk of the minor allele.
    odds
        Null allele odds ``phi / (1 - phi)``.
    weights
        Optional per-individual exponent on ``h_i``.
    """
    copies = np.asarray(copies, dtype=float)
    lh = _log_h(theta, np.asarray(affection), np.asarray(pi, dtype=float))
    if weights is not None:
        lh = lh * np.asarray(weights, dtype=float)
    eta = math.log(odds) + float(copies @ lh)
    p1 = 1.0 / (1.0 + math.exp(-eta))
    return p1 if y == 1 else 1.0 - p1


@dataclass
class OracleFamily:
    """Raw inputs for the likelihood oracle: ``copies[i, k]`` copies of
    founder chromosome ``k`` carried by phenotyped individual ``i``."""

    copies: np.ndarray
    affection: np.ndarray
    pi: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None


def score_oracle(families: Sequence[OracleFamily], step: float = 1e-5) -> tuple[float, float]:
    """Finite-difference score and efficient information at the null.

    The allele odds are profiled at the sample frequency of ``y``. Returns
    ``(U, sigma2)`` where ``U`` is the central difference of the summed log
    partial likelihood in ``theta`` at 0 and ``sigma2`` the expected
    information for ``theta`` after projecting out ``log odds``.
    """
    ys = np.concatenate([np.asarray(f.y, dtype=float) for f in families])
    phi = ys.mean()
    odds = phi / (1.0 - phi)

    def loglik(theta):
        total = 0.0
        for f in families:
            for k in range(f.copies.shape[1]):
                total += math.log(partial_prob(int(f.y[k]), f.copies[:, k], f.affection, f.pi, theta, odds, f.weights))
        return total

    U = (loglik(step) - loglik(-step)) / (2.0 * step)

    def eta_theta(f, k):
        def eta(theta):
            lh = _log_h(theta, np.asarray(f.affection), np.asarray(f.pi, dtype=float))
            if f.weights is not None:
                lh = lh * np.asarray(f.weights, dtype=float)
            return float(np.asarray(f.copies[:, k], dtype=float) @ lh)

        return (eta(step) - eta(-step)) / (2.0 * step)

    d = np.array([eta_theta(f, k) for f in families for k in range(f.copies.shape[1])])
    v = phi * (1.0 - phi)
    i_tt = v * float(d @ d)
    i_tl = v * float(d.sum())
    i_ll = v * len(d)
    return U, i_tt - i_tl * i_tl / i_ll
