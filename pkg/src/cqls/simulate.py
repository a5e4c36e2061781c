"""Liability-threshold family simulation and the Monte Carlo power harness.

Liability of family members is ``beta_G (G - 2 phi) + E + beta_F F`` with
independent standard-normal ``E`` and a familial component ``F`` whose
parents are independent and whose children correlate 0.5 with each parent
and with each other. Individuals with liability above the 95th percentile
of ``N(0, 1 + beta_F^2)`` are affected.

Ascertained families are drawn exactly from their conditional
distribution instead of by rejection: writing each child's familial term
as ``Fbar + delta`` with ``Fbar ~ N(0, 1/2)`` shared by the sibship, the
children's affection statuses are independent given ``Fbar`` and their
genotypes, so the probability of an affection pattern given the
(founder-allele, transmission) state is a one-dimensional integral. All
``16 * 4^k`` states of a sibship of ``k`` are enumerated once per model,
and a family is a single categorical draw.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import special

from . import numerics
from .core import NullModel, ScoreVector, cqls_batch
from .errors import RangeError
from .labeling import ChromosomeLabeling, FamilyLabeling
from .mqls import MqlsPlan, phenotype_code
from .numerics import RandomStream
from .pedigree import AFFECTED, UNAFFECTED, UNKNOWN, Individual, Pedigree
from .structures import StructureCache

DEFAULT_MAF = 0.1
DEFAULT_PREVALENCE = 0.05
_HERMITE_NODES = 80
_SD_SPAN = 10.0


# ---------------------------------------------------------------------------
# calibration


def liability_threshold(beta_F: float, prevalence: float = DEFAULT_PREVALENCE) -> float:
    return numerics.normal_ppf(1.0 - prevalence) * math.sqrt(1.0 + beta_F * beta_F)


def lambda_from_betaF(beta_F: float, prevalence: float = DEFAULT_PREVALENCE, exact_conditional: bool = False, tol: float = 1e-13) -> float:
    """Sibling recurrence risk ratio implied by ``beta_F`` (with ``beta_G = 0``).

    Integrates ``P(sib 2 affected | sib 1 liability y)`` over ``y`` above the
    threshold, with the second sib's liability given ``y`` normal with mean
    ``b^2 y / (2 (1 + b^2))`` and variance
    ``(1 + 2 b^2 + c b^4) / (1 + b^2)``.

    The default ``c = 1.75`` is the calibration behind the standard
    simulation settings (it reaches ``lambda_s = 5``). Sib liabilities in the
    simulated model are bivariate normal with covariance ``b^2 / 2``, whose
    exact conditional variance has ``c = 0.75`` (``exact_conditional=True``);
    that version is bounded by about 4.88 at prevalence 0.05.
    """
    if beta_F < 0:
        raise ValueError("beta_F must be nonnegative")
    b2 = beta_F * beta_F
    v = 1.0 + b2
    sd = math.sqrt(v)
    t = liability_threshold(beta_F, prevalence)
    coef = b2 / (2.0 * v)
    cvar = (1.0 + 2.0 * b2 + (0.75 if exact_conditional else 1.75) * b2 * b2) / v
    csd = math.sqrt(cvar)

    def integrand(y):
        y = np.asarray(y, dtype=float)
        inner = special.ndtr(-(t - coef * y) / csd)
        return inner * np.exp(-0.5 * (y / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))

    both = numerics.quadrature(integrand, t, _SD_SPAN * sd, tol=tol)
    return both / (prevalence * prevalence)


def lambda_supremum(prevalence: float = DEFAULT_PREVALENCE, exact_conditional: bool = False) -> float:
    """Limit of :func:`lambda_from_betaF` as ``beta_F`` grows."""
    return lambda_from_betaF(1e4, prevalence, exact_conditional)


def solve_beta_F(lambda_target: float, prevalence: float = DEFAULT_PREVALENCE, exact_conditional: bool = False) -> float:
    """``beta_F`` whose recurrence risk ratio equals ``lambda_target``."""
    if lambda_target < 1.0:
        raise RangeError(f"recurrence risk ratio {lambda_target} is below 1")
    if lambda_target == 1.0:
        return 0.0
    sup = lambda_supremum(prevalence, exact_conditional)
    if lambda_target >= sup:
        raise RangeError(f"recurrence risk ratio {lambda_target} is not attainable (supremum {sup:.6g})")
    hi = 1.0
    while lambda_from_betaF(hi, prevalence, exact_conditional) < lambda_target:
        hi *= 2.0
        if hi > 1e4:
            raise RangeError(f"recurrence risk ratio {lambda_target} is not attainable")
    return numerics.find_root(lambda b: lambda_from_betaF(b, prevalence, exact_conditional) - lambda_target, 0.0, hi, tol=1e-13)


def population_odds_ratio(beta_G: float, beta_F: float, maf: float = DEFAULT_MAF, prevalence: float = DEFAULT_PREVALENCE) -> float:
    """Odds of disease with one minor allele over odds with none.

    Given ``G = g`` the liability is normal with mean ``beta_G (g - 2 maf)``
    and variance ``1 + beta_F^2``.
    """
    t = liability_threshold(beta_F, prevalence)
    sd = math.sqrt(1.0 + beta_F * beta_F)
    p1 = numerics.normal_sf((t - beta_G * (1.0 - 2.0 * maf)) / sd)
    p0 = numerics.normal_sf((t + beta_G * 2.0 * maf) / sd)
    return (p1 / (1.0 - p1)) / (p0 / (1.0 - p0))


def solve_beta_G(target_or: float, beta_F: float, maf: float = DEFAULT_MAF, prevalence: float = DEFAULT_PREVALENCE) -> float:
    """``beta_G`` giving the population per-allele odds ratio ``target_or``."""
    if not 1.0 <= target_or <= 3.0:
        raise RangeError(f"odds ratio {target_or} outside [1, 3]")
    if target_or == 1.0:
        return 0.0
    return numerics.find_root(
        lambda b: population_odds_ratio(b, beta_F, maf, prevalence) - target_or, 0.0, 5.0, tol=1e-12
    )


@dataclass(frozen=True)
class LiabilityModel:
    """Parameters of the liability-threshold model.

    ``odds_ratio`` and ``lambda_s`` are descriptive only (set by
    :meth:`calibrated`).
    """

    beta_G: float = 0.0
    beta_F: float = 0.0
    maf: float = DEFAULT_MAF
    prevalence: float = DEFAULT_PREVALENCE
    odds_ratio: float | None = None
    lambda_s: float | None = None

    @property
    def threshold(self) -> float:
        return liability_threshold(self.beta_F, self.prevalence)

    @classmethod
    def calibrated(cls, odds_ratio: float = 1.0, lambda_s: float = 1.0, maf: float = DEFAULT_MAF, prevalence: float = DEFAULT_PREVALENCE) -> "LiabilityModel":
        bF = solve_beta_F(lambda_s, prevalence)
        bG = solve_beta_G(odds_ratio, bF, maf, prevalence)
        return cls(bG, bF, maf, prevalence, odds_ratio, lambda_s)


# ---------------------------------------------------------------------------
# designs


@dataclass(frozen=True)
class FamilyKind:
    """A sibship of ``len(affection)`` children of two ungenotyped parents
    with a required affection pattern; ``genotyped`` marks which children
    are genotyped. A single child stands for an unrelated individual."""

    name: str
    affection: tuple[int, ...]
    genotyped: tuple[bool, ...]

    @property
    def n_children(self) -> int:
        return len(self.affection)

    @property
    def genotyped_index(self) -> list[int]:
        return [c for c, g in enumerate(self.genotyped) if g]

    @property
    def singleton(self) -> bool:
        return self.n_children == 1


RA_CASE = FamilyKind("ra_case", (1,), (True,))
RA_CONTROL = FamilyKind("ra_control", (0,), (True,))
FH_CASE = FamilyKind("fh_case", (1, 1), (True, False))
FH_PAIR = FamilyKind("fh_case_affected_sib", (1, 1), (True, True))
DISCORDANT_PAIR = FamilyKind("case_unaffected_sib", (1, 0), (True, True))
SIBSHIP4 = FamilyKind("fh_case_affected_sib_two_unaffected", (1, 1, 0, 0), (True, True, True, True))


@dataclass(frozen=True)
class StudyDesign:
    """Genotyped sample counts by ascertainment category."""

    design_id: int
    ra_cases: int = 0
    fh_cases: int = 0
    affected_sibs: int = 0
    ra_controls: int = 0
    unaffected_sib1: int = 0
    unaffected_sib2: int = 0

    def __post_init__(self):
        for name in ("ra_cases", "fh_cases", "affected_sibs", "ra_controls", "unaffected_sib1", "unaffected_sib2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def n_subjects(self) -> int:
        return (self.ra_cases + self.fh_cases + self.affected_sibs + self.ra_controls
                + self.unaffected_sib1 + self.unaffected_sib2)

    def components(self) -> list[tuple[FamilyKind, int]]:
        """Family kinds and how many of each the design samples."""
        out: list[tuple[FamilyKind, int]] = []
        if self.ra_cases:
            out.append((RA_CASE, self.ra_cases))
        if self.unaffected_sib2:
            n = self.fh_cases
            if not (self.affected_sibs == self.unaffected_sib1 == self.unaffected_sib2 == n):
                raise ValueError("sibships of four need equal proband, affected-sib and unaffected-sib counts")
            out.append((SIBSHIP4, n))
        elif self.unaffected_sib1:
            if self.affected_sibs or self.unaffected_sib1 != self.fh_cases:
                raise ValueError("case/unaffected-sib pairs need equal proband and sibling counts")
            out.append((DISCORDANT_PAIR, self.fh_cases))
        else:
            if self.affected_sibs > self.fh_cases:
                raise ValueError("more affected siblings than probands")
            if self.affected_sibs:
                out.append((FH_PAIR, self.affected_sibs))
            if self.fh_cases - self.affected_sibs:
                out.append((FH_CASE, self.fh_cases - self.affected_sibs))
        if self.ra_controls:
            out.append((RA_CONTROL, self.ra_controls))
        return out

    def scaled(self, factor: float) -> "StudyDesign":
        def s(c):
            return 0 if c == 0 else max(1, int(math.floor(c * factor + 0.5)))

        return replace(
            self,
            ra_cases=s(self.ra_cases), fh_cases=s(self.fh_cases), affected_sibs=s(self.affected_sibs),
            ra_controls=s(self.ra_controls), unaffected_sib1=s(self.unaffected_sib1),
            unaffected_sib2=s(self.unaffected_sib2),
        )

    def with_subjects(self, n: int) -> "StudyDesign":
        return self.scaled(n / self.n_subjects)


DESIGNS = {
    1: StudyDesign(1, ra_cases=5000, ra_controls=10000),
    2: StudyDesign(2, fh_cases=5000, ra_controls=10000),
    3: StudyDesign(3, ra_cases=5000, fh_cases=5000, ra_controls=10000),
    4: StudyDesign(4, ra_cases=10000, fh_cases=5000, ra_controls=10000),
    5: StudyDesign(5, ra_cases=5000, fh_cases=5000, affected_sibs=5000, ra_controls=10000),
    6: StudyDesign(6, fh_cases=10000, unaffected_sib1=10000),
    7: StudyDesign(7, fh_cases=10000, affected_sibs=10000, unaffected_sib1=10000, unaffected_sib2=10000),
}
DESK_SCALE = 0.1


def design(design_id: int, scale: float = 1.0) -> StudyDesign:
    if design_id not in DESIGNS:
        raise ValueError(f"unknown design {design_id}; expected 1..7")
    d = DESIGNS[design_id]
    return d if scale == 1.0 else d.scaled(scale)


# ---------------------------------------------------------------------------
# state tables

_CONFIG_BITS = ((np.arange(16)[:, None] >> np.arange(4)) & 1).astype(np.int64)  # (P1, P2, M1, M2)


def _transmissions(k: int) -> np.ndarray:
    """(4^k, k, 2) chromosome ids (0..3) received by each child."""
    t = np.arange(4**k)
    digits = (t[:, None] >> (2 * np.arange(k))) & 3
    pat = digits & 1
    mat = 2 + (digits >> 1)
    return np.stack([pat, mat], axis=2)


def pattern_likelihood(genotypes: np.ndarray, affection, model: LiabilityModel) -> np.ndarray:
    """P(affection pattern | children genotypes), one row per genotype vector.

    Integrates over the shared familial term ``Fbar ~ N(0, 1/2)``.
    """
    x, w = hermegauss(_HERMITE_NODES)
    w = w / w.sum()
    fbar = math.sqrt(0.5) * x
    sd = math.sqrt(1.0 + 0.5 * model.beta_F**2)
    G = np.asarray(genotypes, dtype=float)
    shift = model.beta_G * (G - 2.0 * model.maf)
    z = (model.threshold - shift[:, :, None] - model.beta_F * fbar[None, None, :]) / sd
    q = special.ndtr(-z)
    A = np.asarray(affection)[None, :, None]
    per = np.where(A == 1, q, 1.0 - q)
    return np.prod(per, axis=1) @ w


class KindTable:
    """Enumerated states of one family kind under one model.

    State ``s = config * 4^k + t`` combines the parental alleles ``config``
    (bit ``j`` of ``config`` is the allele on chromosome ``j`` of
    (P1, P2, M1, M2)) with the transmission vector ``t``.
    """

    def __init__(self, kind: FamilyKind, model: LiabilityModel, cache: StructureCache, pi0: float | None = None):
        self.kind = kind
        self.model = model
        k = kind.n_children
        gi = kind.genotyped_index
        self.k = k
        self.gi = gi
        self.n_g = len(gi)
        T = 4**k
        self.T = T
        tr = _transmissions(k)
        self.trans = tr
        y = _CONFIG_BITS
        G = y[:, tr[:, :, 0]] + y[:, tr[:, :, 1]]  # (16, T, k)
        self.G_children = G.reshape(16 * T, k)
        phi = model.maf
        m = y.sum(axis=1)
        prior = phi**m * (1 - phi) ** (4 - m) / T
        codes = self.G_children @ (3 ** np.arange(k))
        uniq, inv = np.unique(codes, return_inverse=True)
        ug = (uniq[:, None] // 3 ** np.arange(k)) % 3
        lik = pattern_likelihood(ug, kind.affection, model)[inv]
        prob = np.repeat(prior, T) * lik
        self.p_pattern = float(prob.sum())
        self.prob = prob / prob.sum()
        self.cum = np.cumsum(self.prob)
        self.G_geno = self.G_children[:, gi]
        self.gcode = self.G_geno @ (3 ** np.arange(self.n_g))

        pi0 = model.prevalence if pi0 is None else pi0
        null = NullModel(pi0)
        pscore = np.array([null.phenotype_score("", "", AFFECTED if a else UNAFFECTED) for a in kind.affection])
        self.n_g_trans = 4**self.n_g if self.n_g > 1 else 1
        sid_t = np.zeros(T, dtype=np.int64)
        n_t = np.zeros(T, dtype=np.int64)
        z_t = np.zeros((T, 4))
        order_t = np.full((T, 4), -1, dtype=np.int64)
        for t in range(T):
            mapping: dict[int, int] = {}
            local = []
            for c in gi:
                a, b = tr[t, c]
                for ch in (a, b):
                    if ch not in mapping:
                        mapping[ch] = len(mapping)
                local.append(tuple(sorted((mapping[a], mapping[b]))))
            sid_t[t] = cache.get(local, [kind.singleton] * len(gi))
            n_t[t] = len(mapping)
            for ch, lk in mapping.items():
                order_t[t, lk] = ch
            # ungenotyped children add to the chromosomes they truly carry
            for c in range(k):
                for ch in tr[t, c]:
                    if ch in mapping:
                        z_t[t, mapping[ch]] += pscore[c]
        self.sid_t, self.n_t, self.z_t, self.order_t = sid_t, n_t, z_t, order_t
        t_of_state = np.tile(np.arange(T), 16)
        self.t_of_state = t_of_state
        self.sid = sid_t[t_of_state]
        self.klass = np.zeros(16 * T, dtype=np.int64)
        for sid in np.unique(sid_t):
            st = cache[sid]
            sel = self.sid == sid
            self.klass[sel] = st.class_of(self.G_geno[sel])

        # consistent labelings for error injection (genotyped sibships only)
        self.injectable = self.n_g >= 2
        if self.injectable:
            if self.n_g != k:
                raise ValueError("error injection needs every child of the sibship genotyped")
            allg = (np.arange(3**self.n_g)[:, None] // 3 ** np.arange(self.n_g)) % 3
            alt = np.zeros((T, len(allg)), dtype=np.int64)
            for t in range(T):
                alt[t] = cache[sid_t[t]].class_of(allg)
            self.alt_class = alt
            ok = alt >= 0
            self.n_consistent = ok.sum(axis=0)
            width = int(self.n_consistent.max())
            cons = np.zeros((len(allg), width), dtype=np.int64)
            for g in range(len(allg)):
                idx = np.flatnonzero(ok[:, g])
                cons[g, : len(idx)] = idx
            self.consistent = cons

        order = gi + [c for c in range(k) if c not in gi]
        K = np.full((k, k), 0.25) + 0.25 * np.eye(k)
        a = np.array([phenotype_code(AFFECTED if kind.affection[c] else UNAFFECTED, pi0) for c in order])
        self.mqls_layout = (K, a, self.n_g)

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        u = gen.random(n)
        return np.minimum(np.searchsorted(self.cum, u, side="right"), len(self.cum) - 1)

    def state_of(self, alleles: np.ndarray, trans: np.ndarray) -> np.ndarray:
        """State index from parental alleles (n, 4) and transmissions (n, k)."""
        config = (np.asarray(alleles) << np.arange(4)).sum(axis=1)
        t = (np.asarray(trans) << (2 * np.arange(self.k))).sum(axis=1)
        return config * self.T + t


# ---------------------------------------------------------------------------
# direct generative model


@dataclass
class FamilySample:
    """Vectorized draw of ``n`` nuclear families (parents first)."""

    alleles: np.ndarray  # (n, 4) parental chromosomes P1, P2, M1, M2
    trans: np.ndarray  # (n, k) transmission digits
    genotypes: np.ndarray  # (n, 2 + k)
    F: np.ndarray
    E: np.ndarray
    liability: np.ndarray
    affected: np.ndarray


def simulate_families(model: LiabilityModel, n_children: int, n: int, gen: np.random.Generator) -> FamilySample:
    """Draw ``n`` families directly from the generative model."""
    k = n_children
    alleles = (gen.random((n, 4)) < model.maf).astype(np.int64)
    trans = gen.integers(0, 4, size=(n, k))
    pat = alleles[np.arange(n)[:, None], trans & 1]
    mat = alleles[np.arange(n)[:, None], 2 + (trans >> 1)]
    G = np.concatenate([alleles[:, :2].sum(1, keepdims=True), alleles[:, 2:].sum(1, keepdims=True), pat + mat], axis=1)
    Fp = gen.standard_normal((n, 2))
    Fc = 0.5 * Fp.sum(axis=1, keepdims=True) + math.sqrt(0.5) * gen.standard_normal((n, k))
    F = np.concatenate([Fp, Fc], axis=1)
    E = gen.standard_normal((n, 2 + k))
    L = model.beta_G * (G - 2.0 * model.maf) + E + model.beta_F * F
    return FamilySample(alleles, trans, G, F, E, L, (L > model.threshold).astype(np.int64))


def simulate_family(model: LiabilityModel, n_children: int, rng: RandomStream) -> FamilySample:
    """One family from the generative model (see :func:`simulate_families`)."""
    return simulate_families(model, n_children, 1, rng.generator())


def _rejection_states(table: KindTable, n: int, gen: np.random.Generator) -> np.ndarray:
    want = np.asarray(table.kind.affection)
    got: list[np.ndarray] = []
    have = 0
    batch = max(64, int(4 * n / max(table.p_pattern, 1e-6)))
    batch = min(batch, 2_000_000)
    while have < n:
        fs = simulate_families(table.model, table.k, batch, gen)
        keep = np.all(fs.affected[:, 2:] == want, axis=1)
        if keep.any():
            st = table.state_of(fs.alleles[keep], fs.trans[keep])
            got.append(st)
            have += len(st)
    return np.concatenate(got)[:n]


# ---------------------------------------------------------------------------
# datasets


@dataclass
class SimulatedDataset:
    pedigree: Pedigree
    genotypes: dict[tuple[str, str], int]
    truth: ChromosomeLabeling
    snp_id: str = "snp1"
    components: list[tuple[str, np.ndarray]] = field(default_factory=list)


def _draw_replicate(tables, counts, gen, method="exact"):
    out = []
    for tab, n in zip(tables, counts):
        out.append(tab.sample(gen, n) if method == "exact" else _rejection_states(tab, n, gen))
    return out


def _inject(tables, counts, states, rate, gen):
    """Alternative transmission per family (-1 = keep the truth)."""
    alts = [np.full(n, -1, dtype=np.int64) for n in counts]
    if rate <= 0:
        return alts
    pool = [(c, j) for c, (tab, n) in enumerate(zip(tables, counts)) if tab.injectable for j in range(n)]
    m = math.ceil(rate * len(pool) - 1e-12)
    if m == 0:
        return alts
    pick = gen.choice(len(pool), size=m, replace=False)
    pick.sort()
    u = gen.random(m)
    for p, uu in zip(pick, u):
        c, j = pool[p]
        tab = tables[c]
        g = tab.gcode[states[c][j]]
        alts[c][j] = tab.consistent[g, int(uu * tab.n_consistent[g])]
    return alts


def ascertain_study(design_: StudyDesign, model: LiabilityModel, rng: RandomStream, method: str = "exact") -> SimulatedDataset:
    """Sample one study.

    ``method="exact"`` draws each family from its conditional distribution;
    ``"rejection"`` simulates families from the generative model until the
    required affection pattern appears.
    """
    cache = StructureCache()
    comps = design_.components()
    tables = [KindTable(kind, model, cache) for kind, _ in comps]
    counts = [n for _, n in comps]
    states = _draw_replicate(tables, counts, rng.generator(), method)
    return _dataset_from_states(tables, states)


def _dataset_from_states(tables, states) -> SimulatedDataset:
    inds: list[Individual] = []
    genos: dict[tuple[str, str], int] = {}
    truth = ChromosomeLabeling("region1")
    comps = []
    for c, (tab, st) in enumerate(zip(tables, states)):
        kind = tab.kind
        comps.append((kind.name, st))
        for j, s in enumerate(st):
            fid = f"{kind.name}_{c}_{j:06d}"
            if kind.singleton:
                iid = "p1"
                inds.append(Individual(fid, iid, None, None, AFFECTED if kind.affection[0] else UNAFFECTED, True))
                genos[(fid, iid)] = int(tab.G_children[s, 0])
                truth.families[fid] = FamilyLabeling(fid, hard={iid: (1, 2)})
                continue
            inds.append(Individual(fid, "fa", None, None, UNKNOWN, False, 1))
            inds.append(Individual(fid, "mo", None, None, UNKNOWN, False, 2))
            t = tab.t_of_state[s]
            mapping: dict[int, int] = {}
            hard, soft = {}, {}
            for ci in range(tab.k):
                iid = f"s{ci + 1}"
                aff = AFFECTED if kind.affection[ci] else UNAFFECTED
                typed = kind.genotyped[ci]
                inds.append(Individual(fid, iid, "fa", "mo", aff, typed))
                if typed:
                    genos[(fid, iid)] = int(tab.G_children[s, ci])
                    pair = []
                    for ch in tab.trans[t, ci]:
                        if ch not in mapping:
                            mapping[ch] = len(mapping) + 1
                        pair.append(mapping[ch])
                    hard[iid] = tuple(pair)
            for ci in range(tab.k):
                if not kind.genotyped[ci]:
                    soft[f"s{ci + 1}"] = {mapping[ch]: 1.0 for ch in tab.trans[t, ci] if ch in mapping}
            origin = {lab: ("fa" if ch < 2 else "mo") for ch, lab in mapping.items()}
            truth.families[fid] = FamilyLabeling(fid, hard=hard, soft=soft, origin=origin)
    return SimulatedDataset(Pedigree(inds), genos, truth, components=comps)


# ---------------------------------------------------------------------------
# power harness

METHODS = ("cqls", "cqls_drop_ambiguous", "mqls")


@dataclass
class PowerRow:
    design_id: int
    method: str
    odds_ratio: float | None
    lambda_s: float | None
    alpha: float
    replicates: int
    rejections: int
    skipped: int

    @property
    def power(self) -> float:
        return self.rejections / self.replicates

    @property
    def se(self) -> float:
        p = self.power
        return math.sqrt(p * (1 - p) / self.replicates)


@dataclass
class PowerTable:
    rows: list[PowerRow]
    pvalues: dict[str, np.ndarray] = field(default_factory=dict)

    def row(self, method: str) -> PowerRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def power(self, method: str) -> float:
        return self.row(method).power


class PowerHarness:
    """Batched evaluation of one design under one model.

    Replicate ``r`` draws everything from ``RandomStream(seed, r)``;
    statistics for a chunk of replicates are computed together.
    """

    def __init__(self, design_: StudyDesign, model: LiabilityModel, ibd_error_rate: float = 0.0, mqls_scale: str = "aligned"):
        if not 0.0 <= ibd_error_rate <= 1.0:
            raise ValueError("IBD error rate must lie in [0, 1]")
        self.design = design_
        self.model = model
        self.rate = ibd_error_rate
        self.cache = StructureCache()
        comps = design_.components()
        self.tables = [KindTable(kind, model, self.cache) for kind, _ in comps]
        self.counts = [n for _, n in comps]
        self.plan = MqlsPlan([t.mqls_layout for t in self.tables], scale=mqls_scale)

    def draw(self, stream: RandomStream):
        gen = stream.generator()
        states = _draw_replicate(self.tables, self.counts, gen)
        alts = _inject(self.tables, self.counts, states, self.rate, gen)
        return states, alts

    def scores(self, draws) -> ScoreVector:
        """Score vector with one group per replicate in ``draws``."""
        R = len(draws)
        parts = []
        for c, tab in enumerate(self.tables):
            n = self.counts[c]
            st = np.concatenate([d[0][c] for d in draws])
            alt = np.concatenate([d[1][c] for d in draws])
            grp = np.repeat(np.arange(R), n)
            t_true = tab.t_of_state[st]
            use_alt = alt >= 0
            t_eff = np.where(use_alt, alt, t_true)
            sid = tab.sid_t[t_eff]
            klass = tab.klass[st].copy()
            if use_alt.any():
                klass[use_alt] = tab.alt_class[alt[use_alt], tab.gcode[st[use_alt]]]
            nz = tab.n_t[t_eff]
            zpad = tab.z_t[t_eff]
            z = zpad[np.arange(4)[None, :] < nz[:, None]]
            parts.append((sid, klass, grp, nz, z))
        sid = np.concatenate([p[0] for p in parts])
        klass = np.concatenate([p[1] for p in parts])
        grp = np.concatenate([p[2] for p in parts])
        nz = np.concatenate([p[3] for p in parts])
        z = np.concatenate([p[4] for p in parts])
        order = np.argsort(grp, kind="stable")
        sid, klass, grp, nz = sid[order], klass[order], grp[order], nz[order]
        starts = np.concatenate([[0], np.cumsum([len(p[4]) for p in parts])[:-1]])
        fam_start = np.concatenate([s + np.concatenate([[0], np.cumsum(p[3])[:-1]]) for s, p in zip(starts, parts)])[order]
        pos = np.repeat(fam_start, nz) + (np.arange(nz.sum()) - np.repeat(np.cumsum(nz) - nz, nz))
        offsets = np.concatenate([[0], np.cumsum(nz)[:-1]])
        return ScoreVector(self.cache, sid, klass, grp, offsets, z[pos], n_groups=R)

    def mqls_pvalues(self, draws) -> np.ndarray:
        R = len(draws)
        lay, G, grp = [], [], []
        for c, tab in enumerate(self.tables):
            n = self.counts[c]
            st = np.concatenate([d[0][c] for d in draws])
            lay.append(np.full(len(st), c))
            g = np.zeros((len(st), self.plan.width))
            g[:, : tab.n_g] = tab.G_geno[st]
            G.append(g)
            grp.append(np.repeat(np.arange(R), n))
        _, p, _, _ = self.plan.evaluate(np.concatenate(lay), np.vstack(G), np.concatenate(grp), R)
        return p

    def pvalues(self, draws, methods) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        if "cqls" in methods or "cqls_drop_ambiguous" in methods:
            sv = self.scores(draws)
            if "cqls" in methods:
                out["cqls"] = cqls_batch(sv).p_value
            if "cqls_drop_ambiguous" in methods:
                out["cqls_drop_ambiguous"] = cqls_batch(sv, exclude_ambiguous=True).p_value
        if "mqls" in methods:
            out["mqls"] = self.mqls_pvalues(draws)
        return out


def _threads(threads: int | None) -> int:
    import os

    if threads is None:
        env = os.environ.get("CQLS_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def run_power(
    design_: StudyDesign,
    model: LiabilityModel,
    methods=("cqls", "mqls"),
    alpha: float = 0.01,
    replicates: int = 2000,
    rng: RandomStream = RandomStream(0),
    ibd_error_rate: float = 0.0,
    chunk: int = 500,
    threads: int | None = None,
    keep_pvalues: bool = False,
    mqls_scale: str = "aligned",
) -> PowerTable:
    """Fraction of replicates with p-value below ``alpha`` for each method.

    Replicate ``r`` uses ``RandomStream(rng.seed, r, rng.path)``; results do
    not depend on ``chunk`` or ``threads``.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if replicates < 1:
        raise ValueError("need at least one replicate")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    h = PowerHarness(design_, model, ibd_error_rate, mqls_scale)
    bounds = [(s, min(s + chunk, replicates)) for s in range(0, replicates, chunk)]

    def work(b):
        lo, hi = b
        draws = [h.draw(RandomStream(rng.seed, r, rng.path)) for r in range(lo, hi)]
        return h.pvalues(draws, methods)

    n = _threads(threads)
    if n == 1:
        results = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(n) as ex:
            results = list(ex.map(work, bounds))
    pv = {m: np.concatenate([r[m] for r in results]) for m in methods}
    rows = []
    for m in methods:
        p = pv[m]
        rows.append(PowerRow(
            design_id=design_.design_id, method=m, odds_ratio=model.odds_ratio, lambda_s=model.lambda_s,
            alpha=alpha, replicates=replicates, rejections=int(np.sum(p < alpha)), skipped=int(np.sum(np.isnan(p))),
        ))
    return PowerTable(rows, pv if keep_pvalues else {})
