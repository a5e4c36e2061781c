"""From pairwise IBD counts to founder-chromosome labels and founder alleles.

Labels are assigned greedily: a maximum set of pairwise IBD-0 members gets
distinct chromosome pairs, then each remaining member is labeled so that it
shares exactly ``ibd(i, j)`` labels with every member labeled before it.
When several labelings fit the IBD counts and are not related by a
relabeling symmetry, genotypes over the region decide between them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    GenotypeConsistencyError,
    IbdInconsistencyError,
    UnsupportedTopologyError,
)
from .labeling import ChromosomeLabeling, FamilyLabeling
from .numerics import RandomStream
from .pedigree import UNKNOWN, Family, Pedigree, _max_independent_set
from .structures import MAX_CHROMOSOMES, Structure, canonical_labels

PARITY_EVEN_FRACTION = 0.95
MIN_PARITY_LOCI = 3
MAX_ENUMERATED_NONFOUNDERS = 8


@dataclass
class PairwiseIbd:
    """IBD counts between genotyped members of one family in one region."""

    family_id: str
    region_id: str
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        norm: dict[tuple[str, str], int] = {}
        for (a, b), c in self.counts.items():
            if a == b:
                continue
            c = int(c)
            if c not in (0, 1, 2):
                raise IbdInconsistencyError(f"family {self.family_id}: IBD count {c} for ({a}, {b}) not in 0..2")
            key = (a, b) if a < b else (b, a)
            if key in norm and norm[key] != c:
                raise IbdInconsistencyError(
                    f"family {self.family_id}: asymmetric IBD for ({a}, {b}): {norm[key]} vs {c}"
                )
            norm[key] = c
        self.counts = norm

    @property
    def members(self) -> list[str]:
        return sorted({x for pair in self.counts for x in pair})

    def get(self, a: str, b: str) -> int:
        key = (a, b) if a < b else (b, a)
        try:
            return self.counts[key]
        except KeyError:
            raise IbdInconsistencyError(
                f"family {self.family_id}, region {self.region_id}: no IBD count for ({a}, {b})"
            ) from None


@dataclass
class FounderAlleleSet:
    """Founder alleles of one family at one locus.

    ``y`` maps each label to its minor-allele indicator where identifiable
    (labels carried by exactly the same members get a fixed representative
    split). ``ambiguous`` is set when more than one allele assignment fits
    the genotypes; ``roles`` then names, for a sib pair sharing one
    chromosome, the labels unique to sib 1, shared, and unique to sib 2.
    """

    family_id: str
    labels: list[int]
    y: dict[int, int]
    ambiguous: bool
    solutions: np.ndarray
    roles: tuple[int, int, int] | None = None


# ---------------------------------------------------------------------------
# trimming


def trim_ibd2(ped: Pedigree, ibd: PairwiseIbd) -> tuple[list[str], dict[str, str]]:
    """Keep one member of every IBD-2 group.

    Returns the retained members (sorted) and a map from each dropped
    member to the retained one it duplicates (lowest id in its group).
    """
    fam = ped[ibd.family_id]
    members = sorted(set(fam.genotyped_ids) | set(ibd.members))
    parent = {m: m for m in members}

    def root(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b), c in ibd.counts.items():
        if c == 2 and a in parent and b in parent:
            ra, rb = root(a), root(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for m in members:
        groups.setdefault(root(m), []).append(m)
    dup: dict[str, str] = {}
    for rep, grp in groups.items():
        grp = sorted(grp)
        for a, b in itertools.combinations(grp, 2):
            if ibd.get(a, b) != 2:
                raise IbdInconsistencyError(
                    f"family {ibd.family_id}: IBD-2 is not transitive among {', '.join(grp)}"
                )
        for other in grp[1:]:
            dup[other] = grp[0]
            for m in members:
                if m not in grp and ibd.get(other, m) != ibd.get(grp[0], m):
                    raise IbdInconsistencyError(
                        f"family {ibd.family_id}: {other} and {grp[0]} share two chromosomes but differ in IBD with {m}"
                    )
    retained = sorted(root(m) for m in members if root(m) == m)
    return retained, dup


# ---------------------------------------------------------------------------
# label assignment


def _genotype_matrix(ids: Sequence[str], genotypes: Mapping[str, Sequence[float]]) -> np.ndarray:
    rows = []
    n_loci = None
    for i in ids:
        g = genotypes.get(i)
        if g is None:
            rows.append(None)
            continue
        g = np.asarray(g, dtype=float).reshape(-1)
        n_loci = len(g) if n_loci is None else n_loci
        if len(g) != n_loci:
            raise ValueError("genotype vectors differ in length within a region")
        rows.append(g)
    n_loci = n_loci or 0
    return np.vstack([r if r is not None else np.full(n_loci, np.nan) for r in rows]) if rows else np.zeros((0, 0))


def _compatible_loci(rows: list[tuple[int, int]], geno: np.ndarray) -> int | None:
    """Number of loci at which some 0/1 allele assignment reproduces the
    observed genotypes (missing genotypes impose nothing). ``None`` when the
    labeling is too large to enumerate."""
    if geno.shape[1] == 0:
        return 0
    present = ~np.isnan(geno)
    total = 0
    patterns: dict[bytes, list[int]] = {}
    for locus in range(geno.shape[1]):
        patterns.setdefault(present[:, locus].tobytes(), []).append(locus)
    for key, loci in patterns.items():
        keep = np.flatnonzero(present[:, loci[0]])
        if len(keep) == 0:
            total += len(loci)
            continue
        sub = canonical_labels([rows[i] for i in keep])
        if max(max(p) for p in sub) + 1 > MAX_CHROMOSOMES:
            return None
        st = Structure(sub)
        g = geno[np.ix_(keep, loci)].T.astype(np.int64)
        total += int(np.sum(st.class_of(g) >= 0))
    return total


def _signature(labels: Sequence[int], carriers: Mapping[int, frozenset]) -> tuple:
    return tuple(sorted((tuple(sorted(carriers.get(x, frozenset()))) for x in labels)))


def _classify(r: str, placed: list[str], ibd: PairwiseIbd) -> tuple[str, tuple]:
    """Which assignment case applies to ``r`` and with which partners."""
    ones = [a for a in placed if ibd.get(r, a) == 1]
    for i1, i2 in itertools.combinations(ones, 2):
        if ibd.get(i1, i2) == 1:
            return "a", (i1, i2)
    for i1, i2 in itertools.combinations(ones, 2):
        if ibd.get(i1, i2) == 0:
            return "b", (i1, i2)
    if len(ones) == 1:
        return "c", (ones[0],)
    return "none", ()


def _case_priority(case: str) -> int:
    return {"a": 0, "b": 1, "c": 2}.get(case, 3)


def assign_labels(
    ped: Pedigree,
    ibd: PairwiseIbd,
    genotypes: Mapping[str, Sequence[float]] | None = None,
) -> FamilyLabeling:
    """Founder-chromosome labels for the genotyped members of one family.

    Parameters
    ----------
    ped
        Pedigree containing the family.
    ibd
        Pairwise IBD counts for the region.
    genotypes
        Minor-allele counts per member over the loci of the region (NaN for
        missing); used only to choose between labelings the IBD counts
        cannot separate.

    Returns
    -------
    FamilyLabeling
        Hard labels for every genotyped member, duplicates carrying their
        representative's labels. ``low_confidence`` is set when a choice had
        to be made on fewer than three informative loci or remained tied.
    """
    fid = ibd.family_id
    genotypes = genotypes or {}
    retained, dup = trim_ibd2(ped, ibd)
    if not retained:
        raise IbdInconsistencyError(f"family {fid}: no genotyped members")
    adjacent = {m: set() for m in retained}
    for a, b in itertools.combinations(retained, 2):
        if ibd.get(a, b) > 0:
            adjacent[a].add(b)
            adjacent[b].add(a)
    founders = _max_independent_set(retained, adjacent)
    labels: dict[str, tuple[int, int]] = {}
    cases: dict[str, str] = {}
    next_label = 1
    for f in founders:
        labels[f] = (next_label, next_label + 1)
        cases[f] = "founder"
        next_label += 2
    placed = list(founders)
    low = False
    remaining = [m for m in retained if m not in labels]
    while remaining:
        scored = []
        for r in remaining:
            case, partners = _classify(r, placed, ibd)
            scored.append((_case_priority(case), r, case, partners))
        _, r, case, partners = min(scored)
        if case == "none":
            raise IbdInconsistencyError(f"family {fid}: {r} shares no chromosome with any labeled member")
        chosen, flag, tag = _choose(r, case, partners, placed, labels, next_label, ibd, genotypes)
        low = low or flag
        labels[r] = chosen
        cases[r] = tag
        next_label = max(next_label, max(chosen) + 1)
        placed.append(r)
        remaining.remove(r)
    hard = dict(labels)
    for d, rep in dup.items():
        hard[d] = labels[rep]
        cases[d] = f"duplicate_of:{rep}"
    return FamilyLabeling(family_id=fid, hard=hard, duplicates=dup, low_confidence=low, cases=cases)


def _choose(r, case, partners, placed, labels, next_label, ibd, genotypes):
    existing = sorted({x for p in placed for x in labels[p]})
    pool = existing + [next_label, next_label + 1]
    cands = []
    for a, b in itertools.combinations(pool, 2):
        if b == next_label + 1 and a != next_label:
            continue
        if all(len({a, b} & set(labels[p])) == ibd.get(r, p) for p in placed):
            cands.append((a, b))
    if not cands:
        raise IbdInconsistencyError(
            f"family {ibd.family_id}: no labeling of {r} agrees with its IBD counts to {', '.join(placed)}"
        )
    carriers: dict[int, frozenset] = {}
    for p in placed:
        for x in labels[p]:
            carriers[x] = carriers.get(x, frozenset()) | {p}
    classes: dict[tuple, list] = {}
    for c in cands:
        classes.setdefault(_signature(c, carriers), []).append(c)
    reps = [max(v) if case == "c" else min(v) for v in classes.values()]
    reps.sort()
    tag = {"a": "a", "b": "b", "c": "c"}[case]
    if len(reps) == 1:
        return reps[0], False, _refine_tag(tag, reps[0], partners, labels)

    geno_ids = placed + [r]
    G = _genotype_matrix(geno_ids, genotypes)
    low = False
    if case == "a":
        i1, i2 = partners
        odd = tuple(sorted(set(labels[i1]) ^ set(labels[i2])))
        if odd in reps:
            trio = _genotype_matrix([i1, i2, r], genotypes)
            if trio.size:
                ok = ~np.isnan(trio).any(axis=0)
                t = trio[:, ok]
                informative = ~(np.all(t == 0, axis=0) | np.all(t == 2, axis=0))
                sums = t[:, informative].sum(axis=0)
            else:
                sums = np.zeros(0)
            if len(sums) >= MIN_PARITY_LOCI:
                even = np.mean(sums % 2 == 0) >= PARITY_EVEN_FRACTION
                if even:
                    return odd, False, "a1"
                reps = [c for c in reps if c != odd]
                if len(reps) == 1:
                    return reps[0], False, _refine_tag("a", reps[0], partners, labels)
            else:
                low = True

    rows_base = [labels[p] for p in placed]
    scores = []
    for c in reps:
        n_ok = _compatible_loci(rows_base + [c], G) if G.size else 0
        scores.append(-1 if n_ok is None else n_ok)
    best = max(scores)
    winners = [c for c, s in zip(reps, scores) if s == best]
    if len(winners) > 1 or best < 0:
        low = True
    chosen = winners[0]
    return chosen, low, _refine_tag(case, chosen, partners, labels)


def _refine_tag(case: str, chosen, partners, labels) -> str:
    if case == "a":
        i1, i2 = partners
        if set(chosen) == set(labels[i1]) ^ set(labels[i2]):
            return "a1"
        return "a2-a4"
    if case == "b":
        return "b"
    return "c"


def labeling_consistent(fl: FamilyLabeling, ibd: PairwiseIbd) -> bool:
    """Every pair shares exactly as many labels as its IBD count."""
    ids = sorted(fl.hard)
    for a, b in itertools.combinations(ids, 2):
        if len(set(fl.hard[a]) & set(fl.hard[b])) != ibd.get(a, b):
            return False
    return True


def assign_all(
    ped: Pedigree,
    ibds: Sequence[PairwiseIbd],
    genotypes: Mapping[str, Mapping[tuple[str, str], Sequence[float]]] | None = None,
) -> dict[str, ChromosomeLabeling]:
    """Label every (family, region) pair. ``genotypes[region][(fid, iid)]``
    holds the member's genotypes over the region's loci."""
    out: dict[str, ChromosomeLabeling] = {}
    for rec in sorted(ibds, key=lambda x: (x.region_id, x.family_id)):
        lab = out.setdefault(rec.region_id, ChromosomeLabeling(rec.region_id))
        g = {}
        if genotypes is not None:
            reg = genotypes.get(rec.region_id, {})
            g = {iid: v for (f, iid), v in reg.items() if f == rec.family_id}
        lab.families[rec.family_id] = assign_labels(ped, rec, g)
    return out


# ---------------------------------------------------------------------------
# founder alleles


def founder_alleles(fl: FamilyLabeling, genotypes: Mapping[str, float | None]) -> FounderAlleleSet:
    """Solve ``G_i = sum of alleles on i's two labels`` for one locus.

    Members with a missing genotype are ignored; labels carried only by
    them are absent from the result.

    Raises
    ------
    GenotypeConsistencyError
        When no 0/1 assignment reproduces the genotypes.
    """
    ids = [i for i in sorted(fl.hard) if genotypes.get(i) is not None and not _isnan(genotypes.get(i))]
    if not ids:
        return FounderAlleleSet(fl.family_id, [], {}, False, np.zeros((1, 0), dtype=np.int64))
    order: list[int] = []
    for i in ids:
        for x in fl.hard[i]:
            if x not in order:
                order.append(x)
    idx = {x: k for k, x in enumerate(order)}
    rows = [tuple(sorted((idx[a], idx[b]))) for a, b in (fl.hard[i] for i in ids)]
    st = Structure(rows)
    g = np.array([int(genotypes[i]) for i in ids])
    sols = st.solutions(g)
    if len(sols) == 0:
        raise GenotypeConsistencyError(
            f"family {fl.family_id}: genotypes {dict(zip(ids, g.tolist()))} cannot arise from the labeling"
        )
    c = int(st.class_of(g[None, :])[0])
    ambiguous = bool(st.ambiguous_classes[c])
    y: dict[int, int] = {}
    if not ambiguous:
        rep = st.class_representative[c]
        y = {x: int(rep[idx[x]]) for x in order}
    roles = None
    if ambiguous and len(ids) == 2 and st.n == 3:
        s1, s2 = (set(fl.hard[i]) for i in ids)
        shared = s1 & s2
        if len(shared) == 1:
            (sh,) = shared
            roles = ((s1 - shared).pop(), sh, (s2 - shared).pop())
    return FounderAlleleSet(fl.family_id, order, y, ambiguous, sols, roles)


def _isnan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


# ---------------------------------------------------------------------------
# inheritance enumeration over a pedigree


def _generations(fam: Family) -> int:
    depth: dict[str, int] = {}
    for iid in fam.topological_order():
        ind = fam.members[iid]
        depth[iid] = 1 if ind.is_founder else 1 + max(depth[ind.father_id], depth[ind.mother_id])
    return max(depth.values()) if depth else 0


def inheritance_states(fam: Family):
    """Yield ``{member: (chrom_a, chrom_b)}`` for every Mendelian
    transmission pattern; pedigree founder ``t`` (sorted) owns chromosomes
    ``2t`` and ``2t + 1``."""
    order = fam.topological_order()
    fnd = fam.pedigree_founders
    base = {f: (2 * t, 2 * t + 1) for t, f in enumerate(fnd)}
    nonf = [i for i in order if not fam.members[i].is_founder]
    if len(nonf) > MAX_ENUMERATED_NONFOUNDERS:
        raise UnsupportedTopologyError(
            f"family {fam.family_id}: {len(nonf)} non-founders exceed the enumeration limit"
        )
    for choice in itertools.product(range(4), repeat=len(nonf)):
        carry = dict(base)
        for iid, c in zip(nonf, choice):
            ind = fam.members[iid]
            carry[iid] = (carry[ind.father_id][c & 1], carry[ind.mother_id][c >> 1])
        yield carry


def _founder_of_chrom(fam: Family) -> dict[int, str]:
    return {2 * t + k: f for t, f in enumerate(fam.pedigree_founders) for k in (0, 1)}


def _label_maps(carry, hard: Mapping[str, tuple[int, int]], origin, chrom_owner):
    """All injective label -> chromosome maps matching the hard labels."""
    ids = sorted(hard)
    out = []

    def rec(k, fwd, back):
        if k == len(ids):
            out.append(dict(fwd))
            return
        i = ids[k]
        a, b = hard[i]
        c1, c2 = carry[i]
        if c1 == c2:
            return
        for x, y in ((c1, c2), (c2, c1)):
            ok = True
            added = []
            for lab, ch in ((a, x), (b, y)):
                if lab in fwd:
                    if fwd[lab] != ch:
                        ok = False
                        break
                elif ch in back:
                    ok = False
                    break
                elif origin and lab in origin and chrom_owner[ch] != origin[lab]:
                    ok = False
                    break
                else:
                    fwd[lab] = ch
                    back[ch] = lab
                    added.append(lab)
            if ok:
                rec(k + 1, fwd, back)
            for lab in added:
                del back[fwd[lab]]
                del fwd[lab]

    rec(0, {}, {})
    return out


def descent_probabilities(ped: Pedigree, fl: FamilyLabeling, member: str) -> dict[int, float]:
    """Expected copies of each observed label carried by a phenotype-only member.

    Transmission patterns compatible with the hard labels are weighted
    equally (and, within a pattern, every matching label map equally).
    Copies of chromosomes not seen in any labeled member are dropped.

    Raises
    ------
    UnsupportedTopologyError
        For pedigrees other than nuclear families and three-generation
        pedigrees, or when no pattern fits the labels.
    """
    if member in fl.duplicates:
        a, b = fl.hard[fl.duplicates[member]]
        return {a: 1.0, b: 1.0}
    if member in fl.hard:
        a, b = fl.hard[member]
        return {a: 1.0, b: 1.0}
    fam = ped[fl.family_id]
    if member not in fam.members:
        raise KeyError(member)
    if _generations(fam) > 3:
        raise UnsupportedTopologyError(
            f"family {fl.family_id}: descent probabilities support at most three generations"
        )
    owner = _founder_of_chrom(fam)
    acc: dict[int, float] = {}
    n_states = 0
    for carry in inheritance_states(fam):
        maps = _label_maps(carry, fl.hard, fl.origin, owner)
        if not maps:
            continue
        n_states += 1
        w = 1.0 / len(maps)
        for mp in maps:
            back = {ch: lab for lab, ch in mp.items()}
            for ch in carry[member]:
                if ch in back:
                    acc[back[ch]] = acc.get(back[ch], 0.0) + w
    if n_states == 0:
        raise UnsupportedTopologyError(
            f"family {fl.family_id}: no Mendelian transmission pattern matches the labels"
        )
    return {lab: v / n_states for lab, v in sorted(acc.items())}


def add_descent_probabilities(ped: Pedigree, labeling: ChromosomeLabeling) -> ChromosomeLabeling:
    """Fill ``soft`` entries for every phenotyped member without hard labels."""
    for fl in labeling:
        fam = ped[fl.family_id]
        for iid in sorted(fam.members):
            ind = fam.members[iid]
            if iid in fl.hard or ind.affection == UNKNOWN:
                continue
            fl.soft[iid] = descent_probabilities(ped, fl, iid)
    return labeling


# ---------------------------------------------------------------------------
# labeling errors


def _labels_from_carry(carry: Mapping[str, tuple[int, int]], ids: Sequence[str]) -> dict[str, tuple[int, int]]:
    mapping: dict[int, int] = {}
    out = {}
    for i in ids:
        pair = []
        for ch in carry[i]:
            if ch not in mapping:
                mapping[ch] = len(mapping) + 1
            pair.append(mapping[ch])
        out[i] = tuple(pair)
    return out


def consistent_labelings(fam: Family, ids: Sequence[str], genotypes: Mapping[str, float | None]) -> list[dict[str, tuple[int, int]]]:
    """Labelings of ``ids`` from Mendelian transmission patterns whose
    founder chromosomes admit alleles reproducing ``genotypes``; one entry
    per pattern, so drawing uniformly from the list draws a uniform
    consistent pattern."""
    ids = sorted(ids)
    out = []
    obs = [i for i in ids if genotypes.get(i) is not None and not _isnan(genotypes.get(i))]
    for carry in inheritance_states(fam):
        if any(carry[i][0] == carry[i][1] for i in ids):
            continue
        lab = _labels_from_carry(carry, ids)
        if obs:
            st = Structure(canonical_labels([tuple(x - 1 for x in lab[i]) for i in obs]))
            g = np.array([[int(genotypes[i]) for i in obs]])
            if st.class_of(g)[0] < 0:
                continue
        out.append(lab)
    return out


def inject_ibd_errors(
    truth: ChromosomeLabeling,
    ped: Pedigree,
    genotypes: Mapping[tuple[str, str], float | None],
    rate: float,
    rng: RandomStream,
) -> ChromosomeLabeling:
    """Replace the labeling of ``ceil(rate * n_sets)`` sibling sets.

    Sibling sets are families with at least two labeled members. The altered
    ones are chosen uniformly without replacement; each gets
    the labeling of a transmission pattern drawn uniformly from those
    consistent with its genotypes at the locus.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"error rate must lie in [0, 1], got {rate}")
    sets = [f for f in sorted(truth.families) if len(truth.families[f].hard) >= 2]
    n_bad = math.ceil(rate * len(sets) - 1e-12)
    gen = rng.generator()
    bad = {sets[i] for i in gen.choice(len(sets), size=n_bad, replace=False).tolist()} if n_bad else set()
    out = ChromosomeLabeling(truth.region_id)
    for fid in sorted(truth.families):
        fl = truth.families[fid]
        if fid not in bad:
            out.families[fid] = fl
            continue
        ids = sorted(fl.hard)
        g = {i: genotypes.get((fid, i)) for i in ids}
        options = consistent_labelings(ped[fid], ids, g)
        pick = options[int(gen.integers(len(options)))]
        out.families[fid] = FamilyLabeling(family_id=fid, hard=pick, cases={i: "injected" for i in ids})
    return out
