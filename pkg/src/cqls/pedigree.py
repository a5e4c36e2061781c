"""Pedigree records, validation, kinship coefficients and founder sets."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DanglingParentError,
    DuplicateIndividualError,
    InputFormatError,
    PedigreeCycleError,
    PedigreeError,
)

AFFECTED = 1
UNAFFECTED = 0
UNKNOWN = -9

PED_COLUMNS = ("family_id", "individual_id", "father_id", "mother_id", "sex", "affection", "genotyped")


@dataclass(frozen=True)
class Individual:
    family_id: str
    individual_id: str
    father_id: str | None = None
    mother_id: str | None = None
    affection: int = UNKNOWN
    genotyped: bool = True
    sex: int = 0

    @property
    def is_founder(self) -> bool:
        return self.father_id is None and self.mother_id is None


@dataclass
class Family:
    family_id: str
    members: dict[str, Individual] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.members.values())

    def __len__(self):
        return len(self.members)

    @property
    def pedigree_founders(self) -> list[str]:
        return sorted(i.individual_id for i in self if i.is_founder)

    @property
    def n_founder_chromosomes(self) -> int:
        return 2 * len(self.pedigree_founders)

    @property
    def genotyped_ids(self) -> list[str]:
        return sorted(i.individual_id for i in self if i.genotyped)

    def children_of(self, iid: str) -> list[str]:
        return sorted(
            i.individual_id for i in self if iid in (i.father_id, i.mother_id)
        )

    def topological_order(self) -> list[str]:
        """Member ids ordered so that parents precede their children."""
        order: list[str] = []
        state: dict[str, int] = {}

        def visit(iid: str, trail: tuple):
            s = state.get(iid, 0)
            if s == 2:
                return
            if s == 1:
                raise PedigreeCycleError(
                    f"family {self.family_id}: individual {iid} is its own ancestor "
                    f"({' -> '.join(trail + (iid,))})"
                )
            state[iid] = 1
            ind = self.members[iid]
            for p in (ind.father_id, ind.mother_id):
                if p is not None:
                    visit(p, trail + (iid,))
            state[iid] = 2
            order.append(iid)

        for iid in sorted(self.members):
            visit(iid, ())
        return order


class Pedigree:
    """Collection of families, validated on construction."""

    def __init__(self, individuals: Iterable[Individual]):
        self.families: dict[str, Family] = {}
        for ind in individuals:
            fam = self.families.setdefault(ind.family_id, Family(ind.family_id))
            if ind.individual_id in fam.members:
                raise DuplicateIndividualError(
                    f"family {ind.family_id}: duplicate individual {ind.individual_id}"
                )
            fam.members[ind.individual_id] = ind
        self._validate()

    def _validate(self):
        for fam in self.families.values():
            for ind in fam:
                parents = (ind.father_id, ind.mother_id)
                if (parents[0] is None) != (parents[1] is None):
                    raise PedigreeError(
                        f"family {fam.family_id}: {ind.individual_id} has exactly one parent "
                        "listed; give both or neither"
                    )
                for p in parents:
                    if p is not None and p not in fam.members:
                        raise DanglingParentError(
                            f"family {fam.family_id}: parent {p} of {ind.individual_id} "
                            "is not in the family"
                        )
                if ind.individual_id in parents:
                    raise PedigreeCycleError(
                        f"family {fam.family_id}: {ind.individual_id} is its own parent"
                    )
            fam.topological_order()

    def __iter__(self):
        return iter(self.families.values())

    def __len__(self):
        return len(self.families)

    def __getitem__(self, family_id: str) -> Family:
        return self.families[family_id]

    def individual(self, family_id: str, iid: str) -> Individual:
        return self.families[family_id].members[iid]

    def individuals(self) -> list[Individual]:
        return [ind for fam in self for ind in fam]

    @property
    def n_chromosomes(self) -> int:
        return sum(f.n_founder_chromosomes for f in self)

    def __eq__(self, other):
        if not isinstance(other, Pedigree):
            return NotImplemented
        return self.individuals() == other.individuals()


def _tok(x: str) -> str | None:
    return None if x in ("0", "NA", ".", "") else x


def _parse_ped_lines(lines: Iterable[str], source: str) -> Pedigree:
    records = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split()
        if cols[0] == "family_id":
            continue
        if len(cols) != 7:
            raise InputFormatError(f"{source}:{lineno}: expected 7 columns, got {len(cols)}")
        try:
            affection = int(cols[5])
            genotyped = int(cols[6])
            sex = int(cols[4])
        except ValueError as e:
            raise InputFormatError(f"{source}:{lineno}: {e}") from e
        if affection not in (AFFECTED, UNAFFECTED, UNKNOWN):
            raise InputFormatError(f"{source}:{lineno}: affection must be 1, 0 or -9")
        if genotyped not in (0, 1):
            raise InputFormatError(f"{source}:{lineno}: genotyped must be 0 or 1")
        records.append(
            Individual(
                family_id=cols[0],
                individual_id=cols[1],
                father_id=_tok(cols[2]),
                mother_id=_tok(cols[3]),
                sex=sex,
                affection=affection,
                genotyped=bool(genotyped),
            )
        )
    return Pedigree(records)


def load_pedigree(source) -> Pedigree:
    """Read a pedigree TSV (path or open text handle)."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return _parse_ped_lines(fh, str(source))
    return _parse_ped_lines(source, getattr(source, "name", "<stream>"))


def format_pedigree(ped: Pedigree) -> str:
    out = io.StringIO()
    out.write("\t".join(PED_COLUMNS) + "\n")
    for ind in ped.individuals():
        out.write(
            "\t".join(
                [
                    ind.family_id,
                    ind.individual_id,
                    ind.father_id or "0",
                    ind.mother_id or "0",
                    str(ind.sex),
                    str(ind.affection),
                    "1" if ind.genotyped else "0",
                ]
            )
            + "\n"
        )
    return out.getvalue()


def family_kinship(fam: Family, order: Sequence[str] | None = None) -> np.ndarray:
    """Kinship coefficients among members of one family.

    Uses the usual recursion over a topological order: an individual's
    kinship with anyone earlier is the mean of its parents' kinships with
    that person, and self-kinship is ``(1 + kinship(father, mother)) / 2``.
    """
    topo = fam.topological_order()
    pos = {iid: k for k, iid in enumerate(topo)}
    n = len(topo)
    K = np.zeros((n, n))
    for k, iid in enumerate(topo):
        ind = fam.members[iid]
        if ind.is_founder:
            K[k, k] = 0.5
            continue
        f, m = pos[ind.father_id], pos[ind.mother_id]
        for j in range(k):
            K[k, j] = K[j, k] = 0.5 * (K[f, j] + K[m, j])
        K[k, k] = 0.5 * (1.0 + K[f, m])
    if order is None:
        return K
    idx = [pos[i] for i in order]
    return K[np.ix_(idx, idx)]


@dataclass
class KinshipMatrix:
    """Kinship coefficients over ``ids`` = [(family_id, individual_id), ...].

    Individuals are ordered genotyped first, then phenotype-only; ``n_genotyped``
    marks the split. ``blocks`` keeps the per-family sub-matrices (the full
    matrix is block diagonal across families).
    """

    ids: list[tuple[str, str]]
    n_genotyped: int
    blocks: dict[str, tuple[list[str], np.ndarray]]

    @property
    def matrix(self) -> np.ndarray:
        index = {key: k for k, key in enumerate(self.ids)}
        n = len(self.ids)
        K = np.zeros((n, n))
        for fid, (members, block) in self.blocks.items():
            idx = [index[(fid, m)] for m in members]
            K[np.ix_(idx, idx)] = block
        return K

    def value(self, a: tuple[str, str], b: tuple[str, str]) -> float:
        if a[0] != b[0]:
            return 0.0
        members, block = self.blocks[a[0]]
        return float(block[members.index(a[1]), members.index(b[1])])


def kinship_matrix(ped: Pedigree, include_ungenotyped: bool = True) -> KinshipMatrix:
    genotyped: list[tuple[str, str]] = []
    other: list[tuple[str, str]] = []
    blocks = {}
    for fam in ped:
        members = [i.individual_id for i in fam if i.genotyped]
        extra = [i.individual_id for i in fam if not i.genotyped] if include_ungenotyped else []
        genotyped += [(fam.family_id, m) for m in members]
        other += [(fam.family_id, m) for m in extra]
        blocks[fam.family_id] = (members + extra, family_kinship(fam, members + extra))
    return KinshipMatrix(genotyped + other, len(genotyped), blocks)


def _max_independent_set(nodes: list[str], adjacent: Mapping[str, set]) -> list[str]:
    """Largest set of pairwise non-adjacent nodes; ties go to the
    lexicographically smallest sorted id list."""
    nodes = sorted(nodes)
    best: list[str] = []

    def search(k: int, chosen: list[str]):
        nonlocal best
        if len(chosen) + (len(nodes) - k) <= len(best):
            return
        if k == len(nodes):
            best = list(chosen)
            return
        v = nodes[k]
        if all(v not in adjacent.get(c, ()) for c in chosen):
            chosen.append(v)
            search(k + 1, chosen)
            chosen.pop()
        search(k + 1, chosen)

    search(0, [])
    return best


def founders(ped: Pedigree, family_id: str, ibd: Mapping | None = None) -> list[str]:
    """Maximal set of genotyped members that are pairwise unrelated.

    Relatedness is kinship > 0 from the pedigree, or, when ``ibd`` (a map
    ``(id1, id2) -> count``) is given, a positive observed IBD count.
    """
    fam = ped[family_id]
    members = fam.genotyped_ids
    if not members:
        raise PedigreeError(f"family {family_id} has no genotyped members")
    adjacent: dict[str, set] = {m: set() for m in members}
    if ibd is None:
        K = family_kinship(fam, members)
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                if K[a, b] > 0:
                    adjacent[members[a]].add(members[b])
                    adjacent[members[b]].add(members[a])
    else:
        for (a, b), c in ibd.items():
            if c > 0 and a in adjacent and b in adjacent:
                adjacent[a].add(b)
                adjacent[b].add(a)
    return _max_independent_set(members, adjacent)


__all__ = [
    "AFFECTED",
    "UNAFFECTED",
    "UNKNOWN",
    "Individual",
    "Family",
    "Pedigree",
    "KinshipMatrix",
    "load_pedigree",
    "format_pedigree",
    "family_kinship",
    "kinship_matrix",
    "founders",
]
