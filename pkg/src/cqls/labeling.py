"""Founder-chromosome labelings: which founder chromosome each allele copy
of each family member descends from."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class FamilyLabeling:
    """Labels for one family within one region.

    ``hard`` maps a genotyped member to its two founder-chromosome labels
    (1-based). ``soft`` maps a phenotype-only member to the expected number
    of copies it carries of each label (values sum to at most 2; mass on
    chromosomes never seen in a genotyped member is dropped). ``origin``
    optionally maps a label to the pedigree founder it descends from.
    ``duplicates`` maps members dropped as identical-by-descent copies of
    another member to that representative.
    """

    family_id: str
    hard: dict[str, tuple[int, int]] = field(default_factory=dict)
    soft: dict[str, dict[int, float]] = field(default_factory=dict)
    origin: dict[int, str] | None = None
    duplicates: dict[str, str] = field(default_factory=dict)
    low_confidence: bool = False
    cases: dict[str, str] = field(default_factory=dict)

    @property
    def labels(self) -> list[int]:
        seen = {x for pair in self.hard.values() for x in pair}
        return sorted(seen)

    def carriers(self, label: int) -> list[str]:
        return sorted(i for i, pair in self.hard.items() for x in pair if x == label)

    def partition(self) -> frozenset:
        """Descent partition: the multiset of carrier sets, label names erased."""
        groups: dict[int, list[str]] = {}
        for iid, pair in self.hard.items():
            for x in pair:
                groups.setdefault(x, []).append(iid)
        return frozenset((tuple(sorted(v)), sum(1 for w in groups.values() if sorted(w) == sorted(v))) for v in groups.values())

    def relabel(self, mapping: dict[int, int]) -> "FamilyLabeling":
        return FamilyLabeling(
            family_id=self.family_id,
            hard={i: (mapping[a], mapping[b]) for i, (a, b) in self.hard.items()},
            soft={i: {mapping[k]: v for k, v in d.items() if k in mapping} for i, d in self.soft.items()},
            origin=None if self.origin is None else {mapping[k]: v for k, v in self.origin.items() if k in mapping},
            duplicates=dict(self.duplicates),
            low_confidence=self.low_confidence,
            cases=dict(self.cases),
        )

    def check(self):
        for iid, (a, b) in self.hard.items():
            if a == b:
                raise ValueError(f"{iid} carries label {a} twice")


@dataclass
class ChromosomeLabeling:
    region_id: str
    families: dict[str, FamilyLabeling] = field(default_factory=dict)

    def __getitem__(self, family_id: str) -> FamilyLabeling:
        return self.families[family_id]

    def __iter__(self):
        return iter(self.families.values())
