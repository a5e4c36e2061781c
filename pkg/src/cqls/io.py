"""Tab-separated file formats and atomic output.

Every file may start with ``#`` comment lines. Missing values are ``NA``.

genotypes   ``snp_id`` then one column per genotyped individual, named
            ``family_id:individual_id``; values 0, 1, 2 or NA.
IBD         ``family_id id1 id2 region_id ibd_count``.
SNP map     ``snp_id region_id``.
labeling    ``family_id individual_id copy_index region_id label [probability]``;
            copy_index 1 and 2 give the labels of a genotyped member, copy_index
            0 rows give expected copies (``probability``) for a phenotype-only
            member.
"""

from __future__ import annotations

import math
import os
import tempfile
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .errors import InputFormatError
from .ibd import PairwiseIbd
from .labeling import ChromosomeLabeling, FamilyLabeling
from .pedigree import Pedigree

NA = "NA"


def _rows(path, min_cols: int):
    """Yield ``(line_number, fields)`` of the data lines after the header."""
    with open(path, encoding="utf-8") as fh:
        header = None
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if header is None:
                header = fields
                if len(header) < min_cols:
                    raise InputFormatError(f"{path}:{n}: expected at least {min_cols} columns in header")
                yield 0, header
                continue
            if len(fields) != len(header):
                raise InputFormatError(f"{path}:{n}: {len(fields)} fields, header has {len(header)}")
            yield n, fields
        if header is None:
            raise InputFormatError(f"{path}: no header line")


def _int(value: str, path, n, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise InputFormatError(f"{path}:{n}: {what} {value!r} is not an integer") from None


# ---------------------------------------------------------------------------
# genotypes


def genotype_column(family_id: str, individual_id: str) -> str:
    return f"{family_id}:{individual_id}"


def read_genotypes(path, ped: Pedigree) -> tuple[list[str], dict[str, dict[tuple[str, str], int | None]]]:
    """SNP ids in file order and ``{snp: {(fid, iid): genotype or None}}``."""
    rows = _rows(path, 1)
    _, header = next(rows)
    if header[0] != "snp_id":
        raise InputFormatError(f"{path}: first column must be snp_id")
    keys = []
    for col in header[1:]:
        fid, sep, iid = col.partition(":")
        if not sep:
            raise InputFormatError(f"{path}: column {col!r} is not family_id:individual_id")
        if fid not in ped.families or iid not in ped.families[fid].members:
            raise InputFormatError(f"{path}: column {col!r} names an individual missing from the pedigree")
        keys.append((fid, iid))
    if len(set(keys)) != len(keys):
        raise InputFormatError(f"{path}: duplicate individual columns")
    snps: list[str] = []
    out: dict[str, dict[tuple[str, str], int | None]] = {}
    for n, fields in rows:
        snp = fields[0]
        if snp in out:
            raise InputFormatError(f"{path}:{n}: duplicate SNP {snp}")
        vals = {}
        for key, v in zip(keys, fields[1:]):
            if v == NA:
                vals[key] = None
            elif v in ("0", "1", "2"):
                vals[key] = int(v)
            else:
                raise InputFormatError(f"{path}:{n}: genotype {v!r} for {key[0]}:{key[1]} not in 0, 1, 2, NA")
        snps.append(snp)
        out[snp] = vals
    return snps, out


def format_genotypes(snps: Sequence[str], genotypes: Mapping[str, Mapping[tuple[str, str], int | None]], columns: Sequence[tuple[str, str]]) -> str:
    lines = ["\t".join(["snp_id"] + [genotype_column(f, i) for f, i in columns])]
    for s in snps:
        g = genotypes[s]
        lines.append("\t".join([s] + [NA if g.get(k) is None else str(int(g[k])) for k in columns]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# IBD and SNP map


def read_ibd(path) -> list[PairwiseIbd]:
    rows = _rows(path, 5)
    _, header = next(rows)
    want = ["family_id", "id1", "id2", "region_id", "ibd_count"]
    if header[:5] != want:
        raise InputFormatError(f"{path}: header must start with {' '.join(want)}")
    counts: dict[tuple[str, str], dict] = defaultdict(dict)
    for n, f in rows:
        c = _int(f[4], path, n, "ibd_count")
        key = (f[1], f[2]) if f[1] < f[2] else (f[2], f[1])
        rec = counts[(f[0], f[3])]
        if key in rec and rec[key] != c:
            raise InputFormatError(f"{path}:{n}: conflicting IBD counts for {f[0]} {key}")
        rec[key] = c
    return [PairwiseIbd(fid, reg, c) for (fid, reg), c in sorted(counts.items())]


def format_ibd(records: Iterable[PairwiseIbd]) -> str:
    lines = ["family_id\tid1\tid2\tregion_id\tibd_count"]
    for r in sorted(records, key=lambda x: (x.family_id, x.region_id)):
        for (a, b), c in sorted(r.counts.items()):
            lines.append(f"{r.family_id}\t{a}\t{b}\t{r.region_id}\t{c}")
    return "\n".join(lines) + "\n"


def read_snp_map(path) -> dict[str, str]:
    rows = _rows(path, 2)
    _, header = next(rows)
    if header[:2] != ["snp_id", "region_id"]:
        raise InputFormatError(f"{path}: header must be snp_id region_id")
    out = {}
    for n, f in rows:
        if f[0] in out:
            raise InputFormatError(f"{path}:{n}: SNP {f[0]} mapped twice")
        out[f[0]] = f[1]
    return out


# ---------------------------------------------------------------------------
# labeling


def read_labeling(path) -> dict[str, ChromosomeLabeling]:
    rows = _rows(path, 5)
    _, header = next(rows)
    want = ["family_id", "individual_id", "copy_index", "region_id", "label"]
    if header[:5] != want:
        raise InputFormatError(f"{path}: header must start with {' '.join(want)}")
    has_p = len(header) > 5
    hard: dict = defaultdict(lambda: defaultdict(dict))
    soft: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(dict)))
    for n, f in rows:
        fid, iid, copy, reg = f[0], f[1], _int(f[2], path, n, "copy_index"), f[3]
        lab = _int(f[4], path, n, "label")
        if lab < 1:
            raise InputFormatError(f"{path}:{n}: labels start at 1")
        if copy in (1, 2):
            hard[reg][fid].setdefault(iid, {})[copy] = lab
        elif copy == 0:
            if not has_p or f[5] == NA:
                raise InputFormatError(f"{path}:{n}: expected-copy rows need a probability")
            try:
                p = float(f[5])
            except ValueError:
                raise InputFormatError(f"{path}:{n}: probability {f[5]!r} is not a number") from None
            if not 0.0 <= p <= 2.0:
                raise InputFormatError(f"{path}:{n}: expected copies {p} outside [0, 2]")
            soft[reg][fid][iid][lab] = p
        else:
            raise InputFormatError(f"{path}:{n}: copy_index must be 0, 1 or 2")
    out: dict[str, ChromosomeLabeling] = {}
    for reg in sorted(set(hard) | set(soft)):
        cl = ChromosomeLabeling(reg)
        for fid in sorted(set(hard[reg]) | set(soft[reg])):
            h = {}
            for iid, copies in hard[reg][fid].items():
                if set(copies) != {1, 2}:
                    raise InputFormatError(f"{path}: {fid}/{iid} in {reg} needs both copy 1 and copy 2")
                h[iid] = (copies[1], copies[2])
            s = {iid: dict(v) for iid, v in soft[reg][fid].items()}
            fl = FamilyLabeling(fid, hard=h, soft=s)
            try:
                fl.check()
            except ValueError as exc:
                raise InputFormatError(f"{path}: {fid} in {reg}: {exc}") from None
            cl.families[fid] = fl
        out[reg] = cl
    return out


def format_labeling(labelings: Mapping[str, ChromosomeLabeling]) -> str:
    lines = ["family_id\tindividual_id\tcopy_index\tregion_id\tlabel\tprobability"]
    for reg in sorted(labelings):
        for fid in sorted(labelings[reg].families):
            fl = labelings[reg].families[fid]
            for iid in sorted(fl.hard):
                a, b = fl.hard[iid]
                lines.append(f"{fid}\t{iid}\t1\t{reg}\t{a}\t{NA}")
                lines.append(f"{fid}\t{iid}\t2\t{reg}\t{b}\t{NA}")
            for iid in sorted(fl.soft):
                for lab, p in sorted(fl.soft[iid].items()):
                    lines.append(f"{fid}\t{iid}\t0\t{reg}\t{lab}\t{format_float(p)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# results


RESULT_COLUMNS = ["snp_id", "method", "statistic", "p_value", "phi_hat", "n_chromosomes", "n_excluded", "status"]
POWER_COLUMNS = ["design_id", "method", "or", "lambda_s", "alpha", "replicates", "power", "se"]


def format_float(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return NA
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def header(params: Mapping[str, object]) -> str:
    """``#`` lines recording the package version and every parameter."""
    lines = [f"# cqls {__version__}"]
    for k in sorted(params):
        lines.append(f"# {k}={params[k]}")
    return "\n".join(lines) + "\n"


def format_table(columns: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    lines = ["\t".join(columns)]
    for r in rows:
        lines.append("\t".join(format_float(v) for v in r))
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    d = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
