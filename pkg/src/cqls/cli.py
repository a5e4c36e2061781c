"""Command-line front end.

Subcommands: ``test``, ``assign``, ``simulate``, ``power`` and
``permute-test``. Exit status is 0 on success, 2 for usage errors, 3 for
malformed input, 4 for numeric or model failures and 5 for I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import defaultdict

import numpy as np

from . import __version__, core, ibd, io, mqls, permute, simulate
from .core import STATUS_NAMES, NullModel
from .errors import CqlsError, DegenerateDesignError, InputFormatError, MonomorphicError
from .numerics import RandomStream
from .pedigree import Pedigree, load_pedigree

log = logging.getLogger("cqls")

TEST_METHODS = ("cqls", "cqls_hwefree", "mqls")
DEFAULT_REGION = "region1"


# ---------------------------------------------------------------------------
# argument parsing


def _probability(name):
    def parse(text):
        try:
            x = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not 0.0 < x < 1.0:
            raise argparse.ArgumentTypeError(f"{name} must lie strictly between 0 and 1, got {x}")
        return x

    return parse


def _rate(text):
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"IBD error rate must lie in [0, 1], got {x}")
    return x


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _add_inputs(p, labels_ok=True):
    p.add_argument("--ped", required=True, help="pedigree TSV")
    p.add_argument("--geno", required=True, help="genotype TSV (SNP-major)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ibd", help="pairwise IBD TSV")
    if labels_ok:
        src.add_argument("--labels", help="labeling TSV (instead of --ibd)")
    p.add_argument("--snp-map", help="snp_id -> region_id TSV; optional when there is a single region")
    p.add_argument("--out", required=True, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqls", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cqls {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="association tests for every SNP")
    _add_inputs(p)
    p.add_argument("--pi0", type=_probability("--pi0"), default=0.05, help="disease prevalence (default 0.05)")
    p.add_argument("--method", action="append", choices=TEST_METHODS + ("all",), help="repeatable; default cqls")
    p.add_argument("--exclude-ambiguous", action="store_true", help="drop families whose alleles are not identifiable")

    p = sub.add_parser("assign", help="founder-chromosome labels from IBD")
    _add_inputs(p, labels_ok=False)

    p = sub.add_parser("simulate", help="simulate one study")
    _add_design(p)
    p.add_argument("--sampler", choices=("exact", "rejection"), default="exact")
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("power", help="Monte Carlo power")
    _add_design(p, multiple=True)
    p.add_argument("--alpha", type=_probability("--alpha"), default=0.01)
    p.add_argument("--reps", type=_positive_int, default=2000)
    p.add_argument("--methods", nargs="+", choices=simulate.METHODS, default=["cqls", "mqls"])
    p.add_argument("--ibd-error-rate", type=_rate, default=0.0)
    p.add_argument("--threads", type=_positive_int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("permute-test", help="permutation p-values for cQLS")
    _add_inputs(p)
    p.add_argument("--pi0", type=_probability("--pi0"), default=0.05)
    p.add_argument("--permutations", type=_positive_int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int)
    return parser


def _add_design(p, multiple=False):
    if multiple:
        p.add_argument("--design", type=int, nargs="+", required=True, choices=range(1, 8), metavar="{1..7}")
    else:
        p.add_argument("--design", type=int, required=True, choices=range(1, 8), metavar="{1..7}")
    size = p.add_mutually_exclusive_group()
    size.add_argument("--scale", type=float, default=simulate.DESK_SCALE, help="fraction of the full design counts")
    size.add_argument("--subjects", type=_positive_int, help="total genotyped subjects")
    p.add_argument("--lambda-s", type=float, default=1.5)
    p.add_argument("--or", dest="odds_ratio", type=float, default=1.0)
    p.add_argument("--maf", type=_probability("--maf"), default=simulate.DEFAULT_MAF)
    p.add_argument("--prevalence", type=_probability("--prevalence"), default=simulate.DEFAULT_PREVALENCE)
    p.add_argument("--seed", type=int, default=0)


def parse_plan(argv=None) -> argparse.Namespace:
    """Validated arguments; usage errors exit with status 2."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "scale", None) is not None and args.scale <= 0:
        parser.error("--scale must be positive")
    if args.command == "test" and not args.method:
        args.method = ["cqls"]
    if args.command == "test" and "all" in args.method:
        args.method = list(TEST_METHODS)
    return args


# ---------------------------------------------------------------------------
# shared input handling


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("CQLS_THREADS")
    return max(1, int(env)) if env else 1


def _params(args) -> dict:
    skip = {"threads", "verbose", "command", "out", "out_prefix"}
    return {k: v for k, v in vars(args).items() if k not in skip} | {"command": args.command}


class Inputs:
    """Pedigree, genotypes and per-region labelings for ``test`` runs."""

    def __init__(self, args):
        self.ped: Pedigree = load_pedigree(args.ped)
        self.snps, self.geno = io.read_genotypes(args.geno, self.ped)
        self.ibds = io.read_ibd(args.ibd) if getattr(args, "ibd", None) else None
        given = io.read_labeling(args.labels) if getattr(args, "labels", None) else None
        regions = set(given) if given is not None else {r.region_id for r in self.ibds}
        if args.snp_map:
            self.region_of = io.read_snp_map(args.snp_map)
            missing = [s for s in self.snps if s not in self.region_of]
            if missing:
                raise InputFormatError(f"SNP {missing[0]} has no region in {args.snp_map}")
        else:
            if len(regions) > 1:
                raise InputFormatError("several regions present; pass --snp-map")
            only = next(iter(regions)) if regions else DEFAULT_REGION
            self.region_of = {s: only for s in self.snps}
        self.labeling = given if given is not None else self._assign()
        for reg in set(self.region_of.values()):
            self.labeling.setdefault(reg, _singletons(self.ped, reg))

    def _assign(self):
        by_region: dict[str, list[str]] = defaultdict(list)
        for s in self.snps:
            by_region[self.region_of[s]].append(s)
        recs = {(r.family_id, r.region_id): r for r in self.ibds}
        for reg in by_region:
            for fid in sorted(self.ped.families):
                if (fid, reg) not in recs and self.ped.families[fid].genotyped_ids:
                    recs[(fid, reg)] = ibd.PairwiseIbd(fid, reg, {})
        genos = {}
        for reg, snps in by_region.items():
            genos[reg] = {
                key: np.array([np.nan if self.geno[s].get(key) is None else float(self.geno[s][key]) for s in snps])
                for key in self.geno[snps[0]]
            }
        out = ibd.assign_all(self.ped, [r for r in recs.values() if r.region_id in by_region], genos)
        for lab in out.values():
            ibd.add_descent_probabilities(self.ped, lab)
        return out


def _singletons(ped: Pedigree, reg: str):
    from .labeling import ChromosomeLabeling, FamilyLabeling

    cl = ChromosomeLabeling(reg)
    for fid, fam in sorted(ped.families.items()):
        typed = fam.genotyped_ids
        if len(typed) == 1:
            cl.families[fid] = FamilyLabeling(fid, hard={typed[0]: (1, 2)})
    return cl


def _row(snp, method, stat, p, phi, n_chrom, n_excl, status):
    return [snp, method, stat, p, phi, n_chrom, n_excl, status]


# ---------------------------------------------------------------------------
# subcommands


def cmd_test(args) -> str:
    inp = Inputs(args)
    null = NullModel(args.pi0)
    z_cache = {}
    rows = []
    for snp in inp.snps:
        reg = inp.region_of[snp]
        lab = inp.labeling[reg]
        if reg not in z_cache:
            z_cache[reg] = core.compute_z(lab, inp.ped, null)
        g = inp.geno[snp]
        sv = None
        for method in args.method:
            if method == "mqls":
                rows.append(_mqls_row(snp, inp.ped, g, args.pi0))
                continue
            if sv is None:
                sv = core.build_scores(inp.ped, lab, g, null, z=z_cache[reg])
            mode = "hwe_free" if method == "cqls_hwefree" else "hwe"
            r = core.cqls_batch(sv, mode, exclude_ambiguous=args.exclude_ambiguous).result(0)
            rows.append(_row(snp, r.method, r.statistic, r.p_value, r.phi_hat, r.n_chromosomes,
                             r.n_excluded_families, r.status))
    return io.header(_params(args)) + io.format_table(io.RESULT_COLUMNS, rows)


def _mqls_row(snp, ped, g, pi0):
    n_g = sum(v is not None for v in g.values())
    try:
        r = mqls.mqls_pedigree(ped, g, pi0)
    except MonomorphicError:
        return _row(snp, "mqls", None, None, None, 2 * n_g, 0, STATUS_NAMES[core.STATUS_MONOMORPHIC])
    except DegenerateDesignError:
        return _row(snp, "mqls", None, None, None, 2 * n_g, 0, STATUS_NAMES[core.STATUS_DEGENERATE])
    return _row(snp, "mqls", r.statistic, r.p_value, r.phi_hat, r.n_chromosomes, 0, STATUS_NAMES[core.STATUS_OK])


def cmd_permute(args) -> str:
    inp = Inputs(args)
    null = NullModel(args.pi0)
    threads = _threads(args)
    rows = []
    for k, snp in enumerate(inp.snps):
        lab = inp.labeling[inp.region_of[snp]]
        sv = core.build_scores(inp.ped, lab, inp.geno[snp], null)
        plan = permute.PermutationPlan(args.permutations, RandomStream(args.seed, k))
        try:
            r = permute.permutation_pvalue(sv, plan, threads=threads)
        except MonomorphicError:
            rows.append(_row(snp, "cqls_permutation", None, None, None, 0, 0, STATUS_NAMES[core.STATUS_MONOMORPHIC]))
            continue
        except DegenerateDesignError:
            rows.append(_row(snp, "cqls_permutation", None, None, None, 0, 0, STATUS_NAMES[core.STATUS_DEGENERATE]))
            continue
        rows.append(_row(snp, "cqls_permutation", r.statistic, r.p_value, r.phi_hat, r.n_chromosomes,
                         r.n_excluded, STATUS_NAMES[core.STATUS_OK]))
    return io.header(_params(args)) + io.format_table(io.RESULT_COLUMNS, rows)


def cmd_assign(args) -> str:
    inp = Inputs(args)
    return io.header(_params(args)) + io.format_labeling(inp.labeling)


def _design(args, design_id):
    d = simulate.DESIGNS[design_id]
    return d.with_subjects(args.subjects) if args.subjects else d.scaled(args.scale)


def _model(args):
    return simulate.LiabilityModel.calibrated(args.odds_ratio, args.lambda_s, args.maf, args.prevalence)


def cmd_power(args) -> str:
    model = _model(args)
    rows = []
    for d in args.design:
        tab = simulate.run_power(
            _design(args, d), model, methods=args.methods, alpha=args.alpha, replicates=args.reps,
            rng=RandomStream(args.seed), ibd_error_rate=args.ibd_error_rate, threads=_threads(args),
        )
        for r in tab.rows:
            rows.append([d, r.method, args.odds_ratio, args.lambda_s, r.alpha, r.replicates, r.power, r.se])
    params = _params(args) | {"beta_G": model.beta_G, "beta_F": model.beta_F}
    return io.header(params) + io.format_table(io.POWER_COLUMNS, rows)


def cmd_simulate(args) -> dict[str, str]:
    from .pedigree import format_pedigree

    model = _model(args)
    ds = simulate.ascertain_study(_design(args, args.design), model, RandomStream(args.seed), method=args.sampler)
    params = _params(args) | {"beta_G": model.beta_G, "beta_F": model.beta_F}
    head = io.header(params)
    cols = sorted(ds.genotypes)
    recs = []
    for fl in ds.truth:
        ids = sorted(fl.hard)
        if len(ids) < 2:
            continue
        counts = {(a, b): len(set(fl.hard[a]) & set(fl.hard[b])) for i, a in enumerate(ids) for b in ids[i + 1:]}
        recs.append(ibd.PairwiseIbd(fl.family_id, ds.truth.region_id, counts))
    return {
        "ped.tsv": head + format_pedigree(ds.pedigree),
        "geno.tsv": head + io.format_genotypes([ds.snp_id], {ds.snp_id: ds.genotypes}, cols),
        "ibd.tsv": head + io.format_ibd(recs),
        "map.tsv": head + f"snp_id\tregion_id\n{ds.snp_id}\t{ds.truth.region_id}\n",
        "labels.tsv": head + io.format_labeling({ds.truth.region_id: ds.truth}),
    }


def execute(args) -> int:
    if args.command == "simulate":
        files = cmd_simulate(args)
        for suffix, text in files.items():
            io.atomic_write(f"{args.out_prefix}.{suffix}", text)
        return 0
    handler = {"test": cmd_test, "assign": cmd_assign, "power": cmd_power, "permute-test": cmd_permute}[args.command]
    text = handler(args)
    io.atomic_write(args.out, text)
    return 0


def main(argv=None) -> int:
    args = parse_plan(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="cqls: %(message)s")
    try:
        return execute(args)
    except CqlsError as exc:
        print(f"cqls: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"cqls: I/O error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
