import numpy as np
import pytest

from cqls import io
from cqls.cli import main
from cqls.errors import InputFormatError
from cqls.ibd import PairwiseIbd
from cqls.labeling import ChromosomeLabeling, FamilyLabeling
from cqls.pedigree import AFFECTED, Individual, Pedigree


def _table(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    head = lines[0].split("\t")
    return [dict(zip(head, l.split("\t"))) for l in lines[1:]]


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    prefix = d / "s"
    rc = main(["simulate", "--design", "5", "--subjects", "400", "--or", "1.5", "--lambda-s", "2", "--seed", "3", "--out-prefix", str(prefix)])
    assert rc == 0
    return prefix


def test_genotype_round_trip(tmp_path):
    ped = Pedigree([Individual("A", "x", None, None, AFFECTED, True), Individual("B", "y", None, None, AFFECTED, True)])
    g = {"r1": {("A", "x"): 1, ("B", "y"): None}, "r2": {("A", "x"): 2, ("B", "y"): 0}}
    p = tmp_path / "g.tsv"
    p.write_text("# note\n" + io.format_genotypes(["r1", "r2"], g, [("A", "x"), ("B", "y")]))
    snps, back = io.read_genotypes(p, ped)
    assert snps == ["r1", "r2"] and back == g
    p.write_text("snp_id\tA:x\nr1\t3\n")
    with pytest.raises(InputFormatError):
        io.read_genotypes(p, ped)
    p.write_text("snp_id\tA:q\nr1\t1\n")
    with pytest.raises(InputFormatError):
        io.read_genotypes(p, ped)


def test_ibd_and_labeling_round_trip(tmp_path):
    recs = [PairwiseIbd("A", "r", {("s1", "s2"): 1, ("s1", "s3"): 0, ("s2", "s3"): 2})]
    p = tmp_path / "ibd.tsv"
    p.write_text(io.format_ibd(recs))
    assert io.read_ibd(p) == recs
    lab = {"r": ChromosomeLabeling("r", {"A": FamilyLabeling("A", hard={"s1": (1, 2), "s2": (2, 3)}, soft={"s3": {1: 0.5, 3: 0.25}})})}
    q = tmp_path / "lab.tsv"
    q.write_text(io.format_labeling(lab))
    back = io.read_labeling(q)
    assert back["r"]["A"].hard == lab["r"]["A"].hard and back["r"]["A"].soft == lab["r"]["A"].soft
    q.write_text("family_id\tindividual_id\tcopy_index\tregion_id\tlabel\nA\ts1\t1\tr\t1\n")
    with pytest.raises(InputFormatError):
        io.read_labeling(q)


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.tsv"
    io.atomic_write(target, "a\n")
    with pytest.raises(TypeError):
        io.atomic_write(target, None)
    assert target.read_text() == "a\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.tsv"]


def test_format_float():
    assert io.format_float(float("nan")) == "NA"
    assert io.format_float(0.1) == "0.1"
    assert float(io.format_float(np.float64(1 / 3))) == 1 / 3


def _inputs(prefix):
    return ["--ped", f"{prefix}.ped.tsv", "--geno", f"{prefix}.geno.tsv", "--snp-map", f"{prefix}.map.tsv"]


def test_test_command_ibd_and_labels_agree(sim, tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert main(["test", *_inputs(sim), "--ibd", f"{sim}.ibd.tsv", "--method", "all", "--out", str(a)]) == 0
    assert main(["test", *_inputs(sim), "--labels", f"{sim}.labels.tsv", "--method", "all", "--out", str(b)]) == 0
    ra, rb = _table(a), _table(b)
    assert {r["method"] for r in ra} >= {"cqls_ambig", "cqls_hwefree", "mqls"}
    cq_a = [r for r in ra if r["method"].startswith("cqls_") and r["method"] != "cqls_hwefree"][0]
    cq_b = [r for r in rb if r["method"].startswith("cqls_") and r["method"] != "cqls_hwefree"][0]
    assert float(cq_a["statistic"]) == pytest.approx(float(cq_b["statistic"]), rel=1e-10)
    assert a.read_text().startswith("# cqls ")


def test_monomorphic_snp_row(sim, tmp_path):
    geno = tmp_path / "mono.tsv"
    lines = [l for l in open(f"{sim}.geno.tsv") if not l.startswith("#")]
    head = lines[0].rstrip("\n").split("\t")
    geno.write_text(lines[0] + "\t".join(["snp1"] + ["0"] * (len(head) - 1)) + "\n")
    out = tmp_path / "o.tsv"
    assert main(["test", "--ped", f"{sim}.ped.tsv", "--geno", str(geno), "--labels", f"{sim}.labels.tsv", "--out", str(out)]) == 0
    row = _table(out)[0]
    assert row["status"] == "skipped_monomorphic" and row["p_value"] == "NA"


def test_permute_and_power_identical_across_threads(sim, tmp_path):
    outs = []
    for t in ("1", "3"):
        o = tmp_path / f"perm{t}.tsv"
        assert main(["permute-test", *_inputs(sim), "--ibd", f"{sim}.ibd.tsv", "--permutations", "600", "--seed", "2", "--threads", t, "--out", str(o)]) == 0
        outs.append(o.read_bytes())
        o = tmp_path / f"pow{t}.tsv"
        assert main(["power", "--design", "1", "6", "--subjects", "300", "--reps", "40", "--or", "1.3", "--threads", t, "--out", str(o)]) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[2] and outs[1] == outs[3]
    rows = _table(tmp_path / "pow1.tsv")
    assert {r["design_id"] for r in rows} == {"1", "6"}


def test_assign_writes_labels(sim, tmp_path):
    out = tmp_path / "lab.tsv"
    assert main(["assign", *_inputs(sim), "--ibd", f"{sim}.ibd.tsv", "--out", str(out)]) == 0
    assert io.read_labeling(out)


def test_exit_codes(sim, tmp_path, capsys):
    out = tmp_path / "x.tsv"
    assert main(["test", "--ped", str(tmp_path / "missing.tsv"), "--geno", f"{sim}.geno.tsv", "--ibd", f"{sim}.ibd.tsv", "--out", str(out)]) == 5
    assert not out.exists()
    with pytest.raises(SystemExit) as exc:
        main(["test", *_inputs(sim), "--ibd", f"{sim}.ibd.tsv", "--pi0", "1.5", "--out", str(out)])
    assert exc.value.code == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("snp_id\tnobody:here\nsnp1\t1\n")
    code = main(["test", "--ped", f"{sim}.ped.tsv", "--geno", str(bad), "--ibd", f"{sim}.ibd.tsv", "--out", str(out)])
    assert code == InputFormatError.exit_code
    assert not out.exists()
