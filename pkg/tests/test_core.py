import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cqls import NullModel, ScoreVector, build_scores, cqls, cqls_batch
from cqls.core import (
    OracleFamily,
    allelic_score_statistic,
    compute_z,
    estimate_phi,
    score_oracle,
    sibpair_phi,
    sibpair_variance_terms,
)
from cqls.errors import CoverageError, DegenerateDesignError, MonomorphicError
from cqls.labeling import ChromosomeLabeling, FamilyLabeling
from cqls.pedigree import AFFECTED, UNAFFECTED, UNKNOWN, Individual, Pedigree
from cqls.structures import Structure

import oracles

SIB = [(0, 1), (1, 2)]


def vector(fams):
    return ScoreVector.from_families([(lab, g, z) for lab, _, g, z in fams])


def test_hand_example():
    # one heterozygous case and one homozygous control at pi0 = 0.5
    res = cqls(ScoreVector.from_families([([(0, 1)], [1], [1, 1]), ([(0, 1)], [0], [-1, -1])]))
    assert res.phi_hat == 0.25
    assert res.score == pytest.approx(1.0)
    assert res.variance == pytest.approx(0.75)
    assert res.statistic == pytest.approx(4 / 3)
    assert res.method == "cqls_hwe"


def test_unrelated_equals_allelic_test():
    rng = np.random.default_rng(1)
    g = rng.binomial(2, 0.3, size=40)
    zi = np.where(np.arange(40) < 15, 1.0, -0.6)
    res = cqls(ScoreVector.from_families([([(0, 1)], [gi], [z, z]) for gi, z in zip(g, zi)]))
    y = np.concatenate([[1] * gi + [0] * (2 - gi) for gi in g])
    assert res.statistic == pytest.approx(allelic_score_statistic(np.repeat(zi, 2), y), rel=1e-12)


FAMILIES = [
    (SIB, 3, [1, 1], [2.0, 2.0, 0.0]),
    (SIB, 3, [1, 2], [1.0, 2.0, 1.0]),
    (SIB, 3, [1, 1], [1.0, 0.0, -1.0]),
    ([(0, 1), (2, 3), (0, 2)], 4, [1, 1, 1], [1.0, 0.5, 1.5, 0.0]),
    ([(0, 1)], 2, [0], [-1.0, -1.0]),
    ([(0, 1)], 2, [1], [-1.0, -1.0]),
    ([(0, 1)], 2, [2], [1.0, 1.0]),
    ([(0, 1), (1, 2), (0, 2)], 3, [1, 2, 1], [1.0, 1.0, 1.0]),
]


def test_phi_mle_with_ambiguous_families():
    ref = oracles.phi_mle(FAMILIES)
    assert estimate_phi(vector(FAMILIES)) == pytest.approx(ref, abs=1e-8)


def test_score_and_variance_match_enumeration():
    res = cqls(vector(FAMILIES))
    U, var = oracles.score_and_variance(FAMILIES, res.phi_hat)
    assert res.score == pytest.approx(U, rel=1e-10)
    assert res.variance == pytest.approx(var, rel=1e-10)
    assert res.method == "cqls_ambig"
    assert res.n_ambiguous == 3


def test_sibpair_closed_forms():
    fams = [(SIB, 3, [1, 1], [1.0, 2.0, 1.0])] * 3 + [(SIB, 3, [0, 1], [1.0, 2.0, 1.0]), ([(0, 1)], 2, [1], [0.0, 0.0])]
    # identified: 0 0 0 | 0 0 1 | 0 1 -> n1 = 2, n0 = 3 besides 3 ambiguous pairs
    assert estimate_phi(vector(fams)) == pytest.approx(sibpair_phi(3, 2, 3), abs=1e-10)
    z = np.array([0.3, 1.7, -0.4])
    for phi in (0.1, 0.35, 0.5):
        M = oracles.family_second_moment(SIB, 3, phi)
        zc = z - 0.2
        assert sibpair_variance_terms(z, 0.2, phi) == pytest.approx(zc @ M @ zc, rel=1e-12)
        assert sibpair_variance_terms(z, 0.2, phi, uncorrected=True) != pytest.approx(zc @ M @ zc, rel=1e-3)


def _ped_family(fid, sibs_aff, genotyped=True):
    I = Individual  # noqa: E741
    out = [I(fid, "fa", None, None, UNKNOWN, False), I(fid, "mo", None, None, UNKNOWN, False)]
    for k, a in enumerate(sibs_aff):
        out.append(I(fid, f"s{k + 1}", "fa", "mo", a, genotyped))
    return out


def test_score_oracle_agreement():
    # structures that can never be ambiguous: the finite-difference partial-likelihood score and
    # information equal the cQLS score and variance
    inds = _ped_family("A", [AFFECTED, AFFECTED]) + _ped_family("B", [AFFECTED, UNAFFECTED])
    inds += [Individual(f"C{k}", "p", None, None, UNAFFECTED, True) for k in range(3)]
    ped = Pedigree(inds)
    lab = ChromosomeLabeling("r", {
        "A": FamilyLabeling("A", hard={"s1": (1, 2), "s2": (1, 2)}),
        "B": FamilyLabeling("B", hard={"s1": (1, 2), "s2": (3, 4)}),
        **{f"C{k}": FamilyLabeling(f"C{k}", hard={"p": (1, 2)}) for k in range(3)},
    })
    geno = {("A", "s1"): 1, ("A", "s2"): 1, ("B", "s1"): 1, ("B", "s2"): 2, ("C0", "p"): 0, ("C1", "p"): 1, ("C2", "p"): 0}
    pi0 = 0.2
    res = cqls(build_scores(ped, lab, geno, NullModel(pi0)))

    P = np.full(2, pi0)
    fams = [
        # A: both sibs carry labels 1 and 2 -> y = 1, 0
        OracleFamily(np.array([[1, 1], [1, 1]]), np.array([AFFECTED, AFFECTED]), P, np.array([1, 0])),
        # B: y = 1, 0, 1, 1
        OracleFamily(np.array([[1, 1, 0, 0], [0, 0, 1, 1]]), np.array([AFFECTED, UNAFFECTED]), P, np.array([1, 0, 1, 1])),
    ]
    for g in (0, 1, 0):
        fams.append(OracleFamily(np.array([[1, 1]]), np.array([UNAFFECTED]), np.full(1, pi0), np.array([1, 0][: 1] * g + [0] * (2 - g))))
    U, var = score_oracle(fams)
    assert res.score == pytest.approx(U, rel=1e-6)
    assert res.variance == pytest.approx(var, rel=1e-6)


def test_compute_z_soft_weights_and_coverage():
    ped = Pedigree(_ped_family("A", [AFFECTED, AFFECTED, UNAFFECTED]))
    fl = FamilyLabeling("A", hard={"s1": (1, 3), "s2": (2, 3)}, soft={"s3": {1: 0.5, 2: 0.5, 3: 0.5}})
    z = compute_z(ChromosomeLabeling("r", {"A": fl}), ped, NullModel(0.25))["A"]
    w = -0.25 / 0.75
    assert z == pytest.approx({1: 1 + 0.5 * w, 2: 1 + 0.5 * w, 3: 2 + 0.5 * w})
    fl2 = FamilyLabeling("A", hard={"s1": (1, 3), "s2": (2, 3)})
    with pytest.raises(CoverageError):
        compute_z(ChromosomeLabeling("r", {"A": fl2}), ped, NullModel(0.25))


def test_null_model_validation():
    with pytest.raises(ValueError):
        NullModel(1.0)
    with pytest.raises(ValueError):
        NullModel(0.1, prevalence={("A", "x"): 0.0})


def test_monomorphic_and_degenerate():
    with pytest.raises(MonomorphicError):
        cqls(ScoreVector.from_families([([(0, 1)], [0], [1, 1]), (SIB, [0, 0], [1, 2, 1])]))
    with pytest.raises(DegenerateDesignError):
        cqls(ScoreVector.from_families([([(0, 1)], [g], [1, 1]) for g in (0, 1, 2, 1)]))
    res = cqls_batch(ScoreVector.from_families([([(0, 1)], [0], [1, 1])])).result(0)
    assert res.status == "skipped_monomorphic"


def test_inconsistent_family_is_excluded():
    sv = ScoreVector.from_families([([(0, 1), (0, 1)], [0, 2], [1, 1]), ([(0, 1)], [1], [1, 1]), ([(0, 1)], [0], [-1, -1])])
    res = cqls(sv)
    assert res.n_excluded_families == 1
    assert res.statistic == pytest.approx(4 / 3)


def _random_dataset(rng, n_fam, phi):
    fams = []
    for _ in range(n_fam):
        kind = rng.integers(3)
        if kind == 0:
            y = rng.random(2) < phi
            fams.append(([(0, 1)], [int(y.sum())], np.full(2, rng.choice([1.0, -0.5]))))
        elif kind == 1:
            y = (rng.random(3) < phi).astype(int)
            fams.append((SIB, [y[0] + y[1], y[1] + y[2]], np.array([1.0, 2.0, 1.0])))
        else:
            y = (rng.random(4) < phi).astype(int)
            fams.append(([(0, 1), (2, 3)], [y[0] + y[1], y[2] + y[3]], np.array([1.0, 1.0, -0.5, -0.5])))
    return fams


def _stack(datasets):
    parts = [ScoreVector.from_families(d) for d in datasets]
    cache = parts[0].cache
    sv = [ScoreVector.from_families(d, cache=cache) for d in datasets]
    offs, pos = [], 0
    for s in sv:
        offs.append(s.offsets + pos)
        pos += len(s.z)
    return ScoreVector(
        cache=cache,
        structure=np.concatenate([s.structure for s in sv]),
        klass=np.concatenate([s.klass for s in sv]),
        group=np.concatenate([np.full(s.n_families, k) for k, s in enumerate(sv)]),
        offsets=np.concatenate(offs),
        z=np.concatenate([s.z for s in sv]),
        n_groups=len(sv),
    )


def test_batch_equals_single():
    rng = np.random.default_rng(5)
    data = [_random_dataset(rng, 30, 0.3) for _ in range(6)]
    batch = cqls_batch(_stack(data))
    for k, d in enumerate(data):
        one = cqls(ScoreVector.from_families(d))
        assert batch.statistic[k] == pytest.approx(one.statistic, rel=1e-12)
        assert batch.phi_hat[k] == pytest.approx(one.phi_hat, rel=1e-12)


@pytest.mark.parametrize("exclude", [False, True])
def test_null_calibration(exclude):
    rng = np.random.default_rng(11 + exclude)
    data = [_random_dataset(rng, 120, 0.25) for _ in range(3000)]
    res = cqls_batch(_stack(data), exclude_ambiguous=exclude)
    p = res.p_value[res.status == 0]
    rate = np.mean(p < 0.05)
    assert abs(rate - 0.05) < 3 * np.sqrt(0.05 * 0.95 / len(p)) + 0.005
    if exclude:
        assert res.n_excluded.sum() > 0


def _pedigree_case(rng):
    inds, labs, geno = [], {}, {}
    for k in range(6):
        fid = f"F{k}"
        aff = [AFFECTED, rng.choice([AFFECTED, UNAFFECTED])]
        inds += _ped_family(fid, aff)
        labs[fid] = {"s1": (1, 3), "s2": (2, 3)} if k % 2 else {"s1": (1, 2), "s2": (3, 4)}
        geno[(fid, "s1")] = int(rng.integers(3))
        lo = 1 if k % 2 and geno[(fid, "s1")] == 2 else 0
        geno[(fid, "s2")] = int(rng.integers(lo, lo + 2))
    return inds, labs, geno


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), perm_seed=st.integers(0, 10**6))
def test_invariant_to_order_and_label_names(seed, perm_seed):
    rng = np.random.default_rng(seed)
    inds, labs, geno = _pedigree_case(rng)
    null = NullModel(0.1)

    def run(inds, labs):
        lab = ChromosomeLabeling("r", {f: FamilyLabeling(f, hard=h) for f, h in labs.items()})
        try:
            return cqls_batch(build_scores(Pedigree(inds), lab, geno, null)).result(0)
        except Exception as exc:  # noqa: BLE001
            return type(exc)

    base = run(inds, labs)
    prng = np.random.default_rng(perm_seed)
    shuffled = [inds[i] for i in prng.permutation(len(inds))]
    renamed = {}
    for f in prng.permutation(sorted(labs)):
        names = prng.permutation(np.arange(10, 20))[:4]
        renamed[f] = {i: (int(names[a - 1]), int(names[b - 1])) for i, (a, b) in labs[f].items()}
    other = run(shuffled, renamed)
    assert repr(base) == repr(other)


def test_structure_and_vector_dimensions():
    with pytest.raises(ValueError):
        ScoreVector.from_families([([(0, 1)], [1], [1.0])])
    assert Structure(SIB).n == 3
