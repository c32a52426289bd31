import cmath
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from latticetori.cyclotomic import Cyclotomic
from latticetori.lattice import Lattice, TorsionVector, hnf
from latticetori.measures import (DivergenceError, MeasureSequence, PackagedMeasure, TailRule, UnsupportedCombination,
                                  as_complex, char_box, convolve, empirical_moment, limit_sequence, moment,
                                  pl_family_dim_check, sample, support_inclusion)

from measure_cases import CASES, pl_families, tv


def brute_moment(mu, chi):
    """Haar part as the annihilator indicator, torsion part as a direct orbit sum."""
    if list(chi) not in mu.annihilator:
        return 0j
    q = mu.t.order
    pts = {tuple((Fraction(u ** mu.e) * c) % 1 for c in mu.t.coords) for u in range(1, q + 1) if np.gcd(u, q) == 1}
    off = sum(c * float(k) for c, k in zip(chi, mu.k))
    return sum(cmath.exp(2j * cmath.pi * (sum(c * float(x) for c, x in zip(chi, p)) + off)) for p in pts) / len(pts)


# ------------------------------------------------------------ moments

def test_haar_moments():
    mu = PackagedMeasure(2)
    assert moment(mu, (0, 0)) == 1 and moment(mu, (1, 0)) == 0


def test_dirac_quarter_moment_is_i():
    mu = PackagedMeasure(1, Lattice.full(1), k=["1/4"])
    assert moment(mu, (1,)) == Cyclotomic.root(4)


def test_orbit_of_a_third_averages_to_minus_half():
    mu = PackagedMeasure(1, Lattice.full(1), tv("1/3"))
    assert moment(mu, (1,)) == Fraction(-1, 2)


measures = st.builds(
    lambda rows, t, k, e: PackagedMeasure(2, hnf(rows, 2) if rows else Lattice.zero(2),
                                          TorsionVector(t), k, e),
    st.lists(st.lists(st.integers(-3, 3), min_size=2, max_size=2), max_size=2),
    st.lists(st.fractions(0, 1, max_denominator=7), min_size=2, max_size=2),
    st.lists(st.fractions(0, 1, max_denominator=6), min_size=2, max_size=2),
    st.integers(1, 3))


@settings(max_examples=60, deadline=None)
@given(measures)
def test_moments_match_direct_sum_and_have_unit_mass(mu):
    assert moment(mu, (0, 0)) == 1
    for chi in char_box(2, 2):
        m = moment(mu, chi)
        assert abs(as_complex(m)) <= 1 + 1e-12
        assert abs(as_complex(m) - brute_moment(mu, chi)) < 1e-9


# ------------------------------------------------------------ convolution

def test_convolve_with_dirac_zero_is_identity():
    mu = PackagedMeasure(1, hnf([[2]], 1), tv("1/3"))
    out = convolve(mu, PackagedMeasure(1, Lattice.full(1)))
    assert all(moment(out, c) == moment(mu, c) for c in char_box(1, 6))


def test_haar_is_idempotent():
    G = PackagedMeasure(2, hnf([[1, 1]], 2))
    out = convolve(G, G)
    assert out.annihilator == G.annihilator


def test_quarter_offsets_add():
    d = PackagedMeasure(1, Lattice.full(1), k=["1/4"])
    assert convolve(d, d).k == (Fraction(1, 2),)


def test_coprime_orbits_combine():
    a = PackagedMeasure(1, Lattice.full(1), tv("1/4"))
    b = PackagedMeasure(1, Lattice.full(1), tv("1/3"))
    assert convolve(a, b).t == tv("7/12")


def test_noncoprime_orbits_are_unsupported():
    a = PackagedMeasure(1, Lattice.full(1), tv("1/4"))
    with pytest.raises(UnsupportedCombination):
        convolve(a, a)


@settings(max_examples=60, deadline=None)
@given(measures, measures)
def test_convolution_multiplies_moments(a, b):
    assume(a.t.is_zero() or b.t.is_zero() or (a.e == b.e and np.gcd(a.t.order, b.t.order) == 1))
    out = convolve(a, b)
    for chi in char_box(2, 3):
        assert moment(out, chi) == moment(a, chi) * moment(b, chi)


# ------------------------------------------------------------ limits

@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_limit_matches_declared_moments(case):
    rep = limit_sequence(case["seq"], 10)
    lim = rep["limit"]
    for chi in char_box(lim.N, 10):
        assert moment(lim, chi) == case["limit"](chi)


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_terms_converge_to_the_limit(case):
    rep = limit_sequence(case["seq"], 10)
    stab = rep["stabilization_index"]
    box = list(char_box(case["seq"].N, 4))
    # offset-free moments agree exactly from the stabilization index on
    for i in range(stab, stab + 4):
        term = case["seq"].term(i).without_offset()
        for chi in box:
            assert moment(term, chi) == moment(rep["limit"].without_offset(), chi)
    # and the offsets themselves converge
    if case["kind"] != "converging_offset":
        return
    # a real offset keeps the far term away from huge cyclotomic orders
    exact_far = case["seq"].term(stab + 20)
    far = PackagedMeasure(exact_far.N, exact_far.annihilator, exact_far.t, [float(x) for x in exact_far.k], exact_far.e)
    for chi in box:
        assert abs(as_complex(moment(far, chi)) - as_complex(case["limit"](chi))) < 1e-3 * (1 + sum(map(abs, chi)))


@pytest.mark.parametrize("case", [c for c in CASES if c["kind"] != "constant_torsion"],
                         ids=[c["name"] for c in CASES if c["kind"] != "constant_torsion"])
def test_stabilization_index_is_least(case):
    rep = limit_sequence(case["seq"], 10)
    stab = rep["stabilization_index"]
    if stab == 0:
        return
    prev = case["seq"].term(stab - 1).without_offset()
    lim0 = rep["limit"].without_offset()
    assert any(moment(prev, chi) != moment(lim0, chi) for chi in char_box(prev.N, 10))


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_terms_sit_inside_the_limit_support(case):
    rep = limit_sequence(case["seq"], 10)
    lim0 = rep["limit"].without_offset()
    for i in range(rep["stabilization_index"], rep["stabilization_index"] + 5):
        assert support_inclusion(case["seq"].term(i).without_offset(), lim0)


def test_constant_sequence_stabilizes_at_zero():
    rep = limit_sequence(CASES[4]["seq"])
    assert rep["stabilization_index"] == 0


def test_alternating_offsets_diverge():
    rule = TailRule("pattern", 1, fixed=Lattice.full(1), alternating=[["0"], ["1/2"]])
    with pytest.raises(DivergenceError):
        limit_sequence(MeasureSequence([], rule))


# ------------------------------------------------------------ support inclusion

def finite_support(mu, D):
    """Points of E(G, t, 0) on the grid (1/D)Z^N, for finite G."""
    out = set()
    orb = {tuple((Fraction(u ** mu.e) * c) % 1 for c in mu.t.coords)
           for u in range(1, mu.t.order + 1) if np.gcd(u, mu.t.order) == 1}
    for g in product(range(D), repeat=mu.N):
        x = [Fraction(a, D) for a in g]
        if all(sum(b * xi for b, xi in zip(row, x)).denominator == 1 for row in mu.annihilator.basis):
            for o in orb:
                out.add(tuple((a + b) % 1 for a, b in zip(x, o)))
    return out


def test_everything_sits_in_haar():
    assert support_inclusion(PackagedMeasure(1, Lattice.full(1), tv("1/5")), PackagedMeasure(1))


def test_half_not_inside_zero():
    assert not support_inclusion(PackagedMeasure(1, hnf([[2]], 1)), PackagedMeasure(1, Lattice.full(1)))


def test_sixth_orbit_against_thirds():
    inner = PackagedMeasure(1, Lattice.full(1), tv("1/6"))
    assert not support_inclusion(inner, PackagedMeasure(1, hnf([[3]], 1)))
    assert support_inclusion(inner, PackagedMeasure(1, hnf([[6]], 1)))
    witness = support_inclusion(inner, PackagedMeasure(1, hnf([[3]], 1)), detail=True)["uncovered_coset"]
    assert TorsionVector.from_json(witness) in inner.orbit


full_rank_2 = st.lists(st.integers(-3, 3), min_size=4, max_size=4).filter(
    lambda v: v[0] * v[3] != v[1] * v[2] and abs(v[0] * v[3] - v[1] * v[2]) <= 12)


@settings(max_examples=60, deadline=None)
@given(full_rank_2, full_rank_2, st.lists(st.fractions(0, 1, max_denominator=4), min_size=2, max_size=2),
       st.lists(st.fractions(0, 1, max_denominator=4), min_size=2, max_size=2))
def test_inclusion_matches_point_enumeration(a, b, s, t):
    A = PackagedMeasure(2, hnf([a[:2], a[2:]], 2), TorsionVector(s))
    B = PackagedMeasure(2, hnf([b[:2], b[2:]], 2), TorsionVector(t))
    D = 1
    for mu in (A, B):
        D = np.lcm(D, int(abs(mu.annihilator.basis[0][0] * mu.annihilator.basis[1][1])))
        D = np.lcm(D, mu.t.order)
    D = int(D)
    assert support_inclusion(A, B) == finite_support(A, D).issubset(finite_support(B, D))


def test_inclusion_rejects_offsets():
    with pytest.raises(Exception):
        support_inclusion(PackagedMeasure(1, k=["1/3"]), PackagedMeasure(1))


# ------------------------------------------------------------ sampling

def test_dirac_samples_are_constant():
    pts = sample(PackagedMeasure(2, Lattice.full(2), k=["1/4", "1/3"]), 50, seed=1)
    assert np.allclose(pts, [[0.25, 1 / 3]] * 50)


def test_haar_mean_character_is_small():
    pts = sample(PackagedMeasure(1), 10 ** 5, seed=2)
    assert abs(empirical_moment(pts, (1,))) <= 0.02


def test_thirds_frequencies():
    pts = sample(PackagedMeasure(1, Lattice.full(1), tv("1/3")), 10 ** 5, seed=3)
    frac = np.mean(np.isclose(pts[:, 0], 1 / 3))
    assert abs(frac - 0.5) <= 3 * np.sqrt(0.25 / 10 ** 5)


def test_sampling_is_seeded():
    mu = PackagedMeasure(2, hnf([[1, 1]], 2), tv("1/2", "0"))
    assert np.array_equal(sample(mu, 100, seed=5), sample(mu, 100, seed=5))


MC_MEASURES = [
    PackagedMeasure(1),
    PackagedMeasure(1, Lattice.full(1), tv("1/5"), e=2),
    PackagedMeasure(2, hnf([[1, 1]], 2), tv("1/3", "0")),
    PackagedMeasure(2, hnf([[2, 0], [0, 1]], 2), tv("0", "1/3"), k=["1/7", "0"]),
]


@pytest.mark.parametrize("idx", range(len(MC_MEASURES)))
def test_monte_carlo_moments_within_tolerance(idx):
    mu = MC_MEASURES[idx]
    pts = sample(mu, 10 ** 5, seed=idx)
    for chi in char_box(mu.N, 5):
        assert abs(empirical_moment(pts, chi) - as_complex(moment(mu, chi))) <= 0.02


# ------------------------------------------------------------ PL surrogate

@pytest.mark.parametrize("fam", pl_families(), ids=[f[0] for f in pl_families()])
def test_pl_dimension_check(fam):
    name, V, seq, translates, planted = fam
    rep = pl_family_dim_check(V, seq, translates)
    assert rep["rows"]
    if planted:
        assert rep["all_equal"] and not rep["flagged"]
        assert all(r["hypotheses_hold"] for r in rep["rows"])
    else:
        assert rep["flagged"] and not rep["all_equal"]
