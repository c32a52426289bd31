import random
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from latticetori.errors import HypothesisFailure, InputError
from latticetori.lattice import Lattice, TorsionVector, hnf, orthogonal
from latticetori.tori import (ComplexTorus, SiegelPoint, TorusHom, TorusPoint, complement_exponent, complex_structure,
                              e1_divide, hom_lattice, hybrid_sets, is_subtorus_complex, point_to_fiber, trivialize)

from tori_cases import (ANTIDIAGONAL, DIAGONAL, E_I, E_I2, FIRST_FACTOR, GRAPH_OF_1PI, GRAPH_OF_I, check_division,
                        mul, plant)


def neg_identity(n):
    return [[-int(i == j) for j in range(n)] for i in range(n)]


siegel_1 = st.tuples(st.fractions(-2, 2, max_denominator=4), st.fractions(Fraction(1, 4), 3, max_denominator=4))


# ------------------------------------------------------------ complex structures

def test_structure_of_i():
    assert complex_structure(SiegelPoint([[0]], [[1]])).J == [[0, -1], [1, 0]]


def test_structure_of_two_i():
    assert complex_structure(SiegelPoint([[0]], [[2]])).J == [[0, -2], [Fraction(1, 2), 0]]


def test_non_positive_imaginary_part_rejected():
    with pytest.raises(InputError):
        SiegelPoint([[0, 0], [0, 0]], [[1, 2], [2, 1]])


def test_asymmetric_tau_rejected():
    with pytest.raises(InputError):
        SiegelPoint([[0, 1], [0, 0]], [[1, 0], [0, 1]])


@settings(max_examples=40, deadline=None)
@given(siegel_1, siegel_1, st.fractions(-1, 1, max_denominator=3))
def test_j_squares_to_minus_one(a, b, off):
    s = SiegelPoint([[a[0], off], [off, b[0]]], [[a[1] + 2, Fraction(1, 3)], [Fraction(1, 3), b[1] + 2]])
    t = ComplexTorus(s)
    assert mul(t.J, t.J) == neg_identity(4)


@settings(max_examples=40, deadline=None)
@given(siegel_1, st.lists(st.fractions(-2, 2, max_denominator=6), min_size=4, max_size=4))
def test_trivialize_is_a_group_map(tau, zs):
    t = ComplexTorus(SiegelPoint([[tau[0]]], [[tau[1]]]))
    a = trivialize(t, [zs[0]], [zs[1]])
    b = trivialize(t, [zs[2]], [zs[3]])
    c = trivialize(t, [zs[0] + zs[2]], [zs[1] + zs[3]])
    assert a + b == c


def test_trivialize_examples():
    assert trivialize(E_I, ["1/3"], ["1/3"]) == TorsionVector([Fraction(1, 3), Fraction(1, 3)])
    t = ComplexTorus(SiegelPoint([["1/2"]], [[2]]))
    re, im = point_to_fiber(t, [3, -1])
    assert trivialize(t, re, im).is_zero()
    re, im = point_to_fiber(t, [1, 1])
    assert trivialize(t, [x / 2 for x in re], [x / 2 for x in im]) == TorsionVector([Fraction(1, 2)] * 2)


# ------------------------------------------------------------ Hom lattices

def brute_homs(a, b, box=2):
    out = []
    for entries in product(range(-box, box + 1), repeat=a.dim * b.dim):
        M = [list(entries[i * a.dim:(i + 1) * a.dim]) for i in range(b.dim)]
        if mul(b.J, M) == mul(M, a.J):
            out.append([x for r in M for x in r])
    return out


@pytest.mark.parametrize("target", [(0, 1), (1, 1), (0, 2)])
def test_hom_lattice_against_box_search(target):
    b = ComplexTorus(SiegelPoint([[target[0]]], [[target[1]]]))
    basis = hom_lattice(E_I, b)
    L = hnf([[x for r in h.M for x in r] for h in basis], 4)
    found = brute_homs(E_I, b)
    assert all(v in L for v in found)
    assert hnf(found, 4) == L


def test_isogenous_target_with_large_homs():
    # the smallest homs into the curve at (1 + 4i)/2 fall outside a small box
    b = ComplexTorus(SiegelPoint([["1/2"]], [[2]]))
    basis = hom_lattice(E_I, b)
    assert len(basis) == 2
    assert all(mul(b.J, h.M) == mul(h.M, E_I.J) for h in basis)
    assert all(v in hnf([[x for r in h.M for x in r] for h in basis], 4) for v in brute_homs(E_I, b, box=4))


def test_hom_ranks_of_gaussian_curves():
    assert len(hom_lattice(E_I, E_I)) == 2
    assert len(hom_lattice(E_I, ComplexTorus(SiegelPoint([[1]], [[1]])))) == 2


@settings(max_examples=30, deadline=None)
@given(siegel_1)
def test_endomorphisms_form_a_ring(tau):
    t = ComplexTorus(SiegelPoint([[tau[0]]], [[tau[1]]]))
    basis = hom_lattice(t, t)
    L = hnf([[x for r in h.M for x in r] for h in basis], 4)
    assert [1, 0, 0, 1] in L
    for f in basis:
        for g in basis:
            assert [x for r in f.compose(g).M for x in r] in L


def test_non_holomorphic_matrix_rejected():
    with pytest.raises(InputError):
        TorusHom([[1, 0], [0, 2]], E_I, E_I)


# ------------------------------------------------------------ subtori

def test_whole_lattice_is_complex():
    assert is_subtorus_complex(E_I, Lattice.full(2))


def test_real_line_is_not_complex():
    assert not is_subtorus_complex(E_I, hnf([[1, 0]], 2))


@pytest.mark.parametrize("L", [DIAGONAL, ANTIDIAGONAL, FIRST_FACTOR, GRAPH_OF_I, GRAPH_OF_1PI])
def test_planted_subtori_are_complex(L):
    assert is_subtorus_complex(E_I2, L)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([DIAGONAL, ANTIDIAGONAL, FIRST_FACTOR, GRAPH_OF_I, hnf([[1, 0, 0, 0], [0, 1, 0, 0]], 4)]),
       st.integers(1, 3), st.integers(-3, 3))
def test_complex_test_ignores_basis_and_scaling(L, c, m):
    u, v = L.vectors()
    other = hnf([[c * x for x in u], [c * (y + m * x) for x, y in zip(u, v)]], 4)
    assert is_subtorus_complex(E_I2, other) == is_subtorus_complex(E_I2, L)


# ------------------------------------------------------------ complements

def test_complement_of_everything():
    rep = complement_exponent(E_I2, Lattice.full(4))
    assert rep["L_Bprime"].rank == 0 and rep["n"] == 1


def test_complement_of_nothing():
    rep = complement_exponent(E_I2, Lattice.zero(4))
    assert rep["L_Bprime"] == Lattice.full(4) and rep["n"] == 1


def test_diagonal_complement_is_antidiagonal():
    rep = complement_exponent(E_I2, DIAGONAL)
    assert rep["L_Bprime"] == ANTIDIAGONAL and rep["n"] == 2
    assert rep["torsion_points_checked"] > 0


def brute_common_torsion_exponent(LB, LC, m=4):
    annB, annC = orthogonal(LB), orthogonal(LC)
    e = 1
    for xs in product(range(m), repeat=4):
        x = [Fraction(a, m) for a in xs]
        if all(sum(r[i] * x[i] for i in range(4)).denominator == 1 for r in annB.basis + annC.basis):
            e = max(e, TorsionVector(x).order)
    return e


@pytest.mark.parametrize("L,n", [(DIAGONAL, 2), (FIRST_FACTOR, 1), (GRAPH_OF_I, 2), (GRAPH_OF_1PI, 3)])
def test_complement_exponent_matches_common_torsion(L, n):
    rep = complement_exponent(E_I2, L)
    assert rep["n"] == n
    assert brute_common_torsion_exponent(L, rep["L_Bprime"], m=2 * n) == n


def test_complement_requires_complex_subtorus():
    with pytest.raises(HypothesisFailure):
        complement_exponent(E_I2, hnf([[1, 0, 0, 0]], 4))


# ------------------------------------------------------------ division construction


def test_diagonal_division_by_two():
    Q = TorusPoint(["1/4", "0", "0", "1/2"], [["1/2", "0"], ["1/2", "0"], ["0", "1/2"], ["0", "1/2"]])
    T = TorusPoint(["1/2", "0", "0", "0"])
    phi = [[1, 0], [1, 0], [0, 1], [0, 1]]
    out = e1_divide(E_I2, DIAGONAL, Q, T, phi, 2, 1, E_I)
    assert out["multiplier"] == 2 and out["certificate"]["n"] == 2
    check_division({"source": E_I, "L_B": DIAGONAL, "ann": [list(r) for r in orthogonal(DIAGONAL).basis], "Q": Q},
                   out)


def test_division_by_one_is_the_identity():
    Q = TorusPoint(["1/2", "0", "0", "0"], [[1, 0], [0, 0], [0, 1], [0, 0]])
    out = e1_divide(E_I2, DIAGONAL, Q, TorusPoint(["1/2", "0", "0", "0"]), [[1, 0], [0, 0], [0, 1], [0, 0]], 1, 1,
                    E_I)
    assert out["Qprime"] == Q and out["multiplier"] == 1


def test_division_with_trivial_subtorus_keeps_q():
    Q = TorusPoint(["1/4", "0", "0", "0"], [["1/2", "0"], ["0", "0"], ["0", "1/2"], ["0", "0"]])
    out = e1_divide(E_I2, Lattice.zero(4), Q, TorusPoint(["1/2", "0", "0", "0"]),
                    [[1, 0], [0, 0], [0, 1], [0, 0]], 2, 2, E_I)
    assert out["Qprime"] == Q and out["multiplier"] == 2


@pytest.mark.parametrize("seed", range(24))
def test_planted_division_instances(seed):
    inst = plant(random.Random(seed))
    out = e1_divide(E_I2, inst["L_B"], inst["Q"], inst["T"], inst["M"], inst["d"], inst["dprime"], inst["source"])
    check_division(inst, out)
    expected = 1 if inst["d"] == 1 else complement_exponent(E_I2, inst["L_B"], torsion_check=False)["n"] * inst["dprime"]
    assert out["multiplier"] == expected


def test_division_rejects_large_torsion_image():
    # phi = diagonal embedding composed with nothing in B: pi phi (A_P[2]) is not 1-torsion
    Q = TorusPoint([0] * 4, [["1/2", "0"], ["0", "0"], ["0", "1/2"], ["0", "0"]])
    with pytest.raises(HypothesisFailure) as exc:
        e1_divide(E_I2, DIAGONAL, Q, TorusPoint([0] * 4), [[1, 0], [0, 0], [0, 1], [0, 0]], 2, 1, E_I)
    assert exc.value.stage == "torsion_image"


def test_division_rejects_wrong_relation():
    Q = TorusPoint([0] * 4, [["1/2", "0"], ["1/2", "0"], ["0", "1/2"], ["0", "1/2"]])
    with pytest.raises(HypothesisFailure):
        e1_divide(E_I2, DIAGONAL, Q, TorusPoint([0] * 4), [[1, 0], [1, 0], [0, 1], [0, 1]], 3, 1, E_I)


# ------------------------------------------------------------ hybrid sets

def brute_d_q(C, basis_mats, d_max=12, box=3):
    for d in range(1, d_max + 1):
        target = [[d * x for x in r] for r in C]
        for c in product(range(-box, box + 1), repeat=len(basis_mats)):
            if [[sum(ci * b[i][j] for ci, b in zip(c, basis_mats)) for j in range(len(C[0]))]
                    for i in range(len(C))] == target:
                return d
    return None


def test_hybrid_q_equals_p():
    Q = TorusPoint([0, 0], [[1, 0], [0, 1]])
    rep = hybrid_sets(E_I, E_I, Q, 6, 1, 1)
    assert rep["d_Q"] == 1 and rep["phi_Q"] == [[1, 0], [0, 1]] and rep["T_Q"].is_torsion
    assert rep["E_set"] == [Q]


def test_hybrid_torsion_q_uses_zero_morphism():
    Q = TorusPoint(["1/5", "2/5"])
    rep = hybrid_sets(E_I, E_I, Q, 6, 1, 2)
    assert rep["d_Q"] == 1 and rep["phi_Q"] == [[0, 0], [0, 0]]
    # E' = Q + L_2 Q: the unit squares mod 5 are {1, 4}
    assert {tuple(p.r) for p in rep["Eprime_set"]} == {
        tuple(Fraction(x) % 1 for x in (Fraction(1, 5) + Fraction(u, 5), Fraction(2, 5) + Fraction(2 * u, 5)))
        for u in (1, 4)}


@pytest.mark.parametrize("kappa,size", [(1, 9), (3, 1), (2, 9)])
def test_hybrid_third_of_p_plus_two_torsion(kappa, size):
    Q = TorusPoint(["1/2", "0"], [["1/3", "0"], ["0", "1/3"]])
    rep = hybrid_sets(E_I, E_I, Q, 12, kappa, 1)
    basis = [h.M for h in hom_lattice(E_I, E_I)]
    assert rep["d_Q"] == 3 == brute_d_q([list(r) for r in Q.C], basis)
    assert rep["dprime_Q"] == 6
    assert rep["T_Q"].r == (Fraction(1, 2), Fraction(0))
    assert len(rep["F_Q"]) == 9 and len(rep["E_set"]) == size


def test_hybrid_sets_on_the_product():
    Q = TorusPoint(["1/2", "0", "0", "0"], [["1/3", "0"], ["1/3", "0"], ["0", "1/3"], ["0", "1/3"]])
    rep = hybrid_sets(E_I2, E_I, Q, 12, 1, 1)
    assert rep["d_Q"] == 3 and rep["searched"].get("box_cross_checked")


def test_hybrid_not_found_reports_box():
    Q = TorusPoint([0, 0], [["1/7", "0"], ["0", "1/7"]])
    rep = hybrid_sets(E_I, E_I, Q, 6, 1, 1)
    assert rep["status"] == "NOT_FOUND" and rep["searched"]["d_max"] == 6


def test_point_json_round_trip():
    Q = TorusPoint(["1/2", "0"], [["1/3", "0"], ["0", "1/3"]])
    assert TorusPoint.from_json(Q.to_json()) == Q
    R = TorusPoint.from_json({"real": [0.25, 0.5], "precision_bits": 53})
    assert not R.exact and R.to_json()["precision_bits"] == 53
