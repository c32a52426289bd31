"""Complex tori C^g / (Z^g + tau Z^g) in lattice coordinates.

A point of the torus is a vector x in R^2g / Z^2g with lattice coordinates:
x = (a, b) sits at a + tau b.  Homomorphisms are integer matrices acting on
column vectors that commute with the complex structures.

Points in the subgroup generated by a generic point P of a source torus A_P
and by torsion are kept symbolically as r + C * P_hat: r is rational mod 1,
C is a rational matrix, and P_hat stands for the lattice coordinates of P,
whose entries together with 1 are assumed linearly independent over Q.
"""

from fractions import Fraction
from itertools import product
from math import lcm

from .errors import HypothesisFailure, InputError, InvariantViolation
from .lattice import (Lattice, TorsionVector, _frac_mod1, det, frac_to_str, identity, integer_kernel,
                      inverse, join, matmul, matvec, orthogonal, parse_fraction, quotient_group,
                      saturate, solve_rows, transpose)
from .galois import l_e_orbit


def _q(x):
    return parse_fraction(x)


def _zeros(m, n):
    return [[Fraction(0)] * n for _ in range(m)]


def _block(tl, tr, bl, br):
    return [a + b for a, b in zip(tl, tr)] + [a + b for a, b in zip(bl, br)]


def _is_integral(m):
    return all(Fraction(x).denominator == 1 for row in m for x in row)


def _scale(m, c):
    return [[c * x for x in row] for row in m]


def _msub(a, b):
    return [[x - y for x, y in zip(r, s)] for r, s in zip(a, b)]


def _intmat(m):
    return [[int(x) for x in row] for row in m]


def _mat_json(m):
    return [[frac_to_str(x) for x in row] for row in m]


class SiegelPoint:
    """Symmetric tau with positive definite imaginary part; entries re + i*im with rational parts."""

    def __init__(self, re, im):
        self.re = [[_q(x) for x in row] for row in re]
        self.im = [[_q(x) for x in row] for row in im]
        g = len(self.re)
        if g == 0 or any(len(r) != g for r in self.re + self.im) or len(self.im) != g:
            raise InputError("tau must be a square g x g matrix")
        self.g = g
        if transpose(self.re) != self.re or transpose(self.im) != self.im:
            raise InputError("tau must be symmetric")
        self.minors = [det([row[:k] for row in self.im[:k]]) for k in range(1, g + 1)]
        if any(m <= 0 for m in self.minors):
            raise InputError("Im(tau) is not positive definite (leading minors "
                             + ", ".join(str(m) for m in self.minors) + ")")

    @classmethod
    def diagonal(cls, entries):
        """Product point diag(tau_1, ..., tau_g) from (re, im) pairs."""
        g = len(entries)
        re = [[entries[i][0] if i == j else 0 for j in range(g)] for i in range(g)]
        im = [[entries[i][1] if i == j else 0 for j in range(g)] for i in range(g)]
        return cls(re, im)

    def to_json(self):
        return {"g": self.g, "tau": [[{"re": frac_to_str(a), "im": frac_to_str(b)} for a, b in zip(r, s)]
                                     for r, s in zip(self.re, self.im)]}

    @classmethod
    def from_json(cls, obj):
        try:
            tau = obj["tau"]
            re = [[e["re"] for e in row] for row in tau]
            im = [[e["im"] for e in row] for row in tau]
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad Siegel point: {exc}") from exc
        if "g" in obj and obj["g"] != len(tau):
            raise InputError("g does not match tau")
        return cls(re, im)


class ComplexTorus:
    def __init__(self, siegel):
        self.siegel = siegel
        g = siegel.g
        self.g = g
        I = [[Fraction(int(i == j)) for j in range(g)] for i in range(g)]
        Z = _zeros(g, g)
        # lattice coordinates -> (Re, Im) real coordinates
        self.R = _block(I, siegel.re, Z, siegel.im)
        self.Rinv = inverse(self.R)
        Jc = _block(Z, _scale(I, -1), I, Z)
        self.J = matmul(self.Rinv, matmul(Jc, self.R))
        n = 2 * g
        if matmul(self.J, self.J) != [[-int(i == j) for j in range(n)] for i in range(n)]:
            raise InvariantViolation("J^2 != -1")

    @property
    def dim(self):
        return 2 * self.g

    def to_json(self):
        return {"siegel": self.siegel.to_json(), "J": _mat_json(self.J)}


def complex_structure(siegel):
    return ComplexTorus(siegel)


class TorusHom:
    """Integer matrix M from a torus of real rank 2g to one of rank 2g'; J' M = M J."""

    def __init__(self, M, source, target, check=True):
        self.M = _intmat(M)
        self.source, self.target = source, target
        if len(self.M) != target.dim or any(len(r) != source.dim for r in self.M):
            raise InputError("hom matrix has the wrong shape")
        if check and matmul(target.J, self.M) != matmul(self.M, source.J):
            raise InputError("matrix does not commute with the complex structures")

    def compose(self, other):
        """self after other."""
        return TorusHom(matmul(self.M, other.M), other.source, self.target)

    def to_json(self):
        return {"M": self.M}


def _hom_system(a, b):
    """Rows of the linear map M -> J_b M - M J_a on Z^(2g' * 2g), row-major M."""
    m, n = b.dim, a.dim
    rows = []
    for i in range(m):
        for j in range(n):
            row = [Fraction(0)] * (m * n)
            for k in range(m):
                row[k * n + j] += b.J[i][k]
            for k in range(n):
                row[i * n + k] -= a.J[k][j]
            if any(row):
                rows.append(row)
    return rows


def hom_lattice(a, b):
    """Z-basis of Hom(a, b) as TorusHom objects."""
    m, n = b.dim, a.dim
    rows = _hom_system(a, b)
    L = integer_kernel(rows, m * n) if rows else Lattice.full(m * n)
    return [TorusHom([list(v[i * n:(i + 1) * n]) for i in range(m)], a, b) for v in L.basis]


def _flat(m):
    return [x for row in m for x in row]


def hom_coordinates(basis, C):
    """Rational coordinates of the matrix C in the span of the basis, or None."""
    if not basis:
        return [] if all(x == 0 for x in _flat(C)) else None
    return solve_rows([_flat(h.M) for h in basis], _flat(C))


def _stable(J, L):
    if L.rank == 0:
        return True
    vecs = L.vectors()
    return all(solve_rows(vecs, matvec(J, v)) is not None for v in vecs)


def is_subtorus_complex(t, L, detail=False):
    """Whether the real span of L is a complex subspace (J-stable)."""
    sat = saturate(L)
    ok = _stable(t.J, sat)
    if detail:
        return {"complex": ok, "saturated": sat == L, "saturation": sat}
    return ok


def psi_matrix(g):
    n = 2 * g
    return [[1 if j == i + g else (-1 if i == j + g else 0) for j in range(n)] for i in range(n)]


def _members_of_subtorus(x, ann):
    return all(sum(Fraction(c) * xi for c, xi in zip(row, x)).denominator == 1 for row in ann.basis)


def complement_exponent(t, L_B, torsion_check=True, enum_cap=200000):
    """psi-orthogonal complement of L_B and the exponent n with B cap B' <= A[n]."""
    N = t.dim
    if not is_subtorus_complex(t, L_B):
        raise HypothesisFailure("lattice does not span a complex subtorus", stage="complex")
    L_B = saturate(L_B)
    Psi = psi_matrix(t.g)
    if L_B.rank == 0:
        comp = Lattice.full(N)
    else:
        gram = [[sum(a * Psi[i][j] * b for i, a in enumerate(u) for j, b in enumerate(v))
                 for v in L_B.basis] for u in L_B.basis]
        if det(gram) == 0:
            raise HypothesisFailure("symplectic form degenerates on the subtorus", stage="polarization")
        rows = [[sum(u[i] * Psi[i][j] for i in range(N)) for j in range(N)] for u in L_B.basis]
        comp = integer_kernel(rows, N)
    for u in L_B.basis:
        for v in comp.basis:
            if sum(a * Psi[i][j] * b for i, a in enumerate(u) for j, b in enumerate(v)) != 0:
                raise InvariantViolation("complement is not psi-orthogonal")
    if not _stable(t.J, comp):
        raise InvariantViolation("complement is not J-stable")
    q = quotient_group(join(L_B, comp), Lattice.full(N))
    n = q.exponent
    report = {"L_Bprime": comp, "n": n, "quotient": list(q.invariant_factors)}
    if torsion_check:
        ann_B, ann_C = orthogonal(L_B), orthogonal(comp)
        checked = 0
        for m in range(1, 2 * n + 1):
            if m ** N > enum_cap:
                break
            for xs in product(range(m), repeat=N):
                x = [Fraction(a, m) for a in xs]
                if _members_of_subtorus(x, ann_B) and _members_of_subtorus(x, ann_C):
                    checked += 1
                    if any((n * c).denominator != 1 for c in x):
                        raise InvariantViolation(f"common torsion point {x} has order not dividing {n}")
        report["torsion_points_checked"] = checked
        report["torsion_orders_checked"] = m
    return report


# ----------------------------------------------------------------- points

class TorusPoint:
    """r + C * P_hat in R^N / Z^N; C is None for a plain rational point.

    ``real`` optionally carries a fixed-precision realization (tagged with
    its precision) for points that are not exactly representable.
    """

    def __init__(self, r, C=None, real=None, precision_bits=None):
        self.r = tuple(_frac_mod1(_q(x)) for x in r)
        self.C = None if C is None else tuple(tuple(_q(x) for x in row) for row in C)
        if self.C is not None and len(self.C) != len(self.r):
            raise InputError("symbolic part has the wrong number of rows")
        if self.C is not None and all(x == 0 for row in self.C for x in row):
            self.C = None
        self.real = None if real is None else tuple(float(x) for x in real)
        self.precision_bits = precision_bits

    @property
    def dim(self):
        return len(self.r)

    @property
    def exact(self):
        return self.real is None

    @property
    def is_torsion(self):
        return self.exact and self.C is None

    @property
    def order(self):
        if not self.is_torsion:
            raise InputError("order of a non-torsion point")
        return TorsionVector(self.r).order

    def _c(self, ncols):
        return [list(row) for row in self.C] if self.C is not None else _zeros(self.dim, ncols)

    def __add__(self, other):
        if not (self.exact and other.exact):
            raise InputError("exact arithmetic on a real-tagged point")
        if self.C is None:
            C = other.C
        elif other.C is None:
            C = self.C
        else:
            C = [[a + b for a, b in zip(r, s)] for r, s in zip(self.C, other.C)]
        return TorusPoint([a + b for a, b in zip(self.r, other.r)], C)

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, k):
        return TorusPoint([k * a for a in self.r], None if self.C is None else [[k * x for x in row] for row in self.C])

    __rmul__ = __mul__

    def apply(self, M):
        """Image under an integer (or rational) matrix."""
        r = matvec(M, self.r)
        C = None if self.C is None else matmul(M, [list(row) for row in self.C])
        return TorusPoint(r, C)

    def __eq__(self, other):
        return isinstance(other, TorusPoint) and self.r == other.r and self.C == other.C and self.real == other.real

    def __hash__(self):
        return hash((self.r, self.C, self.real))

    def realize(self, P_real):
        c = self.C if self.C is not None else ()
        vals = [float(a) + sum(float(x) * p for x, p in zip(row, P_real)) for a, row in
                zip(self.r, c or [[]] * self.dim)]
        return [v % 1.0 for v in vals]

    def __repr__(self):
        if self.real is not None:
            return f"TorusPoint(real={self.real})"
        s = "(" + ", ".join(str(x) for x in self.r) + ")"
        if self.C is not None:
            s += " + " + str([[str(x) for x in row] for row in self.C]) + " P"
        return f"TorusPoint{s}"

    def to_json(self):
        if self.real is not None:
            return {"real": list(self.real), "precision_bits": self.precision_bits}
        out = {"r": [frac_to_str(x) for x in self.r]}
        if self.C is not None:
            out["C"] = _mat_json(self.C)
        return out

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, list):
            return cls(obj)
        if "real" in obj:
            return cls([0] * len(obj["real"]), None, obj["real"], obj.get("precision_bits", 53))
        return cls(obj["r"], obj.get("C"))


def trivialize(torus, z_re, z_im):
    """Lattice coordinates mod 1 of the point z = z_re + i z_im of C^g."""
    v = [_q(x) for x in z_re] + [_q(x) for x in z_im]
    return TorsionVector(matvec(torus.Rinv, v))


def trivialize_family(family):
    """family: list of (SiegelPoint, list of (re, im) points); coordinates per fiber."""
    out = []
    for siegel, pts in family:
        t = ComplexTorus(siegel)
        out.append([trivialize(t, re, im) for re, im in pts])
    return out


def point_to_fiber(torus, x):
    """Inverse of trivialize on a rational lattice vector: returns (re, im) coordinates."""
    w = matvec(torus.R, x)
    return w[:torus.g], w[torus.g:]


# ---------------------------------------------------------- division construction

def _quotient_data(t, L_B):
    """Annihilator rows Lam (A -> A/B) and the induced complex structure on A/B."""
    Lam = orthogonal(saturate(L_B))
    if Lam.rank == 0:
        return [], []
    rows = [list(r) for r in Lam.basis]
    # J' Lam = Lam J, solved row by row in the row space of Lam
    LJ = matmul(rows, t.J)
    Jq = [solve_rows(rows, r) for r in LJ]
    if any(x is None for x in Jq):
        raise InvariantViolation("quotient complex structure does not exist")
    return rows, Jq


def e1_divide(t, L_B, Q, T, phi, d, dprime, source):
    """From d Q = phi(P) + T build Q' in Q + B, phi', T' with n d' Q' = phi'(P) + T'."""
    N, NP = t.dim, source.dim
    d, dprime = int(d), int(dprime)
    if d < 1 or dprime < 1 or d % dprime:
        raise InputError("need positive d with d' dividing d")
    M = _intmat(phi.M if isinstance(phi, TorusHom) else phi)
    if matmul(t.J, M) != matmul(M, source.J):
        raise HypothesisFailure("phi is not a homomorphism", stage="phi")
    if not T.is_torsion:
        raise HypothesisFailure("T is not torsion", stage="T")
    C_Q = Q._c(NP)
    # d Q = phi(P) + T, read off exactly on the symbolic and rational parts
    if _scale(C_Q, d) != [[Fraction(x) for x in r] for r in M] or TorsionVector([d * x for x in Q.r]) != TorsionVector(T.r):
        raise HypothesisFailure("d*Q != phi(P) + T", witness={"dC": _mat_json(_scale(C_Q, d)), "M": M},
                                stage="relation")
    ce = complement_exponent(t, L_B, torsion_check=False)
    n = ce["n"]
    Lam, Jq = _quotient_data(t, L_B)
    s = len(Lam)
    cert = {"n": n, "quotient_rank": s, "annihilator": Lam}
    if d == 1:
        return _certify(t, L_B, Q, Q, T, M, M, 1, source, cert | {"shortcut": "d=1"})
    if s == 0:
        # B = A: any Q' in Q + B works; take the torsion-free lift
        Qp = TorusPoint([0] * N)
        return _certify(t, L_B, Q, Qp, TorusPoint([0] * N), _zeros(N, NP), _zeros(N, NP), n * dprime, source, cert)
    LM = matmul(Lam, M)
    k = d // dprime
    # pi o phi (A_P[d]) <= A'[d'] iff Lam M = 0 mod d/d'
    bad = [(i, j) for i, row in enumerate(LM) for j, x in enumerate(row) if x % k]
    if bad:
        i, j = bad[0]
        raise HypothesisFailure("pi o phi (A_P[d]) is not inside A'[d']",
                                witness={"basis_vector": j, "image_row": i, "value": str(Fraction(LM[i][j], d))},
                                stage="torsion_image")
    Mq = [[x // k for x in row] for row in LM]          # pi o phi = (d/d') phi'
    comp = ce["L_Bprime"]
    Bp = transpose(comp.vectors())                      # N x s, columns span B'
    K = matmul(Lam, Bp)                                 # p = pi restricted to B'
    Kinv = inverse(K)
    nKinv = _scale(Kinv, n)
    if not _is_integral(nKinv):
        raise InvariantViolation("n does not kill the kernel of B' -> A/B")
    S = matmul(Bp, _intmat(nKinv))                      # sigma: A/B -> B' <= A with pi sigma = n
    if matmul(Lam, S) != _scale(identity(s), n):
        raise InvariantViolation("pi o sigma != n")
    if matmul(t.J, S) != matmul(S, Jq):
        raise InvariantViolation("sigma is not a homomorphism")
    phi_new = matmul(S, Mq)
    Cp = _scale(phi_new, Fraction(1, n * dprime))
    Qp = TorusPoint(Q.r, Cp)
    Tp = TorusPoint([n * dprime * x for x in Q.r])
    cert.update(phi_quotient=Mq, sigma=S, K=K, quotient_J=_mat_json(Jq),
                torsion_in_quotient=[frac_to_str(-x) for x in matvec(Lam, Q.r)])
    return _certify(t, L_B, Q, Qp, Tp, phi_new, M, n * dprime, source, cert)


def _certify(t, L_B, Q, Qp, Tp, phi_new, phi_old, mult, source, cert):
    NP = source.dim
    phi_new = _intmat(phi_new)
    if matmul(t.J, phi_new) != matmul(phi_new, source.J):
        raise InvariantViolation("phi' is not a homomorphism")
    lhs = Qp * mult
    if lhs._c(NP) != [[Fraction(x) for x in r] for r in phi_new] or TorsionVector(lhs.r) != TorsionVector(Tp.r):
        raise InvariantViolation("n d' Q' != phi'(P) + T'")
    diff = Qp - Q
    ann = orthogonal(saturate(L_B))
    in_B = (all(all(sum(a * x for a, x in zip(row, col)) == 0 for row in ann.basis)
                for col in zip(*diff._c(NP)))
            and _members_of_subtorus(diff.r, ann))
    if not in_B:
        raise InvariantViolation("Q' - Q is not in B")
    cert = dict(cert)
    cert["identity_verified"] = True
    cert["difference_in_B"] = True
    return {"Qprime": Qp, "phiprime": phi_new, "Tprime": Tp, "multiplier": mult, "certificate": cert}


# ------------------------------------------------------------ hybrid sets

def _box_coeffs(r, box):
    return product(range(-box, box + 1), repeat=r)


def hybrid_sets(A, AP, Q, search_bound, kappa, e, coeff_box=None):
    """d_Q, phi_Q, T_Q and the finite sets E(Q; kappa) and E'(d_Q Q; e), by bounded search."""
    if not Q.exact:
        raise InputError("hybrid sets need an exact point Q")
    basis = hom_lattice(AP, A)
    NP, N = AP.dim, A.dim
    C = Q._c(NP)
    coords = hom_coordinates(basis, C)
    box = coeff_box
    if box is None:
        box = 1 + max((abs(x) * search_bound for x in (coords or [])), default=0)
        box = int(min(box, 4))
    searched = {"d_max": search_bound, "coefficient_box": box, "hom_rank": len(basis)}
    found = None
    for d in range(1, search_bound + 1):
        target = _scale(C, d)
        if not _is_integral(target):
            continue
        exact_hit = coords is not None and all((d * x).denominator == 1 for x in coords)
        if basis and (2 * box + 1) ** len(basis) <= 10 ** 6:
            hit = None
            for c in _box_coeffs(len(basis), box):
                Mc = [[sum(ci * h.M[i][j] for ci, h in zip(c, basis)) for j in range(NP)] for i in range(N)]
                if Mc == target:
                    hit = list(c)
                    break
            if hit is not None and not exact_hit:
                raise InvariantViolation("box search found a decomposition the exact solve rejected")
            if hit is None and exact_hit and all(abs(d * x) <= box for x in coords):
                raise InvariantViolation("box search missed an exact Hom decomposition")
            searched["box_cross_checked"] = True
        if exact_hit:
            found = d
            break
    if found is None:
        return {"status": "NOT_FOUND", "searched": searched}
    d = found
    M = _intmat(_scale(C, d))
    T = TorusPoint([d * x for x in Q.r])
    dprime = lcm(d, T.order)
    # F_Q = phi_Q(A_P[d])
    F = sorted({tuple(_frac_mod1(sum(Fraction(M[i][j] * x[j], d) for j in range(NP))) for i in range(N))
                for x in product(range(d), repeat=NP)})
    E = sorted({TorsionVector([a + kappa * f for a, f in zip(Q.r, fv)]).coords for fv in F})
    orbit = l_e_orbit(TorsionVector(T.r), e)
    Eprime = [TorusPoint([a + b for a, b in zip(T.r, o.coords)], M) for o in orbit]
    galois = [TorusPoint(o.coords, M) for o in orbit]
    return {"status": "FOUND", "d_Q": d, "dprime_Q": dprime, "phi_Q": M, "T_Q": T,
            "F_Q": [TorsionVector(f) for f in F],
            "E_set": [TorusPoint(r, C) for r in E], "Eprime_set": Eprime, "Eprime_orbit_form": galois,
            "searched": searched}
