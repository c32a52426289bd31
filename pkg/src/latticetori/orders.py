"""Orders in matrix algebras and integral stability constants.

Matrices act on column vectors; a lattice vector w is moved by ``A @ w``.
An order is kept as a lattice in Z^(n*n) (row-major flattening), so its
canonical basis doubles as an equality key.
"""

import random
from fractions import Fraction
from itertools import combinations, product
from math import gcd, lcm

from .errors import HypothesisFailure, InputError, InvariantViolation
from .lattice import (Lattice, ScaledLattice, det, hnf, identity, integer_kernel, inverse,
                      matmul, matvec, meet, quotient_group, snf, solve_rows)


def flatten(m):
    return [x for row in m for x in row]


def unflatten(v, n):
    return [list(v[i * n:(i + 1) * n]) for i in range(n)]


def trace(m):
    return sum(m[i][i] for i in range(len(m)))


def commutes(a, b, modulus=None):
    ab, ba = matmul(a, b), matmul(b, a)
    if modulus:
        return all((x - y) % modulus == 0 for r, s in zip(ab, ba) for x, y in zip(r, s))
    return ab == ba


class MatrixOrder:
    """Unital ring of integer n x n matrices given by a Z-basis."""

    __slots__ = ("n", "lattice")

    def __init__(self, n, basis, check=True):
        self.n = n
        self.lattice = hnf([flatten(b) for b in basis], n * n)
        if check:
            self._check()

    @classmethod
    def _from_lattice(cls, n, lattice, check=True):
        obj = cls.__new__(cls)
        obj.n = n
        obj.lattice = lattice
        if check:
            obj._check()
        return obj

    def _check(self):
        if flatten(identity(self.n)) not in self.lattice:
            raise InputError("span does not contain the identity")
        mats = self.basis
        for a in mats:
            for b in mats:
                if flatten(matmul(a, b)) not in self.lattice:
                    raise InputError("span is not closed under multiplication")

    @property
    def basis(self):
        return [unflatten(v, self.n) for v in self.lattice.basis]

    @property
    def rank(self):
        return self.lattice.rank

    def __contains__(self, m):
        return flatten(m) in self.lattice

    def __eq__(self, other):
        return isinstance(other, MatrixOrder) and self.n == other.n and self.lattice == other.lattice

    def __hash__(self):
        return hash((self.n, self.lattice))

    def __repr__(self):
        return f"MatrixOrder(n={self.n}, rank={self.rank})"

    def to_json(self):
        return {"n": self.n, "basis": [[[str(x) for x in r] for r in m] for m in self.basis]}

    @classmethod
    def from_json(cls, obj):
        n = int(obj["n"])
        return cls(n, [[[int(x) for x in r] for r in m] for m in obj["basis"]])


def scalar_order(n):
    return MatrixOrder(n, [identity(n)])


def full_matrix_order(n):
    return MatrixOrder(n, [unflatten([int(i == k) for i in range(n * n)], n) for k in range(n * n)])


def algebra_closure(generators, n=None, modulus=None):
    """Smallest unital ring containing the generators (plus modulus*M_n(Z))."""
    gens = [[list(map(int, r)) for r in g] for g in generators]
    if n is None:
        if not gens:
            raise InputError("matrix size needed when there are no generators")
        n = len(gens[0])
    for g in gens:
        if len(g) != n or any(len(r) != n for r in g):
            raise InputError("generators must be square of a common size")
    L = hnf([flatten(identity(n))] + [flatten(g) for g in gens], n * n, modulus)
    while True:
        mats = [unflatten(v, n) for v in L.basis]
        prods = [flatten(matmul(a, b)) for a in mats for b in mats]
        new = hnf(list(L.basis) + prods, n * n, modulus)
        if new == L:
            return MatrixOrder._from_lattice(n, L, check=False)
        L = new


def commutant(R):
    """Integral commutant {x in M_n(Z) : xr = rx for r in R}."""
    n = R.n
    rows = []
    for r in R.basis:
        for i in range(n):
            for j in range(n):
                row = [0] * (n * n)
                for k in range(n):
                    row[i * n + k] += r[k][j]   # (x r)_{ij}
                    row[k * n + j] -= r[i][k]   # (r x)_{ij}
                if any(row):
                    rows.append(row)
    if not rows:
        return full_matrix_order(n)
    return MatrixOrder._from_lattice(n, integer_kernel(rows, n * n))


def _block_weights(shape, side):
    """Per-coordinate trace weights turning the matrix trace into the reduced trace."""
    w = []
    for n, m in shape.blocks:
        w.extend([Fraction(1, m if side == "left" else n)] * (n * m))
    return w


def trace_gram(R, shape=None, side="left"):
    """Gram matrix of (x, y) -> tr(xy) on R's basis.

    With a BlockShape the reduced trace of prod End(Z^{n_i}) (x) Id (side
    "left") or of prod Id (x) End(Z^{m_i}) (side "right") is used instead
    of the trace on the ambient space.
    """
    b = R.basis
    if shape is None:
        return [[trace(matmul(x, y)) for y in b] for x in b]
    w = _block_weights(shape, side)
    out = []
    for x in b:
        row = []
        for y in b:
            xy = matmul(x, y)
            t = sum(w[i] * xy[i][i] for i in range(R.n))
            row.append(int(t) if t.denominator == 1 else t)
        out.append(row)
    return out


def trace_orthogonal(R, shape=None, side="left"):
    """R-perp in R's basis coordinates, as a scaled integral lattice."""
    G = trace_gram(R, shape, side)
    if det(G) == 0:
        raise InputError("trace form is degenerate (algebra not semisimple)")
    return ScaledLattice.from_rational_rows(inverse(G), R.rank)


def discriminant(R, shape=None, side="left"):
    G = trace_gram(R, shape, side)
    d = abs(det(G))
    if d == 0:
        raise InputError("trace form is degenerate (algebra not semisimple)")
    if Fraction(d).denominator != 1:
        raise InputError("trace form is not integral on R")
    return int(d)


def discriminant_by_index(R, shape=None, side="left"):
    """[R-perp : R] computed from the quotient group (independent route)."""
    perp = trace_orthogonal(R, shape, side)
    r = R.rank
    inner = Lattice.full(r).scaled(perp.denominator)  # R scaled into perp's integral frame
    return quotient_group(inner, perp.lattice).order


# --------------------------------------------------------- block shapes

class BlockShape:
    """V = sum_i Z^{n_i} (x) Z^{m_i}; coordinate of e_{i,a} (x) f_b is off_i + a*m_i + b."""

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        self.blocks = tuple((int(a), int(b)) for a, b in blocks)
        if not self.blocks or any(a < 1 or b < 1 for a, b in self.blocks):
            raise InputError("block sizes must be positive")

    @property
    def dim(self):
        return sum(a * b for a, b in self.blocks)

    def offsets(self):
        out, o = [], 0
        for a, b in self.blocks:
            out.append(o)
            o += a * b
        return out

    def slot(self, i, a):
        off = self.offsets()[i]
        m = self.blocks[i][1]
        return list(range(off + a * m, off + (a + 1) * m))

    def elementary(self, i, a, b):
        """The operator e_{ab} (x) Id on block i, as a dim x dim matrix."""
        N = self.dim
        M = [[0] * N for _ in range(N)]
        for x, y in zip(self.slot(i, a), self.slot(i, b)):
            M[x][y] = 1
        return M

    def transposed_elementary(self, i, b, c):
        """Id (x) e_{bc} on block i."""
        N = self.dim
        M = [[0] * N for _ in range(N)]
        n = self.blocks[i][0]
        for a in range(n):
            M[self.slot(i, a)[b]][self.slot(i, a)[c]] = 1
        return M

    def left_order(self):
        """prod_i End(Z^{n_i}) (x) Id."""
        mats = [self.elementary(i, a, b) for i, (n, _) in enumerate(self.blocks)
                for a in range(n) for b in range(n)]
        return MatrixOrder(self.dim, mats)

    def right_order(self):
        """prod_i Id (x) End(Z^{m_i})."""
        mats = [self.transposed_elementary(i, b, c) for i, (_, m) in enumerate(self.blocks)
                for b in range(m) for c in range(m)]
        return MatrixOrder(self.dim, mats)

    def __repr__(self):
        return f"BlockShape({list(self.blocks)})"


class SplitResult:
    __slots__ = ("pieces", "lambdas", "lam")

    def __init__(self, pieces, lambdas, lam):
        self.pieces = pieces
        self.lambdas = lambdas
        self.lam = lam

    def to_json(self):
        return {"lambda": str(self.lam), "Lambda": [L.to_json() for L in self.lambdas],
                "pieces": [[L.to_json() for L in p] for p in self.pieces]}


def _split_sum(shape, lambdas):
    vecs = []
    N = shape.dim
    for i, (n, m) in enumerate(shape.blocks):
        for a in range(n):
            s = shape.slot(i, a)
            for v in lambdas[i].basis:
                w = [0] * N
                for x, y in zip(s, v):
                    w[x] = y
                vecs.append(w)
    return hnf(vecs, N)


def split_decompose(W, shape, lam):
    """Decompose a lattice that is stable under lam * prod End(Z^{n_i}) (x) Id.

    Returns the lattices Lambda_i = sum_a {v : e_{i,a} (x) v in W}; both
    inclusions lam*(sum Z^{n_i} (x) Lambda_i) <= W and
    lam*W <= sum Z^{n_i} (x) Lambda_i are re-checked before returning.
    """
    if lam == 0:
        raise InputError("lambda must be nonzero")
    N = shape.dim
    if W.ambient_rank != N:
        raise InputError(f"lattice rank {W.ambient_rank} does not match shape dimension {N}")
    for i, (n, _) in enumerate(shape.blocks):
        for a in range(n):
            for b in range(n):
                E = shape.elementary(i, a, b)
                for w in W.basis:
                    img = [lam * x for x in matvec(E, w)]
                    if img not in W:
                        raise HypothesisFailure(
                            "lam*E*W is not contained in W",
                            witness={"block": i, "row": a, "col": b, "vector": list(w)})
    pieces, lambdas = [], []
    for i, (n, m) in enumerate(shape.blocks):
        ps = []
        for a in range(n):
            s = shape.slot(i, a)
            coord = hnf([[int(k == x) for k in range(N)] for x in s], N)
            inter = meet(W, coord)
            ps.append(hnf([[v[x] for x in s] for v in inter.basis], m))
        pieces.append(ps)
        lambdas.append(hnf([v for p in ps for v in p.basis], m))
    total = _split_sum(shape, lambdas)
    if not W.contains(total.scaled(lam)):
        raise InvariantViolation("lam*(sum Z^n (x) Lambda) is not inside W")
    if not total.contains(W.scaled(lam)):
        raise InvariantViolation("lam*W is not inside sum Z^n (x) Lambda")
    return SplitResult(pieces, lambdas, lam)


# --------------------------------------------------------- stability constants

def c_of_T(T, reference, two_sided=False):
    """Least c >= 1 with c*T inside reference (and c*reference inside T if two_sided)."""
    if T.ambient_rank != reference.ambient_rank:
        raise InputError("ambient ranks differ")
    if not T.is_full_rank():
        raise InputError("T must have full rank")
    if not reference.is_full_rank():
        raise InputError("reference must have full rank")
    c = 1
    for t in T.basis:
        for x in solve_rows(reference.vectors(), t):
            c = lcm(c, x.denominator)
    if two_sided:
        for r in reference.basis:
            for x in solve_rows(T.vectors(), r):
                c = lcm(c, x.denominator)
    return c


def d1_constant(S, R, T, reference=None, shape=None, two_sided=False):
    """d_S^2 * d_R * c(T)^2 (reduced traces when a BlockShape is given)."""
    for s in S.basis:
        for r in R.basis:
            if not commutes(s, r):
                raise InputError("S and R do not commute")
    if reference is None:
        reference = Lattice.full(T.ambient_rank)
    dS = discriminant(S, shape, "right")
    dR = discriminant(R, shape, "left")
    return dS ** 2 * dR * c_of_T(T, reference, two_sided) ** 2


def _omega_lattice(W, T, R):
    """Rows spanning {c in Q^r : (sum c_j r_j)(W) <= T}, or (None, kernel) if not discrete."""
    N = W.ambient_rank
    Tinv = inverse(T.vectors())  # y = u @ T  <=>  u = y @ Tinv
    mats = R.basis
    A = []
    for r in mats:
        row = []
        for w in W.basis:
            y = matvec(r, w)
            row.extend(sum(y[k] * Tinv[k][j] for k in range(N)) for j in range(N))
        A.append(row)
    D = 1
    for row in A:
        for x in row:
            D = lcm(D, Fraction(x).denominator)
    Aint = [[int(x * D) for x in row] for row in A]
    diag, U, _ = snf(Aint)
    r = len(mats)
    if len(diag) < r or any(d == 0 for d in diag[:r]):
        k = next(j for j in range(r) if j >= len(diag) or diag[j] == 0)
        return None, U[k]
    return [[Fraction(D, diag[j]) * x for x in U[j]] for j in range(r)], None


def _box_values(box):
    vals = {Fraction(p, q) for p in range(-box, box + 1) for q in range(1, box + 1)}
    return sorted(vals)


def d1_verify(W, T, R, S, n, alpha_box=2, reference=None, shape=None, max_alphas=3000):
    """Check the stability bound on one instance.

    The hypothesis (alpha(W) <= N*T implies n*alpha in N*R) is decided two
    ways: exactly, through the lattice of alpha with alpha(W) <= T, and by
    search over a finite box of rational coefficient vectors.  The
    conclusion W >= C*n*T is checked exactly with the matrix-trace constant
    and, given a BlockShape, with the sharper reduced-trace constant.  The
    variant with the two-sided c(T) (c*T <= reference <= T/c) is reported
    alongside as ``conclusion_holds_two_sided``.
    """
    N = W.ambient_rank
    if reference is None:
        reference = Lattice.full(N)
    report = {"n": n}
    for s in S.basis:
        for w in W.basis:
            if matvec(s, w) not in W:
                report.update(precondition_holds=False,
                              witness={"S_element": s, "vector": list(w)})
                return report
    report["precondition_holds"] = True
    C = d1_constant(S, R, T, reference)
    report["C"] = C
    if shape is not None:
        report["C_reduced"] = d1_constant(S, R, T, reference, shape)
    r = R.rank
    omega, killer = _omega_lattice(W, T, R) if W.is_full_rank() else (None, None)
    if omega is None:
        report["minimal_n"] = None
        exact = False
        report["witness"] = {"reason": "a nonzero alpha maps W into N*T for every N",
                             "alpha_coordinates": None if killer is None else [str(x) for x in killer]}
    else:
        nmin = 1
        for row in omega:
            for x in row:
                nmin = lcm(nmin, x.denominator)
        report["minimal_n"] = nmin
        exact = n % nmin == 0
        if not exact:
            bad = next(row for row in omega if any((n * x).denominator != 1 for x in row))
            report["witness"] = {"alpha_coordinates": [str(x) for x in bad], "N": 1}
    report["hypothesis_holds"] = exact

    # finite-box search
    vals = _box_values(alpha_box)
    support = r
    while support > 0 and _count_box(len(vals) - 1, r, support) > max_alphas:
        support -= 1
    report["box"] = {"alpha_box": alpha_box, "max_support": support, "values_per_coordinate": len(vals)}
    box_ok, box_witness = True, None
    Tinv = inverse(T.vectors())
    images = [[[sum(y[k] * Tinv[k][j] for k in range(N)) for j in range(N)]
               for y in (matvec(b, w) for w in W.basis)] for b in R.basis]
    nonzero = [v for v in vals if v != 0]
    for supp in range(1, support + 1):
        for idx in combinations(range(r), supp):
            for coeffs in product(nonzero, repeat=supp):
                ok, wit = _box_check(images, idx, coeffs, n)
                if not ok:
                    box_ok, box_witness = False, wit
                    break
            if not box_ok:
                break
        if not box_ok:
            break
    report["hypothesis_holds_on_box"] = box_ok
    if box_witness:
        report["box_witness"] = box_witness
    if exact and not box_ok:
        raise InvariantViolation("box search contradicts the exact hypothesis decision")

    def holds(c):
        return all([c * n * x for x in t] in W for t in T.basis)

    report["conclusion_holds"] = holds(C)
    if shape is not None:
        report["conclusion_holds_reduced"] = holds(report["C_reduced"])
    C2 = d1_constant(S, R, T, reference, shape, two_sided=True)
    report["C_two_sided"] = C2
    report["conclusion_holds_two_sided"] = holds(C2)
    return report


def _count_box(k, r, support):
    from math import comb
    return sum(comb(r, s) * k ** s for s in range(support + 1))


def _box_check(images, idx, coeffs, n):
    # coordinates of alpha(W) in T's basis
    vec = None
    for j, c in zip(idx, coeffs):
        part = [c * x for blk in images[j] for x in blk]
        vec = part if vec is None else [a + b for a, b in zip(vec, part)]
    if any(x.denominator != 1 for x in vec):
        return True, None  # alpha(W) is not in any N*T
    g = 0
    for x in vec:
        g = gcd(g, int(x))
    if g == 0:
        return False, {"alpha": dict(zip(map(str, idx), map(str, coeffs))), "N": "every"}
    for c in coeffs:
        if (n * c / g).denominator != 1:
            return False, {"alpha": dict(zip(map(str, idx), map(str, coeffs))), "N": g}
    return True, None


# ------------------------------------------------------ random instances

SHAPES = [((1, 1),), ((2, 1),), ((1, 2),), ((1, 1), (1, 1)), ((2, 2),), ((3, 1),),
          ((1, 3),), ((2, 1), (1, 1)), ((1, 2), (1, 1)), ((1, 1), (1, 1), (1, 1)),
          ((4, 1),), ((1, 4),), ((2, 1), (2, 1)), ((1, 2), (1, 2)), ((2, 1), (1, 2))]


def random_d1_instance(rng, max_entry=3):
    """A split instance: R inside prod End(Z^{n_i}) (x) Id, S in its commutant."""
    shape = BlockShape(rng.choice(SHAPES))
    N = shape.dim
    full_R = shape.left_order()
    f = rng.choice([1, 1, 2, 3])
    R = full_R if f == 1 else algebra_closure([[[f * x for x in r] for r in m] for m in full_R.basis], N)
    full_S = commutant(R)
    h = rng.choice([1, 1, 2])
    S = full_S if h == 1 else algebra_closure([[[h * x for x in r] for r in m] for m in full_S.basis], N)
    gens = [[rng.randint(-max_entry, max_entry) for _ in range(N)] for _ in range(N + rng.randint(0, 1))]
    W = hnf(gens, N)
    while True:
        more = [matvec(s, w) for s in S.basis for w in W.basis]
        W2 = hnf(list(W.basis) + more, N)
        if W2 == W:
            break
        W = W2
    if rng.random() < 0.5:
        T = Lattice.full(N)
    else:
        while True:
            T = hnf([[rng.randint(-max_entry, max_entry) for _ in range(N)] for _ in range(N)], N)
            if T.is_full_rank():
                break
    reference = Lattice.full(N) if rng.random() < 0.7 else Lattice.full(N).scaled(rng.choice([2, 3]))
    return {"shape": shape, "R": R, "S": S, "W": W, "T": T, "reference": reference}


def exponent_of_quotient(W):
    if not W.is_full_rank():
        return None
    return quotient_group(W, Lattice.full(W.ambient_rank)).exponent


def _closure_under(W, R):
    N = W.ambient_rank
    while True:
        W2 = hnf(list(W.basis) + [matvec(m, w) for m in R.basis for w in W.basis], N)
        if W2 == W:
            return W
        W = W2


def d1_suite(count=100, seed=0, max_entry=3, n_choices=(1, 2, 3, 4, 6)):
    """Seeded random stability instances with aggregate counts.

    Each instance is checked by d1_verify, and split_decompose is run on the
    R-closure of W with lambda the scalar that puts lambda*End into R.
    """
    rng = random.Random(seed)
    agg = {"instances": 0, "hypothesis_holds": 0, "conclusion_holds": 0, "violations": 0,
           "violations_two_sided": 0, "split_checked": 0}
    witnesses = []
    for k in range(count):
        inst = random_d1_instance(rng, max_entry)
        n = rng.choice(n_choices)
        rep = d1_verify(inst["W"], inst["T"], inst["R"], inst["S"], n, reference=inst["reference"],
                        shape=inst["shape"])
        agg["instances"] += 1
        hyp = rep.get("hypothesis_holds", False)
        agg["hypothesis_holds"] += hyp
        agg["conclusion_holds"] += rep.get("conclusion_holds", False)
        if hyp and not rep["conclusion_holds"]:
            agg["violations"] += 1
            if len(witnesses) < 5:
                witnesses.append({"index": k, "n": n, "shape": list(inst["shape"].blocks),
                                  "W": inst["W"].to_json(), "T": inst["T"].to_json(),
                                  "reference": inst["reference"].to_json(), "C": str(rep["C"])})
        if hyp and not rep["conclusion_holds_two_sided"]:
            agg["violations_two_sided"] += 1
        shape, R = inst["shape"], inst["R"]
        lam = next(f for f in range(1, 7) if all(flatten([[f * x for x in r] for r in m]) in R.lattice
                                                   for m in shape.left_order().basis))
        split_decompose(_closure_under(inst["W"], R), shape, lam)
        agg["split_checked"] += 1
    agg["witnesses"] = witnesses
    return agg
