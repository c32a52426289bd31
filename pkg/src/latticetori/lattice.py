"""Exact arithmetic on subgroups of Z^N and finite abelian groups.

Everything here works over Python ints and ``fractions.Fraction``; there is
no floating point.  Lattices are stored by a canonical row-echelon Hermite
basis, so two lattices are equal exactly when their stored bases agree.

>>> hnf([(1, 2), (2, 4), (3, 6)]).basis
((1, 2),)
>>> quotient_group(hnf([(1, 1), (1, -1)]), Lattice.full(2)).invariant_factors
(2,)
"""

from fractions import Fraction
from itertools import product
from math import gcd, lcm

from .errors import InputError

class _Infinite:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


class LatticeError(InputError):
    pass


class ContainmentError(LatticeError):
    pass


def xgcd(a, b):
    """Return (g, x, y) with g = gcd(a, b) >= 0 and a*x + b*y = g."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, r = divmod(a, b)
        a, b = b, r
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        return -a, -x0, -y0
    return a, x0, y0


# ---------------------------------------------------------------- matrices

def identity(n):
    return [[int(i == j) for j in range(n)] for i in range(n)]


def matmul(a, b):
    bt = list(zip(*b))
    return [[sum(x * y for x, y in zip(row, col)) for col in bt] for row in a]


def transpose(a):
    return [list(r) for r in zip(*a)]


def matvec(a, v):
    return [sum(x * y for x, y in zip(row, v)) for row in a]


def det(a):
    """Exact determinant (Fraction elimination)."""
    n = len(a)
    m = [[Fraction(x) for x in row] for row in a]
    d = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if m[r][c] != 0), None)
        if p is None:
            return 0
        if p != c:
            m[c], m[p] = m[p], m[c]
            d = -d
        d *= m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] / m[c][c]
            if f:
                for k in range(c, n):
                    m[r][k] -= f * m[c][k]
    return int(d) if d.denominator == 1 else d


def rref(rows):
    """Reduced row echelon form over Q; returns (rows, pivot_columns)."""
    m = [[Fraction(x) for x in r] for r in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows):
    return len(rref(rows)[1])


def nullspace(rows, ncols=None):
    """Basis (over Q) of {x : rows @ x = 0}."""
    if ncols is None:
        ncols = len(rows[0])
    red, piv = rref(rows) if rows else ([], [])
    free = [c for c in range(ncols) if c not in piv]
    out = []
    for f in free:
        x = [Fraction(0)] * ncols
        x[f] = Fraction(1)
        for r, p in zip(red, piv):
            x[p] = -r[f]
        out.append(x)
    return out


def inverse(a):
    n = len(a)
    aug = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(a)]
    red, piv = rref(aug)
    if piv[:n] != list(range(n)) or len(red) < n:
        raise LatticeError("matrix is singular")
    return [r[n:] for r in red]


def solve_rows(basis, v):
    """Rational coefficients c with sum c_i basis_i = v, or None."""
    if not basis:
        return [] if all(x == 0 for x in v) else None
    cols = transpose(basis)
    aug = [list(c) + [x] for c, x in zip(cols, v)]
    red, piv = rref(aug)
    k = len(basis)
    if k in piv:
        return None
    c = [Fraction(0)] * k
    for r, p in zip(red, piv):
        c[p] = r[k]
    return c


def clear_denominators(v):
    d = 1
    for x in v:
        d = lcm(d, Fraction(x).denominator)
    w = [int(Fraction(x) * d) for x in v]
    g = 0
    for x in w:
        g = gcd(g, x)
    return [x // g for x in w] if g > 1 else w


# -------------------------------------------------------------- echelon core

def _echelon(rows, ncols, modulus=None):
    """Incremental integer row reduction; returns dict pivot_col -> row."""
    piv = {}
    if modulus:
        for j in range(ncols):
            piv[j] = [modulus if i == j else 0 for i in range(ncols)]
    for r in rows:
        _insert(piv, r, ncols, modulus)
    return piv


def _insert(piv, v, ncols, modulus):
    v = list(v)
    if modulus:
        v = [x % modulus for x in v]
    for j in range(ncols):
        if v[j] == 0:
            continue
        p = piv.get(j)
        if p is None:
            if v[j] < 0:
                v = [-x for x in v]
            piv[j] = v
            return
        a, b = p[j], v[j]
        g, x, y = xgcd(a, b)
        ag, bg = a // g, b // g
        newp = [x * pi + y * vi for pi, vi in zip(p, v)]
        v = [ag * vi - bg * pi for pi, vi in zip(p, v)]
        if modulus:
            newp = newp[: j + 1] + [t % modulus for t in newp[j + 1:]]
            v = [t % modulus for t in v]
        piv[j] = newp


def _finish(piv):
    cols = sorted(piv)
    rows = [list(piv[c]) for c in cols]
    for i, c in enumerate(cols):
        p = rows[i][c]
        for k in range(i):
            q = rows[k][c] // p
            if q:
                rows[k] = [a - q * b for a, b in zip(rows[k], rows[i])]
    return rows


# ----------------------------------------------------------------- lattices

class Lattice:
    """Subgroup of Z^N in canonical Hermite form (rows are basis vectors)."""

    __slots__ = ("ambient_rank", "basis")

    def __init__(self, ambient_rank, basis=()):
        self.ambient_rank = ambient_rank
        self.basis = tuple(tuple(r) for r in basis)

    @classmethod
    def full(cls, n):
        return cls(n, identity(n))

    @classmethod
    def zero(cls, n):
        return cls(n, ())

    @property
    def rank(self):
        return len(self.basis)

    def is_full_rank(self):
        return self.rank == self.ambient_rank

    def __eq__(self, other):
        return (isinstance(other, Lattice) and self.ambient_rank == other.ambient_rank
                and self.basis == other.basis)

    def __hash__(self):
        return hash((self.ambient_rank, self.basis))

    def __repr__(self):
        return f"Lattice({self.ambient_rank}, {[list(b) for b in self.basis]})"

    def coordinates(self, v):
        """Integer coordinates of v in the stored basis, or None if v is not in L."""
        v = list(v)
        out = []
        for b in self.basis:
            j = next(i for i, x in enumerate(b) if x)
            q, r = divmod(v[j], b[j])
            if r:
                return None
            out.append(q)
            if q:
                v = [x - q * y for x, y in zip(v, b)]
        if any(v):
            return None
        return out

    def __contains__(self, v):
        if any(Fraction(x).denominator != 1 for x in v):
            return False
        return self.coordinates([int(x) for x in v]) is not None

    def contains(self, other):
        return all(b in self for b in other.basis)

    def __add__(self, other):
        return join(self, other)

    def scaled(self, c):
        return hnf([[c * x for x in b] for b in self.basis], self.ambient_rank)

    def vectors(self):
        return [list(b) for b in self.basis]

    def to_json(self):
        return {"ambient_rank": self.ambient_rank,
                "basis": [[str(x) for x in b] for b in self.basis]}

    @classmethod
    def from_json(cls, obj):
        n = int(obj["ambient_rank"])
        return hnf([[int(x) for x in r] for r in obj.get("basis", [])], n)


def hnf(rows, ambient_rank=None, modulus=None):
    """Canonical lattice spanned by integer rows.

    With ``modulus`` D the lattice spanned by rows together with D*Z^N is
    returned, using modular reduction to keep entries small.
    """
    rows = [list(r) for r in rows]
    if ambient_rank is None:
        if not rows:
            raise LatticeError("ambient rank needed for an empty row list")
        ambient_rank = len(rows[0])
    for r in rows:
        if len(r) != ambient_rank:
            raise LatticeError("inconsistent row lengths")
        for x in r:
            if not isinstance(x, int):
                if isinstance(x, Fraction) and x.denominator == 1:
                    continue
                raise LatticeError(f"non-integer entry {x!r}")
    rows = [[int(x) for x in r] for r in rows]
    piv = _echelon(rows, ambient_rank, modulus)
    return Lattice(ambient_rank, _finish(piv))


# ------------------------------------------------------------ Smith form

def snf(matrix, with_inverse=False):
    """Smith normal form: returns (diagonal, U, V) with U*A*V diagonal.

    The diagonal has min(m, n) entries, nonnegative, each dividing the
    next, zeros last.  With ``with_inverse`` also returns V^{-1}.
    """
    a = [list(map(int, r)) for r in matrix]
    m = len(a)
    if m == 0 or len(a[0]) == 0:
        raise LatticeError("empty matrix")
    n = len(a[0])
    U = identity(m)
    V = identity(n)
    Vi = identity(n)

    def swap_rows(i, j):
        a[i], a[j] = a[j], a[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for r in a:
            r[i], r[j] = r[j], r[i]
        for r in V:
            r[i], r[j] = r[j], r[i]
        Vi[i], Vi[j] = Vi[j], Vi[i]

    def add_row(dst, src, f):  # row_dst += f * row_src
        a[dst] = [x + f * y for x, y in zip(a[dst], a[src])]
        U[dst] = [x + f * y for x, y in zip(U[dst], U[src])]

    def add_col(dst, src, f):  # col_dst += f * col_src
        for r in a:
            r[dst] += f * r[src]
        for r in V:
            r[dst] += f * r[src]
        Vi[src] = [x - f * y for x, y in zip(Vi[src], Vi[dst])]

    for t in range(min(m, n)):
        while True:
            best = None
            for i in range(t, m):
                for j in range(t, n):
                    if a[i][j] and (best is None or abs(a[i][j]) < abs(a[best[0]][best[1]])):
                        best = (i, j)
            if best is None:
                break
            swap_rows(t, best[0])
            swap_cols(t, best[1])
            p = a[t][t]
            dirty = False
            for i in range(t + 1, m):
                if a[i][t]:
                    q = a[i][t] // p
                    add_row(i, t, -q)
                    if a[i][t]:
                        dirty = True
            for j in range(t + 1, n):
                if a[t][j]:
                    q = a[t][j] // p
                    add_col(j, t, -q)
                    if a[t][j]:
                        dirty = True
            if dirty:
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if a[i][j] % p), None)
            if bad is None:
                break
            add_row(t, bad[0], 1)
        if a[t][t] < 0:
            a[t] = [-x for x in a[t]]
            U[t] = [-x for x in U[t]]
    diag = [a[i][i] for i in range(min(m, n))]
    if with_inverse:
        return diag, U, V, Vi
    return diag, U, V


# ------------------------------------------------------------- kernels

def integer_kernel(rows, ncols=None):
    """Saturated lattice {x in Z^n : rows @ x = 0} (rows may be rational)."""
    if ncols is None:
        ncols = len(rows[0])
    rows = [clear_denominators(r) for r in rows if any(r)]
    k = len(rows)
    aug = [[r[i] for r in rows] + [int(i == j) for j in range(ncols)] for i in range(ncols)]
    piv = _echelon(aug, k + ncols)
    out = [r[k:] for c, r in sorted(piv.items()) if c >= k]
    return hnf(out, ncols)


def kernel_mod(rows, modulus, ncols=None):
    """Lattice {x in Z^n : rows @ x == 0 mod modulus} (contains modulus*Z^n)."""
    if ncols is None:
        ncols = len(rows[0])
    k = len(rows)
    aug = [[r[i] for r in rows] + [int(i == j) for j in range(ncols)] for i in range(ncols)]
    piv = _echelon(aug, k + ncols, modulus)
    out = [r[k:] for c, r in sorted(piv.items()) if c >= k]
    return hnf(out, ncols, modulus)


def orthogonal(L):
    """Integer vectors orthogonal (dot product) to every vector of L."""
    if L.rank == 0:
        return Lattice.full(L.ambient_rank)
    return integer_kernel(L.vectors(), L.ambient_rank)


def saturate(L):
    """(L tensor Q) intersected with Z^N."""
    if L.rank == 0:
        return L
    return orthogonal(orthogonal(L))


# ------------------------------------------------------- index & quotients

class FiniteAbelianGroup:
    __slots__ = ("invariant_factors",)

    def __init__(self, factors=()):
        fs = tuple(int(d) for d in factors if d != 1)
        for d in fs:
            if d < 2:
                raise LatticeError(f"bad invariant factor {d}")
        for x, y in zip(fs, fs[1:]):
            if y % x:
                raise LatticeError("divisibility chain violated")
        self.invariant_factors = fs

    @property
    def order(self):
        o = 1
        for d in self.invariant_factors:
            o *= d
        return o

    @property
    def exponent(self):
        return self.invariant_factors[-1] if self.invariant_factors else 1

    def elements(self):
        return product(*[range(d) for d in self.invariant_factors])

    def __eq__(self, other):
        return isinstance(other, FiniteAbelianGroup) and self.invariant_factors == other.invariant_factors

    def __hash__(self):
        return hash(self.invariant_factors)

    def __repr__(self):
        if not self.invariant_factors:
            return "FiniteAbelianGroup(trivial)"
        return "FiniteAbelianGroup(" + " x ".join(f"Z/{d}" for d in self.invariant_factors) + ")"

    @classmethod
    def from_diagonal(cls, diag):
        return cls([d for d in diag if d != 1])


def _expression_matrix(sub, sup):
    if sub.ambient_rank != sup.ambient_rank:
        raise LatticeError("ambient ranks differ")
    coords = []
    for b in sub.basis:
        c = sup.coordinates(b)
        if c is None:
            raise ContainmentError(f"{list(b)} is not in the larger lattice")
        coords.append(c)
    return coords


def index(sub, sup):
    """[sup : sub] as an int, or INFINITE on a rank drop."""
    coords = _expression_matrix(sub, sup)
    if sub.rank < sup.rank:
        return INFINITE
    if sup.rank == 0:
        return 1
    return abs(det(coords))


def quotient_group(sub, sup):
    coords = _expression_matrix(sub, sup)
    if sub.rank < sup.rank:
        return INFINITE
    if sup.rank == 0:
        return FiniteAbelianGroup()
    diag, _, _ = snf(coords)
    return FiniteAbelianGroup.from_diagonal(diag)


def join(a, b):
    if a.ambient_rank != b.ambient_rank:
        raise LatticeError("ambient ranks differ")
    return hnf(a.vectors() + b.vectors(), a.ambient_rank)


def meet(a, b):
    if a.ambient_rank != b.ambient_rank:
        raise LatticeError("ambient ranks differ")
    N = a.ambient_rank
    if a.rank == 0 or b.rank == 0:
        return Lattice.zero(N)
    # u*A = w*B  <=>  (u, w) in left kernel of [A; -B]
    stacked = a.vectors() + [[-x for x in r] for r in b.vectors()]
    ker = integer_kernel(transpose(stacked), len(stacked))
    vecs = [[sum(k[i] * a.basis[i][j] for i in range(a.rank)) for j in range(N)]
            for k in ker.basis]
    return hnf(vecs, N)


class ScaledLattice:
    """The rational lattice (1/denominator) * L for an integral lattice L."""

    __slots__ = ("lattice", "denominator")

    def __init__(self, lattice, denominator=1):
        g = denominator
        for b in lattice.basis:
            for x in b:
                g = gcd(g, x)
        if g > 1:
            lattice = hnf([[x // g for x in b] for b in lattice.basis], lattice.ambient_rank)
            denominator //= g
        self.lattice = lattice
        self.denominator = denominator

    @classmethod
    def from_rational_rows(cls, rows, n):
        d = 1
        for r in rows:
            for x in r:
                d = lcm(d, Fraction(x).denominator)
        return cls(hnf([[int(Fraction(x) * d) for x in r] for r in rows], n), d)

    def rows(self):
        return [[Fraction(x, self.denominator) for x in b] for b in self.lattice.basis]

    def __eq__(self, other):
        return (isinstance(other, ScaledLattice) and self.denominator == other.denominator
                and self.lattice == other.lattice)

    def __hash__(self):
        return hash((self.lattice, self.denominator))

    def __repr__(self):
        return f"(1/{self.denominator})*{self.lattice!r}"

    def to_json(self):
        return {"denominator": str(self.denominator), "lattice": self.lattice.to_json()}


def dual(a):
    """{y in span(a) : y.x in Z for all x in a}, as a ScaledLattice."""
    N = a.ambient_rank
    if a.rank == 0:
        return ScaledLattice(Lattice.zero(N))
    B = a.vectors()
    G = matmul(B, transpose(B))
    Gi = inverse(G)
    rows = [[sum(Gi[i][k] * B[k][j] for k in range(len(B))) for j in range(N)]
            for i in range(len(B))]
    return ScaledLattice.from_rational_rows(rows, N)


def lattice_meet_join_dual(a, b):
    return meet(a, b), join(a, b), dual(a)


# ------------------------------------------------------- torsion vectors

def _frac_mod1(x):
    x = Fraction(x)
    return x - (x.numerator // x.denominator)


class TorsionVector:
    """A point of Q^N / Z^N with coordinates normalised into [0, 1)."""

    __slots__ = ("coords",)

    def __init__(self, coords):
        self.coords = tuple(_frac_mod1(c) for c in coords)

    @classmethod
    def zero(cls, n):
        return cls([0] * n)

    @property
    def ambient_rank(self):
        return len(self.coords)

    @property
    def order(self):
        o = 1
        for c in self.coords:
            o = lcm(o, c.denominator)
        return o

    def __add__(self, other):
        return TorsionVector([a + b for a, b in zip(self.coords, other.coords)])

    def __sub__(self, other):
        return TorsionVector([a - b for a, b in zip(self.coords, other.coords)])

    def __neg__(self):
        return TorsionVector([-a for a in self.coords])

    def __mul__(self, k):
        return TorsionVector([k * a for a in self.coords])

    __rmul__ = __mul__

    def is_zero(self):
        return all(c == 0 for c in self.coords)

    def __eq__(self, other):
        return isinstance(other, TorsionVector) and self.coords == other.coords

    def __hash__(self):
        return hash(self.coords)

    def __lt__(self, other):
        return self.coords < other.coords

    def __repr__(self):
        return "TorsionVector(" + ", ".join(str(c) for c in self.coords) + ")"

    def to_json(self):
        return [frac_to_str(c) for c in self.coords]

    @classmethod
    def from_json(cls, obj):
        return cls([parse_fraction(x) for x in obj])


def frac_to_str(x):
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def parse_fraction(s):
    if isinstance(s, bool):
        raise LatticeError("boolean is not a number")
    if isinstance(s, (int, Fraction)):
        return Fraction(s)
    if isinstance(s, str):
        return Fraction(s.strip())
    raise LatticeError(f"expected an exact number, got {s!r}")


# ---------------------------------------------------- lifting through kernels

def _apply(phi, x, target):
    return tuple(sum(c * xi for c, xi in zip(row, x)) % m for row, m in zip(phi, target))


def lift_kernel_check(phi, n, source, target):
    """Exhaustively check the kernel-lifting property for phi: A -> B.

    ``source`` and ``target`` list the cyclic orders of A = sum Z/a_j and
    B = sum Z/b_i; ``phi`` is the len(target) x len(source) integer matrix.
    If n kills ker(phi), then n*x != 0 must force phi(x) != 0 and
    phi(x) -> n*x is a well-defined map on the image.
    """
    source = [int(a) for a in source]
    target = [int(b) for b in target]
    if any(a < 1 for a in source + target):
        raise LatticeError("only finite cyclic factors can be enumerated")
    for j, a in enumerate(source):
        img = _apply(phi, [a if i == j else 0 for i in range(len(source))], target)
        if any(img):
            raise LatticeError(f"phi is not well defined on generator {j}")
    elems = list(product(*[range(a) for a in source]))
    zero_t = tuple([0] * len(target))

    def times_n(x):
        return tuple((n * xi) % a for xi, a in zip(x, source))

    kernel = [x for x in elems if _apply(phi, x, target) == zero_t]
    report = {"kernel_size": len(kernel), "n": n, "source": source, "target": target}
    bad = next((x for x in kernel if any(times_n(x))), None)
    if bad is not None:
        report.update(hypothesis_holds=False, conclusion_holds=None,
                      witness={"kernel_element": list(bad)})
        return report
    report["hypothesis_holds"] = True
    induced = {}
    for x in elems:
        y, nx = _apply(phi, x, target), times_n(x)
        if any(nx) and y == zero_t:
            report.update(conclusion_holds=False, witness={"element": list(x)})
            return report
        if induced.setdefault(y, nx) != nx:
            report.update(conclusion_holds=False, witness={"element": list(x), "clash": "induced map"})
            return report
    report.update(conclusion_holds=True, induced_map_size=len(induced))
    return report
