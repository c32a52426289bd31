"""Finite-level Galois images: unit ideals, torsion orbits, group closures,
ring indices, Kummer images, H^1 and torus isogeny exponents.

Profinite statements are only ever checked at a finite level M (usually a
prime power); matrices act on column vectors mod M.
"""

from collections import deque
from itertools import product
from math import gcd, lcm

from .errors import CapExceeded, HypothesisFailure, InputError, InvariantViolation
from .lattice import (Lattice, hnf, index, join, kernel_mod,
                      orthogonal, quotient_group, rank, saturate, snf)
from .orders import algebra_closure, commutant, commutes

DEFAULT_GROUP_CAP = 10 ** 6


# ------------------------------------------------------------ arithmetic

def is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def primes_up_to(n):
    return [p for p in range(2, n + 1) if is_prime(p)]


def valuation(x, p):
    """p-adic valuation of a nonzero integer."""
    if x == 0:
        raise InputError("valuation of zero")
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def units(M):
    return [a for a in range(1, M) if gcd(a, M) == 1] if M > 1 else [0]


def unit_group_exponent(M):
    """Exponent of (Z/M)^x (Carmichael function)."""
    e = 1
    for a in units(M):
        o, x = 1, a % M
        while x != 1 % M:
            x = x * a % M
            o += 1
        e = lcm(e, o)
    return e


def n_e(e):
    """Product over primes l with (l-1) | e of ((1+l)^e - 1)."""
    if e < 1:
        raise InputError("e must be positive")
    out = 1
    for d in range(1, e + 1):
        if e % d == 0 and is_prime(d + 1):
            out *= (d + 2) ** e - 1
    return out


def _unit_generators(ell, k):
    if ell == 2:
        return [m for m in (-1, 5) if k >= 2 or m == -1]
    for g in range(2, ell * ell):
        if g % ell and pow(g, ell - 1, ell * ell) != 1 and all(
                pow(g, (ell - 1) // q, ell) != 1 for q in primes_up_to(ell - 1) if (ell - 1) % q == 0):
            return [g]
    raise InvariantViolation(f"no primitive root mod {ell}^2")


def _capped_valuation(x, ell, k):
    x %= ell ** k
    return k if x == 0 else valuation(x, ell)


def kummer_valuation(e, ell, k, enumerate_limit=10 ** 5):
    """min over units lambda mod ell^k of v_ell(lambda^e - 1), capped at k.

    The set of lambda with lambda^e = 1 mod ell^j is a subgroup, so the
    minimum over the whole unit group is attained on any generating set.
    Small moduli are also enumerated outright and the two routes compared.
    """
    if not is_prime(ell):
        raise InputError(f"{ell} is not prime")
    if e < 1 or k < 1:
        raise InputError("e and k must be positive")
    mod = ell ** k
    gens = _unit_generators(ell, k)
    vmin = min(_capped_valuation(pow(g % mod, e, mod) - 1, ell, k) for g in gens)
    method = "generators"
    if mod <= enumerate_limit:
        brute = min(_capped_valuation(pow(a, e, mod) - 1, ell, k) for a in units(mod))
        if brute != vmin:
            raise InvariantViolation(f"generator route {vmin} != enumeration {brute}")
        method = "enumeration+generators"
    bound = valuation(n_e(e), ell)
    return {"e": e, "ell": ell, "k": k, "min_valuation": vmin, "capped": vmin == k,
            "n_e_valuation": bound, "bound_ok": vmin <= bound, "method": method}


def l_e_orbit(t, e):
    """Orbit of a torsion point under lambda^e, lambda a unit mod its order."""
    q = t.order
    if q == 1:
        return [t]
    powers = {pow(a, e, q) for a in units(q)}
    return sorted({t * p for p in powers})


# ------------------------------------------------------- matrix groups

def _mat_mod(a, M):
    return tuple(tuple(x % M for x in row) for row in a)


def _mul_mod(a, b, M):
    n, p = len(b), len(b[0])
    return tuple(tuple(sum(r[k] * b[k][j] for k in range(n)) % M for j in range(p)) for r in a)


def _det_int(a):
    a = [list(r) for r in a]
    n = len(a)
    if n == 1:
        return a[0][0]
    return sum((-1) ** j * a[0][j] * _det_int([r[:j] + r[j + 1:] for r in a[1:]]) for j in range(n))


def _identity(n):
    return tuple(tuple(int(i == j) for j in range(n)) for i in range(n))


class FiniteLevelGaloisImage:
    """Group generated by invertible matrices mod M (closure cached)."""

    def __init__(self, level, generators, size=None, affine=False, gamma_rank=0, cap=DEFAULT_GROUP_CAP):
        if level < 2:
            raise InputError("level must be at least 2")
        self.level = M = int(level)
        gens = [_mat_mod(g, M) for g in generators]
        if size is None:
            if not gens:
                raise InputError("matrix size needed when there are no generators")
            size = len(gens[0])
        self.size = int(size)
        for g in gens:
            if len(g) != self.size or any(len(r) != self.size for r in g):
                raise InputError(f"generator is not {self.size}x{self.size}")
            if gcd(_det_int(g), M) != 1:
                raise InputError(f"generator {g} is not invertible mod {M}")
        self.affine = bool(affine)
        self.gamma_rank = int(gamma_rank)
        if self.affine:
            k = self.gamma_rank
            if not 1 <= k < self.size:
                raise InputError("gamma_rank must be between 1 and size-1")
            tail = _identity(k)
            for g in gens:
                if any(g[self.size - k + i][:self.size - k] != (0,) * (self.size - k)
                       or g[self.size - k + i][self.size - k:] != tail[i] for i in range(k)):
                    raise InputError("affine generators must end in the block [0, I]")
        self.generators = gens
        self.cap = cap
        self._elements = None

    @property
    def rho_size(self):
        return self.size - self.gamma_rank if self.affine else self.size

    def elements(self):
        if self._elements is None:
            M, idn = self.level, _identity(self.size)
            seen = {idn}
            queue = deque([idn])
            while queue:
                x = queue.popleft()
                for g in self.generators:
                    y = _mul_mod(x, g, M)
                    if y not in seen:
                        seen.add(y)
                        if len(seen) > self.cap:
                            raise CapExceeded("group_elements", self.cap, len(seen), "group closure")
                        queue.append(y)
            self._elements = frozenset(seen)
        return self._elements

    @property
    def order(self):
        return len(self.elements())

    def __contains__(self, g):
        return _mat_mod(g, self.level) in self.elements()

    def to_json(self):
        out = {"level": self.level, "size": self.size,
               "generators": [[list(r) for r in g] for g in self.generators]}
        if self.affine:
            out.update(affine=True, gamma_rank=self.gamma_rank)
        return out

    @classmethod
    def from_json(cls, obj, cap=DEFAULT_GROUP_CAP):
        try:
            return cls(obj["level"], obj["generators"], obj.get("size"), obj.get("affine", False),
                       obj.get("gamma_rank", 0), cap)
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad group description: {exc}") from exc


def gl_generators(n, M):
    """Generators of GL(n, Z/M): elementary transvections plus diagonal units."""
    gens = []
    for i in range(n):
        for j in range(n):
            if i != j:
                g = [list(r) for r in _identity(n)]
                g[i][j] = 1
                gens.append(g)
    for u in units(M):
        if u != 1:
            g = [list(r) for r in _identity(n)]
            g[0][0] = u
            gens.append(g)
    return gens


def serre_exponent(U):
    """Least e with lambda^e * I in U for every unit lambda; None if none up to exp((Z/M)^x)."""
    if U.affine:
        raise InputError("serre_exponent needs a non-affine group")
    M, n = U.level, U.size
    elems = U.elements()
    us = units(M)
    top = unit_group_exponent(M)
    for e in range(1, top + 1):
        if all(tuple(tuple(pow(lam, e, M) * int(i == j) for j in range(n)) for i in range(n)) in elems
               for lam in us):
            return e
    return None


def faltings_index(R, U, ell, k):
    """Index of the ring generated by U inside commutant(R), both mod ell^k."""
    if not is_prime(ell):
        raise InputError(f"{ell} is not prime")
    mod = ell ** k
    if U.level != mod:
        raise InputError(f"group level {U.level} differs from {ell}^{k}")
    if U.affine or U.size != R.n:
        raise InputError("group and order act on different spaces")
    for g in U.generators:
        for r in R.basis:
            if not commutes(g, r, mod):
                raise HypothesisFailure("generator does not commute with the order",
                                        witness={"generator": [list(x) for x in g], "order_element": r},
                                        stage="commutation")
    Z = commutant(R)
    big = hnf(Z.lattice.vectors(), R.n ** 2, mod)
    ring = algebra_closure([[list(r) for r in g] for g in U.generators], R.n, mod).lattice
    if not big.contains(ring):
        raise HypothesisFailure("generated ring is not inside the reduced commutant", stage="containment")
    return index(ring, big)


def _m_block(g, split, k):
    return tuple(g[i][split + j] for i in range(split) for j in range(k))


def affine_kummer_image(U, gamma_rank=None, constants=None):
    """Subgroup of Hom((Z/M)^k, (Z/M)^2g) cut out by elements with trivial linear part."""
    if not U.affine:
        raise InputError("affine_kummer_image needs an affine group")
    k = U.gamma_rank if gamma_rank is None else gamma_rank
    if k != U.gamma_rank:
        raise InputError("gamma_rank does not match the group")
    M, s = U.level, U.rho_size
    idn = _identity(s)
    blocks = set()
    for g in U.elements():
        if all(g[i][:s] == idn[i] for i in range(s)):
            blocks.add(_m_block(g, s, k))
    # restriction to the kernel is a homomorphism: its image must be a subgroup
    for a in blocks:
        for b in blocks:
            if tuple((x + y) % M for x, y in zip(a, b)) not in blocks:
                raise InvariantViolation("m-blocks of the kernel are not closed under addition")
    dim = s * k
    W = hnf([list(b) for b in blocks], dim, M)
    idx = index(W, Lattice.full(dim))
    if idx * len(blocks) != M ** dim:
        raise InvariantViolation(f"index {idx} disagrees with {len(blocks)} enumerated blocks")
    out = {"W": W, "kummer_index": idx, "kernel_size": len(blocks), "level": M, "dim": dim}
    if constants:
        kappa = 1
        for key in ("c_prime", "degree", "C"):
            if key not in constants:
                raise InputError(f"missing constant {key}")
            kappa *= int(constants[key])
        out["kappa"] = kappa
    return out


# ---------------------------------------------------------------- H^1

def h1_annihilation(G, candidates=(), max_order=2000):
    """H^1(G, (Z/M)^m) by cocycles modulo coboundaries, plus annihilator checks."""
    if G.affine:
        raise InputError("h1_annihilation acts on (Z/M)^m by the full matrices")
    elems = G.elements()
    if len(elems) > max_order:
        raise CapExceeded("group_order", max_order, len(elems), "h1_annihilation")
    M, m = G.level, G.size
    order = sorted(elems)
    pos = {g: i for i, g in enumerate(order)}
    nv = len(order) * m
    one = pos[_identity(m)]
    rows = [[int(i == one * m + r) for i in range(nv)] for r in range(m)]
    # f(g s) - f(g) - g f(s) = 0 for g in G and generators s
    for g in order:
        for s in G.generators:
            gs = _mul_mod(g, s, M)
            for r in range(m):
                row = [0] * nv
                row[pos[gs] * m + r] += 1
                row[pos[g] * m + r] -= 1
                for c in range(m):
                    row[pos[s] * m + c] -= g[r][c]
                rows.append([x % M for x in row])
    cocycles = kernel_mod(rows, M, nv)

    def coboundary(a):
        v = []
        for g in order:
            v.extend((sum(g[r][c] * a[c] for c in range(m)) - a[r]) % M for r in range(m))
        return v

    cob = hnf([coboundary([int(i == j) for j in range(m)]) for i in range(m)], nv, M)
    if not cocycles.contains(cob):
        raise InvariantViolation("coboundaries are not cocycles")
    H = quotient_group(cob, cocycles)

    def kills(n):
        return all([n * x for x in z] in cob for z in cocycles.basis)

    checks = [{"n": int(n), "annihilates": kills(int(n))} for n in candidates]
    sah = []
    for z in order:
        if all(_mul_mod(z, g, M) == _mul_mod(g, z, M) for g in G.generators):
            # (z - 1) f lies in B^1 for every cocycle f
            twisted_ok = all(
                [x for gi in range(len(order))
                 for x in [sum(((z[r][c] - int(r == c)) * zc[gi * m + c]) for c in range(m)) % M
                           for r in range(m)]] in cob
                for zc in cocycles.basis)
            entry = {"element": [list(r) for r in z], "twist_kills": twisted_ok}
            lam = z[0][0]
            if z == tuple(tuple(lam * int(i == j) for j in range(m)) for i in range(m)):
                entry["scalar"] = lam
                entry["scalar_minus_one_kills"] = kills((lam - 1) % M)
            if not twisted_ok or entry.get("scalar_minus_one_kills") is False:
                raise InvariantViolation(f"central element {z} fails to annihilate H^1")
            sah.append(entry)
    return {"h1_invariant_factors": list(H.invariant_factors), "h1_order": H.order,
            "group_order": len(order), "annihilators_verified": checks, "sah_checks": sah}


# ------------------------------------------------------- torus isogenies

class CharacterLatticeMap:
    """Injective map X(S) -> X(T); columns are the images of a basis of X(S)."""

    def __init__(self, matrix):
        self.matrix = [list(map(int, r)) for r in matrix]
        if not self.matrix or not self.matrix[0]:
            raise InputError("empty character map")
        self.target_rank = len(self.matrix)
        self.source_rank = len(self.matrix[0])
        if any(len(r) != self.source_rank for r in self.matrix):
            raise InputError("ragged matrix")
        if rank(self.matrix) != self.source_rank:
            raise InputError("character map is not injective")

    def image(self):
        return hnf([list(c) for c in zip(*self.matrix)], self.target_rank)

    def compose(self, other):
        """self after other: X(U) -> X(S) -> X(T)."""
        if other.target_rank != self.source_rank:
            raise InputError("maps are not composable")
        prod = [[sum(a * b for a, b in zip(r, c)) for c in zip(*other.matrix)] for r in self.matrix]
        return CharacterLatticeMap(prod)

    def to_json(self):
        return {"matrix": self.matrix}


def isogeny_exponent(f, detail=False):
    """Exponent of sat(Y)/Y for the image Y; a complement of sat(Y) is the witness."""
    Y = f.image()
    sat = saturate(Y)
    e = quotient_group(Y, sat).exponent
    if not detail:
        return e
    _, _, _, Vi = snf(sat.vectors(), with_inverse=True)
    comp = hnf(Vi[sat.rank:], f.target_rank)
    if join(sat, comp) != Lattice.full(f.target_rank) or comp.rank + sat.rank != f.target_rank:
        raise InvariantViolation("complement does not split the character lattice")
    return {"e": e, "saturation": sat, "complement": comp,
            "kernel_invariant_factors": list(quotient_group(Y, sat).invariant_factors)}


def invariant_complement_exponent(Y):
    """Exponent of Z^r / (Y + Y^perp): the kernel for the orthogonal (group-invariant) complement."""
    r = Y.ambient_rank
    q = quotient_group(join(Y, orthogonal(Y)), Lattice.full(r))
    return q.exponent


_TRANSITIVE = {
    1: {"trivial": [[0]]},
    2: {"S2": [[1, 0]]},
    3: {"A3": [[1, 2, 0]], "S3": [[1, 2, 0], [1, 0, 2]]},
}


def _group_from_gens(gens):
    n = len(gens[0])
    seen = {tuple(range(n))}
    queue = deque(seen)
    while queue:
        p = queue.popleft()
        for g in gens:
            q = tuple(g[p[i]] for i in range(n))
            if q not in seen:
                seen.add(q)
                queue.append(q)
    return sorted(seen)


def _orbit_module(perms, v):
    return [[v[p.index(i)] for i in range(len(v))] for p in perms]


def submodules(perms, N, cap=20000):
    """Distinct Z[G]-submodules of Z^r generated by vectors in {-N..N}^r."""
    r = len(perms[0])
    cyclic = []
    seen_c = set()
    for v in product(range(-N, N + 1), repeat=r):
        if any(v):
            C = hnf(_orbit_module(perms, v), r)
            if C not in seen_c:
                seen_c.add(C)
                cyclic.append(C)
    zero = Lattice.zero(r)
    found = {zero}
    queue = deque([zero])
    while queue:
        Y = queue.popleft()
        for C in cyclic:
            if Y.contains(C):
                continue
            Z = join(Y, C)
            if Z not in found:
                found.add(Z)
                if len(found) > cap:
                    raise CapExceeded("submodules", cap, len(found), "e_r_N")
                queue.append(Z)
    return sorted(found, key=lambda L: (L.rank, L.basis))


def e_of_group(group, F):
    """e(G, F) for a named transitive group and generating vectors F."""
    rp = len(F[0]) if F else None
    for size, groups in _TRANSITIVE.items():
        if group in groups and (rp is None or rp == size):
            perms = _group_from_gens(groups[group])
            break
    else:
        raise InputError(f"unknown transitive group {group} on {rp} points")
    rows = [row for v in F for row in _orbit_module(perms, list(v))]
    Y = hnf(rows, len(perms[0])) if rows else Lattice.zero(len(perms[0]))
    if Y.rank == 0:
        return {"Y": Y, "e": 1, "e_invariant_complement": 1}
    e = isogeny_exponent(CharacterLatticeMap([list(c) for c in zip(*Y.basis)]))
    return {"Y": Y, "e": e, "e_invariant_complement": invariant_complement_exponent(Y)}


def e_r_N(r, N, cap=20000):
    """All (G, Y) pairs for transitive G <= S_r' (r' <= r) with gcd and lcm aggregates."""
    if not (1 <= r <= 3 and 1 <= N <= 2):
        raise CapExceeded("r_N", "r<=3,N<=2", f"r={r},N={N}", "e_r_N")
    pairs = []
    for rp in range(1, r + 1):
        for name, gens in _TRANSITIVE[rp].items():
            perms = _group_from_gens(gens)
            for Y in submodules(perms, N, cap):
                if Y.rank == 0:
                    e = e_inv = 1
                else:
                    cols = [list(c) for c in zip(*Y.basis)]
                    e = isogeny_exponent(CharacterLatticeMap(cols))
                    e_inv = invariant_complement_exponent(Y)
                pairs.append({"r": rp, "group": name, "Y": [list(b) for b in Y.basis],
                              "e": e, "e_invariant_complement": e_inv})
    g = l = 0
    li = 1
    for p in pairs:
        g = gcd(g, p["e"])
        l = lcm(l, p["e"]) if l else p["e"]
        li = lcm(li, p["e_invariant_complement"])
    return {"r": r, "N": N, "pairs": pairs, "gcd": g, "lcm": l, "lcm_invariant_complement": li}
