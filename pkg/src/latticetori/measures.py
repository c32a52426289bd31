"""Packaged measures on the torus (R/Z)^N and their limits.

A packaged measure averages Haar measure on the closed subgroup G (stored
by its annihilator lattice), translated by each point of the orbit of a
torsion point t under unit e-th powers, and by a fixed offset k.  All of
its Fourier coefficients are cyclotomic numbers when k is rational.
"""

import cmath
from fractions import Fraction
from itertools import combinations, product
from math import gcd

import numpy as np

from .cyclotomic import Cyclotomic
from .errors import InputError, InvariantViolation
from .galois import l_e_orbit, units
from .lattice import (Lattice, TorsionVector, _frac_mod1, frac_to_str, hnf, integer_kernel,
                      meet, orthogonal, parse_fraction, quotient_group, rank, rref, saturate, snf)

DEFAULT_CHECK_BOX = 2


class UnsupportedCombination(InputError):
    pass


class DivergenceError(InputError):
    """A declared pattern has no limit."""


def _exact(x):
    if isinstance(x, float):
        return x
    return parse_fraction(x) if not isinstance(x, Fraction) else x


def char_box(N, box):
    return product(range(-box, box + 1), repeat=N)


class PackagedMeasure:
    """Average of Haar(G + t' + k) over t' in the unit-power orbit of t; G = annihilator^perp."""

    def __init__(self, N, annihilator=None, t=None, k=None, e=1):
        self.N = int(N)
        self.annihilator = annihilator if annihilator is not None else Lattice.zero(self.N)
        if self.annihilator.ambient_rank != self.N:
            raise InputError("annihilator lives in the wrong rank")
        self.t = t if t is not None else TorsionVector.zero(self.N)
        if self.t.ambient_rank != self.N:
            raise InputError("torsion point has the wrong length")
        k = [0] * self.N if k is None else list(k)
        if len(k) != self.N:
            raise InputError("offset has the wrong length")
        self.k = tuple(_frac_mod1(x) if not isinstance(x, float) else x % 1.0 for x in map(_exact, k))
        if e < 1:
            raise InputError("e must be positive")
        self.e = int(e)
        self._orbit = None

    @property
    def exact(self):
        return not any(isinstance(x, float) for x in self.k)

    @property
    def orbit(self):
        if self._orbit is None:
            self._orbit = l_e_orbit(self.t, self.e)
        return self._orbit

    def without_offset(self):
        return PackagedMeasure(self.N, self.annihilator, self.t, None, self.e)

    @property
    def dimension(self):
        return self.N - self.annihilator.rank

    def __repr__(self):
        return (f"PackagedMeasure(N={self.N}, annihilator={[list(b) for b in self.annihilator.basis]}, "
                f"t={self.t}, k={[str(x) for x in self.k]}, e={self.e})")

    def to_json(self):
        return {"N": self.N, "annihilator": self.annihilator.to_json()["basis"], "t": self.t.to_json(),
                "k": [frac_to_str(x) if isinstance(x, Fraction) else {"approx": x} for x in self.k],
                "e": self.e}

    @classmethod
    def from_json(cls, obj):
        N = int(obj["N"])
        ann = hnf(obj.get("annihilator", []), N) if obj.get("annihilator") else Lattice.zero(N)
        t = TorsionVector.from_json(obj["t"]) if obj.get("t") else None
        k = None
        if obj.get("k"):
            k = [float(x["approx"]) if isinstance(x, dict) else parse_fraction(x) for x in obj["k"]]
        return cls(N, ann, t, k, obj.get("e", 1))


def _dot(chi, v):
    return sum(Fraction(c) * x for c, x in zip(chi, v))


def orbit_moment(mu, chi):
    """(1/#orbit) * sum over the orbit of exp(2 pi i chi.t') as a cyclotomic number."""
    # with x = chi.t mod 1, the orbit of t maps onto the orbit of x under the
    # unit powers mod ord(x), all fibres of equal size
    x = _frac_mod1(_dot(chi, mu.t.coords))
    cache = mu.__dict__.setdefault("_moment_cache", {})
    if x not in cache:
        q = x.denominator
        powers = {pow(u, mu.e, q) for u in units(q)}
        counts = {}
        for v in powers:
            a = x.numerator * v % q
            counts[a] = counts.get(a, 0) + 1
        cache[x] = Cyclotomic.from_exponent_counts(q, counts, Fraction(1, len(powers)))
    return cache[x]


def _offset_factor(chi, k):
    if any(isinstance(x, float) for x in k):
        return cmath.exp(2j * cmath.pi * sum(c * float(x) for c, x in zip(chi, k)))
    a = _frac_mod1(_dot(chi, k))
    return Cyclotomic.root(a.denominator, a.numerator)


def moment(mu, chi):
    """Fourier coefficient at chi: Cyclotomic when the offset is rational, else complex."""
    chi = tuple(int(c) for c in chi)
    if len(chi) != mu.N:
        raise InputError("character has the wrong length")
    if chi not in mu.annihilator:
        return Cyclotomic.rational(0) if mu.exact else 0j
    val = orbit_moment(mu, chi)
    off = _offset_factor(chi, mu.k)
    if isinstance(off, complex):
        return val.to_complex() * off
    return val * off


def as_complex(x):
    return x.to_complex() if isinstance(x, Cyclotomic) else complex(x)


def moments_equal(a, b, tol=0.0):
    if isinstance(a, Cyclotomic) and isinstance(b, Cyclotomic):
        return a == b
    return abs(as_complex(a) - as_complex(b)) <= tol


# ------------------------------------------------------------ convolution

def convolve(a, b, check_box=DEFAULT_CHECK_BOX):
    if a.N != b.N:
        raise InputError("measures live on different tori")
    ann = meet(a.annihilator, b.annihilator)
    if a.t.is_zero():
        t, e = b.t, b.e
    elif b.t.is_zero():
        t, e = a.t, a.e
    elif a.e == b.e and gcd(a.t.order, b.t.order) == 1:
        t, e = a.t + b.t, a.e
    else:
        raise UnsupportedCombination("torsion orbits do not combine into a single orbit "
                                     "(need coprime orders and a common exponent, or a trivial factor)")
    k = [x + y for x, y in zip(a.k, b.k)]
    out = PackagedMeasure(a.N, ann, t, k, e)
    for chi in char_box(a.N, check_box):
        lhs, rhs = moment(out, chi), _mul(moment(a, chi), moment(b, chi))
        if not moments_equal(lhs, rhs, 1e-9):
            raise InvariantViolation(f"convolution moment mismatch at {chi}")
    return out


def _mul(x, y):
    if isinstance(x, Cyclotomic) and isinstance(y, Cyclotomic):
        return x * y
    return as_complex(x) * as_complex(y)


# ----------------------------------------------------------- sequences

class Progression:
    """q_i = value (constant), a*r^i (geometric) or a + d*i (arithmetic)."""

    def __init__(self, kind, a=1, r=1, d=0):
        if kind not in ("constant", "geometric", "arithmetic"):
            raise InputError(f"unknown progression {kind}")
        self.kind, self.a, self.r, self.d = kind, int(a), int(r), int(d)
        if self.a == 0 or (kind == "geometric" and self.r == 0):
            raise InputError("progression must not vanish")
        if kind == "arithmetic" and self.d and (-self.a) % self.d == 0 and -self.a // self.d >= 0:
            raise InputError("arithmetic progression hits zero")

    def __call__(self, i):
        if self.kind == "geometric":
            return self.a * self.r ** i
        if self.kind == "arithmetic":
            return self.a + self.d * i
        return self.a

    @property
    def diverges(self):
        return (self.kind == "geometric" and abs(self.r) >= 2) or (self.kind == "arithmetic" and self.d != 0)

    def first_index_above(self, bound, start=0):
        """Least i >= start with |q_j| > bound for all j >= i (q must diverge)."""
        i = start
        while abs(self(i)) <= bound:
            i += 1
        return i

    def to_json(self):
        if self.kind == "geometric":
            return {"kind": "geometric", "a": self.a, "r": self.r}
        if self.kind == "arithmetic":
            return {"kind": "arithmetic", "a": self.a, "d": self.d}
        return {"kind": "constant", "a": self.a}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["kind"], obj.get("a", 1), obj.get("r", 1), obj.get("d", 0))


class TailRule:
    """Declared pattern for terms i >= len(explicit_terms).

    kind "constant": repeat the last explicit term.
    kind "pattern": annihilator fixed + q_i * base, torsion s + v/q_i, offset
    k_inf + delta/q_i (or an alternating pair, which diverges).
    """

    def __init__(self, kind="pattern", N=None, e=1, fixed=None, base=None, ann_q=None,
                 s=None, v=None, tor_q=None, k_limit=None, delta=None, off_q=None, alternating=None):
        self.kind = kind
        if kind == "constant":
            return
        if kind != "pattern":
            raise InputError(f"unknown tail rule {kind}")
        if N is None:
            raise InputError("pattern tail needs N")
        self.N, self.e = int(N), int(e)
        self.fixed = fixed if fixed is not None else Lattice.zero(self.N)
        self.base = base if base is not None else Lattice.zero(self.N)
        self.ann_q = ann_q or Progression("constant")
        self.s = s if s is not None else TorsionVector.zero(self.N)
        self.v = [int(x) for x in v] if v is not None else [0] * self.N
        self.tor_q = tor_q or Progression("constant")
        self.k_limit = [parse_fraction(x) for x in k_limit] if k_limit is not None else [Fraction(0)] * self.N
        self.delta = [parse_fraction(x) for x in delta] if delta is not None else [Fraction(0)] * self.N
        self.off_q = off_q or Progression("constant")
        self.alternating = [[parse_fraction(x) for x in p] for p in alternating] if alternating else None
        if any(len(x) != self.N for x in (self.v, self.k_limit, self.delta)):
            raise InputError("pattern vectors have the wrong length")
        if self.tor_q.kind == "arithmetic" and self.tor_q.d and any(self.v):
            raise InputError("torsion tails support constant or geometric denominators only")

    def term(self, i):
        if self.kind == "constant":
            raise InputError("constant tail has no standalone terms")
        base_rows = [[self.ann_q(i) * x for x in b] for b in self.base.basis]
        ann = hnf(self.fixed.vectors() + base_rows, self.N)
        q = self.tor_q(i)
        t = TorsionVector([sc + Fraction(x, q) for sc, x in zip(self.s.coords, self.v)])
        if self.alternating:
            k = self.alternating[i % 2]
        else:
            k = [a + Fraction(d) / self.off_q(i) for a, d in zip(self.k_limit, self.delta)]
        return PackagedMeasure(self.N, ann, t, k, self.e)

    def to_json(self):
        if self.kind == "constant":
            return {"kind": "constant"}
        out = {"kind": "pattern", "N": self.N, "e": self.e,
               "annihilator": {"fixed": [list(b) for b in self.fixed.basis],
                               "base": [list(b) for b in self.base.basis], "q": self.ann_q.to_json()},
               "torsion": {"s": self.s.to_json(), "v": self.v, "q": self.tor_q.to_json()}}
        if self.alternating:
            out["offset"] = {"alternating": [[frac_to_str(x) for x in p] for p in self.alternating]}
        else:
            out["offset"] = {"limit": [frac_to_str(x) for x in self.k_limit],
                             "delta": [frac_to_str(x) for x in self.delta], "q": self.off_q.to_json()}
        return out

    @classmethod
    def from_json(cls, obj):
        if obj["kind"] == "constant":
            return cls("constant")
        N = int(obj["N"])
        ann = obj.get("annihilator", {})
        tor = obj.get("torsion", {})
        off = obj.get("offset", {})

        def lat(rows):
            return hnf(rows, N) if rows else Lattice.zero(N)

        def prog(p):
            return Progression.from_json(p) if p else None

        return cls("pattern", N, obj.get("e", 1), lat(ann.get("fixed")), lat(ann.get("base")), prog(ann.get("q")),
                   TorsionVector.from_json(tor["s"]) if tor.get("s") else None, tor.get("v"), prog(tor.get("q")),
                   off.get("limit"), off.get("delta"), prog(off.get("q")), off.get("alternating"))


class MeasureSequence:
    def __init__(self, explicit_terms, tail=None):
        self.explicit_terms = list(explicit_terms)
        self.tail = tail
        if tail is not None and tail.kind == "constant" and not self.explicit_terms:
            raise InputError("constant tail needs an explicit term")
        Ns = {m.N for m in self.explicit_terms} | ({tail.N} if tail is not None and tail.kind == "pattern" else set())
        if len(Ns) > 1:
            raise InputError("terms live on different tori")
        self.N = Ns.pop() if Ns else None

    def term(self, i):
        if i < len(self.explicit_terms):
            return self.explicit_terms[i]
        if self.tail is None:
            raise InputError("sequence has no tail rule")
        if self.tail.kind == "constant":
            return self.explicit_terms[-1]
        return self.tail.term(i)

    def to_json(self):
        return {"explicit_terms": [m.to_json() for m in self.explicit_terms],
                "tail": self.tail.to_json() if self.tail else None}

    @classmethod
    def from_json(cls, obj):
        tail = TailRule.from_json(obj["tail"]) if obj.get("tail") else None
        return cls([PackagedMeasure.from_json(m) for m in obj.get("explicit_terms", [])], tail)


def _stripped_moment(mu, chi):
    """Moment of the measure with its offset removed."""
    if chi not in mu.annihilator:
        return Cyclotomic.rational(0)
    return orbit_moment(mu, chi)


def _orbit_array(mu):
    arr = getattr(mu, "_orbit_arr", None)
    if arr is None:
        arr = np.array([[float(c) for c in t.coords] for t in mu.orbit])
        mu._orbit_arr = arr
    return arr


def _stripped_float(mu, chi):
    if chi not in mu.annihilator:
        return 0j
    return complex(np.mean(np.exp(2j * np.pi * (_orbit_array(mu) @ np.asarray(chi, dtype=float)))))


def _same_stripped(a, b, chi):
    """Exact equality of offset-free moments; floats only rule out clear mismatches."""
    ina, inb = chi in a.annihilator, chi in b.annihilator
    if not (ina or inb):
        return True
    # both sides depend on chi only through membership and chi.t mod 1
    key = (id(b), _frac_mod1(_dot(chi, a.t.coords)) if ina else None,
           _frac_mod1(_dot(chi, b.t.coords)) if inb else None)
    cache = a.__dict__.setdefault("_compare_cache", {})
    if key not in cache:
        if abs(_stripped_float(a, chi) - _stripped_float(b, chi)) > 1e-7:
            cache[key] = False
        else:
            cache[key] = _stripped_moment(a, chi) == _stripped_moment(b, chi)
    return cache[key]


def _periodic_haar_limit(rule, start):
    """Limit of fixed + q_i * base when q_i grows; None if it oscillates."""
    fixed = rule.fixed
    if fixed.rank == 0:
        return Lattice.zero(rule.N), start
    sat = saturate(fixed)
    E = quotient_group(fixed, sat).exponent
    inner = meet(rule.base, sat)
    q = rule.ann_q

    def L(i):
        return hnf(fixed.vectors() + [[q(i) * x for x in b] for b in inner.basis], rule.N)

    # q_i mod E is eventually periodic: preperiod below bit_length(E)+1, period at most E
    pre = start + E.bit_length() + 1
    vals = [L(i) for i in range(pre, pre + E + 1)]
    if any(v != vals[0] for v in vals):
        raise DivergenceError("annihilators oscillate inside the saturation of the fixed part")
    # find the first index from which the value is constant
    i0 = pre
    while i0 > start and L(i0 - 1) == vals[0]:
        i0 -= 1
    return vals[0], i0


def _valuation(x, p):
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def _prime_factors(n):
    n, out, f = abs(n), [], 2
    while f * f <= n:
        if n % f == 0:
            out.append(f)
            while n % f == 0:
                n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def limit_sequence(seq, char_box_bound=10):
    """Limit of a declared-pattern sequence, with the index where boxed moments settle.

    Agreement is decided on the offset-free parts (Haar and torsion factors);
    declared offsets converge to ``k_limit`` but need not ever equal it.
    """
    if seq.tail is None:
        raise InputError("limit needs a tail rule")
    n0 = len(seq.explicit_terms)
    N = seq.N
    box = list(char_box(N, char_box_bound))
    if seq.tail.kind == "constant":
        lim = seq.explicit_terms[-1]
        certified = n0 - 1
        k_inf = lim.k
        haar = lim.annihilator
        offset_info = {"kind": "constant"}
    else:
        rule = seq.tail
        if rule.alternating and rule.alternating[0] != rule.alternating[1]:
            raise DivergenceError("offsets alternate between two distinct values")
        certified = n0
        # Haar factor
        if rule.ann_q.diverges and rule.base.rank:
            haar, i_h = _periodic_haar_limit(rule, n0)
            # outside sat(fixed): chi in fixed + q base forces q | phi(chi) for a functional phi killing fixed
            phis = orthogonal(rule.fixed).vectors() if rule.fixed.rank else [
                [int(i == j) for j in range(N)] for i in range(N)]
            bound = char_box_bound * max((sum(abs(x) for x in p) for p in phis), default=0)
            certified = max(certified, i_h, rule.ann_q.first_index_above(bound, n0))
        else:
            haar = rule.term(n0).annihilator
        # torsion factor: t_i = s + v/q_i
        if rule.tor_q.diverges and any(rule.v):
            q = rule.tor_q
            so = rule.s.order
            if gcd(so, q.a) != 1 or gcd(so, q.r) != 1:
                raise InputError("torsion tail needs ord(s) coprime to the denominators")
            vnorm = sum(abs(x) for x in rule.v)
            bmax = char_box_bound * vnorm
            i_t = n0
            for p in _prime_factors(q.r)[:1]:
                # local unit sums vanish once floor((v_p(q_i) - v_p(b))/2) > v_p(e)
                need = 2 * (_valuation(rule.e, p) + 1) + max(_valuation_bound(bmax, p), 0)
                i = n0
                while _valuation(q(i), p) < need:
                    i += 1
                i_t = max(i_t, i)
            certified = max(certified, i_t)
            v_perp = integer_kernel([rule.v], N)
            haar = meet(haar, v_perp)
            t_inf = rule.s
        else:
            t_inf = rule.term(n0).t
        if rule.off_q.diverges:
            k_inf = rule.k_limit
            offset_info = {"kind": "converging", "limit": [frac_to_str(x) for x in k_inf]}
        else:
            k_inf = rule.term(n0).k
            offset_info = {"kind": "constant"}
        lim = PackagedMeasure(N, haar, t_inf, k_inf, rule.e)
    lim0 = lim.without_offset()
    # proof-carrying: the certified term agrees with the limit on the whole box
    cert = max(certified, 0)
    term = seq.term(cert)
    for chi in box:
        if not _same_stripped(term, lim0, chi):
            raise InvariantViolation(f"term {cert} disagrees with the limit at {chi}")
    stab = cert
    while stab > 0:
        prev = seq.term(stab - 1)
        if all(_same_stripped(prev, lim0, chi) for chi in box):
            stab -= 1
        else:
            break
    # the annihilator as generated by boxed characters whose Haar-and-torsion limit is 1
    part = _haar_part(seq, cert)
    ones = [list(chi) for chi in box if any(chi) and _stripped_moment(part, chi) == 1]
    box_lattice = hnf(ones, N) if ones else Lattice.zero(N)
    if not lim.annihilator.contains(box_lattice):
        raise InvariantViolation("box characters with limit 1 escape the limit annihilator")
    return {"limit": lim, "stabilization_index": stab, "certified_index": cert,
            "box_lattice": box_lattice, "box_generates_limit": box_lattice == lim.annihilator,
            "offset": offset_info}


def _valuation_bound(b, p):
    v = 0
    while p ** (v + 1) <= b:
        v += 1
    return v


def _haar_part(seq, i):
    """Term i with the fixed torsion part s removed (only the shrinking v/q_i orbit kept)."""
    term = seq.term(i)
    rule = seq.tail
    if rule.kind == "pattern" and rule.tor_q.diverges and any(rule.v):
        q = rule.tor_q(i)
        return PackagedMeasure(term.N, term.annihilator, TorsionVector([Fraction(x, q) for x in rule.v]), None, term.e)
    return PackagedMeasure(term.N, term.annihilator)


# -------------------------------------------------------- inclusions

def _orbit_lift(t, e, x, y):
    """A point u^e t of the orbit of t whose projection u^e x equals y."""
    q = t.order
    for u in range(1, q + 1):
        if gcd(u, q) == 1 and x * pow(u, e, q) == y:
            return t * pow(u, e, q)
    raise InvariantViolation("projected orbit point has no lift")


def support_inclusion(inner, outer, detail=False):
    """Decide E(G1, t1, 0) <= E(G2, t2, 0)."""
    if inner.N != outer.N:
        raise InputError("measures live on different tori")
    if not inner.exact or not outer.exact or any(inner.k) or any(outer.k):
        raise InputError("support inclusion is only decided for offset-free packages")
    subgroup_ok = inner.annihilator.contains(outer.annihilator)
    bad = None
    if subgroup_ok:
        # compare orbits after projecting through the outer annihilator: the
        # projection of a unit-power orbit is the unit-power orbit of the image
        rows = outer.annihilator.basis
        x_in = TorsionVector([_dot(b, inner.t.coords) for b in rows])
        x_out = TorsionVector([_dot(b, outer.t.coords) for b in rows])
        covered = set(l_e_orbit(x_out, outer.e))
        for y in l_e_orbit(x_in, inner.e):
            if y not in covered:
                bad = _orbit_lift(inner.t, inner.e, x_in, y)
                break
    ok = subgroup_ok and bad is None
    if detail:
        return {"included": ok, "subgroup_included": subgroup_ok,
                "uncovered_coset": bad.to_json() if bad is not None else None}
    return ok


# ------------------------------------------------------------ sampling

def component_representatives(ann):
    """One point in each connected component of annihilator^perp, plus a basis of its tangent space."""
    N = ann.ambient_rank
    if ann.rank == 0:
        return [TorsionVector.zero(N)], np.eye(N)
    diag, U, V = snf(ann.vectors())
    r = ann.rank
    reps = []
    for ys in product(*[range(d) for d in diag[:r]]):
        y = [Fraction(a, d) for a, d in zip(ys, diag[:r])] + [Fraction(0)] * (N - r)
        reps.append(TorsionVector([sum(V[i][j] * y[j] for j in range(N)) for i in range(N)]))
    tangent = np.array([[V[i][j] for j in range(r, N)] for i in range(N)], dtype=float)
    return reps, tangent


def sample(mu, count, seed=0):
    """Independent draws from mu as an array of shape (count, N) in [0,1)."""
    if count < 1:
        raise InputError("count must be positive")
    rng = np.random.default_rng(seed)
    reps, tangent = component_representatives(mu.annihilator)
    rep_arr = np.array([[float(c) for c in r.coords] for r in reps])
    orb_arr = np.array([[float(c) for c in t.coords] for t in mu.orbit])
    pts = rep_arr[rng.integers(len(reps), size=count)]
    if tangent.shape[1]:
        pts = pts + rng.random((count, tangent.shape[1])) @ tangent.T
    pts = pts + orb_arr[rng.integers(len(orb_arr), size=count)]
    pts = pts + np.array([float(x) for x in mu.k])
    return np.mod(pts, 1.0)


def empirical_moment(points, chi):
    return complex(np.mean(np.exp(2j * np.pi * (points @ np.asarray(chi, dtype=float)))))


# ------------------------------------------------------------- polytopes

class Polytope:
    """{x : A x <= b} intersected with the closed unit cube, exact rationals."""

    def __init__(self, A, b, eq_A=(), eq_b=()):
        self.A = [[Fraction(x) for x in row] for row in A]
        self.b = [Fraction(x) for x in b]
        self.eq_A = [[Fraction(x) for x in row] for row in eq_A]
        self.eq_b = [Fraction(x) for x in eq_b]
        if len(self.A) != len(self.b) or len(self.eq_A) != len(self.eq_b):
            raise InputError("constraint rows and bounds differ in number")
        dims = {len(r) for r in self.A + self.eq_A}
        if len(dims) > 1:
            raise InputError("ragged constraints")
        self.N = dims.pop() if dims else None
        self._vertices = None

    @classmethod
    def box(cls, lo, hi):
        N = len(lo)
        A, b = [], []
        for i in range(N):
            A.append([int(j == i) for j in range(N)])
            b.append(Fraction(hi[i]))
            A.append([-int(j == i) for j in range(N)])
            b.append(-Fraction(lo[i]))
        return cls(A, b)

    def _all(self, N):
        A, b = list(self.A), list(self.b)
        for i in range(N):
            A.append([Fraction(int(j == i)) for j in range(N)])
            b.append(Fraction(1))
            A.append([Fraction(-int(j == i)) for j in range(N)])
            b.append(Fraction(0))
        return A, b

    def intersect(self, other):
        return Polytope(self.A + other.A, self.b + other.b, self.eq_A + other.eq_A, self.eq_b + other.eq_b)

    def vertices(self, N=None):
        N = N or self.N
        if self._vertices is not None:
            return self._vertices
        A, b = self._all(N)
        # parametrise the affine hull of the equalities: x = x0 + K z
        if self.eq_A:
            x0 = _solve_affine(self.eq_A, self.eq_b, N)
            if x0 is None:
                self._vertices = []
                return []
            K = [list(map(Fraction, v)) for v in _kernel_basis(self.eq_A, N)]
        else:
            x0 = [Fraction(0)] * N
            K = [[Fraction(int(i == j)) for i in range(N)] for j in range(N)]
        d = len(K)
        Az = [[sum(row[i] * kv[i] for i in range(N)) for kv in K] for row in A]
        bz = [bi - sum(row[i] * x0[i] for i in range(N)) for row, bi in zip(A, b)]
        verts = set()
        if d == 0:
            if all(bi >= 0 for bi in bz):
                verts.add(tuple(x0))
        else:
            for idx in combinations(range(len(Az)), d):
                M = [Az[i] for i in idx]
                z = _solve_square(M, [bz[i] for i in idx])
                if z is None:
                    continue
                if all(sum(r[j] * z[j] for j in range(d)) <= bi for r, bi in zip(Az, bz)):
                    verts.add(tuple(x0[i] + sum(K[j][i] * z[j] for j in range(d)) for i in range(N)))
        self._vertices = sorted(verts)
        return self._vertices

    def dim(self, N=None):
        vs = self.vertices(N)
        if not vs:
            return -1
        diffs = [[a - b for a, b in zip(v, vs[0])] for v in vs[1:]]
        return rank(diffs) if diffs else 0

    def contains_point(self, x, N=None):
        N = N or len(x)
        A, b = self._all(N)
        return (all(sum(r[i] * x[i] for i in range(N)) <= bi for r, bi in zip(A, b))
                and all(sum(r[i] * x[i] for i in range(N)) == bi for r, bi in zip(self.eq_A, self.eq_b)))

    def to_json(self):
        out = {"A": [[frac_to_str(x) for x in r] for r in self.A], "b": [frac_to_str(x) for x in self.b]}
        if self.eq_A:
            out.update(eq_A=[[frac_to_str(x) for x in r] for r in self.eq_A],
                       eq_b=[frac_to_str(x) for x in self.eq_b])
        return out

    @classmethod
    def from_json(cls, obj):
        conv = lambda rows: [[parse_fraction(x) for x in r] for r in rows]
        return cls(conv(obj.get("A", [])), [parse_fraction(x) for x in obj.get("b", [])],
                   conv(obj.get("eq_A", [])), [parse_fraction(x) for x in obj.get("eq_b", [])])


def _solve_square(M, rhs):
    n = len(M)
    aug = [list(r) + [v] for r, v in zip(M, rhs)]
    for c in range(n):
        p = next((r for r in range(c, n) if aug[r][c] != 0), None)
        if p is None:
            return None
        aug[c], aug[p] = aug[p], aug[c]
        inv = 1 / aug[c][c]
        aug[c] = [x * inv for x in aug[c]]
        for r in range(n):
            if r != c and aug[r][c]:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    return [aug[i][n] for i in range(n)]


def _solve_affine(A, b, N):
    R, pivots = rref([list(r) + [v] for r, v in zip(A, b)])
    if N in pivots:
        return None
    x = [Fraction(0)] * N
    for row, p in zip(R, pivots):
        x[p] = row[N]
    return x


def _kernel_basis(A, N):
    R, pivots = rref([list(r) for r in A])
    basis = []
    for f in (j for j in range(N) if j not in pivots):
        v = [Fraction(0)] * N
        v[f] = Fraction(1)
        for row, p in zip(R, pivots):
            v[p] = -row[f]
        basis.append(v)
    return basis


class PolytopalFamily:
    """For each parameter index n, a finite union of rational polytopes in the unit cube."""

    def __init__(self, N, members):
        self.N = int(N)
        self.members = [list(ps) for ps in members]

    def to_json(self):
        return {"N": self.N, "members": [[p.to_json() for p in ps] for ps in self.members]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["N"], [[Polytope.from_json(p) for p in ps] for ps in obj["members"]])


def support_pieces(mu, shift=None):
    """Chart pieces of E(G, t, k) + shift: polytopes rho.x = c inside the unit cube."""
    N = mu.N
    shift = [Fraction(0)] * N if shift is None else [parse_fraction(x) for x in shift]
    sat = saturate(mu.annihilator)
    reps, _ = component_representatives(mu.annihilator)
    rows = [list(r) for r in sat.basis]
    points = set()
    for rep in reps:
        for tp in mu.orbit:
            points.add(TorsionVector([a + b + c + d for a, b, c, d in zip(rep.coords, tp.coords, mu.k, shift)]))
    pieces = []
    for p in sorted(points):
        if not rows:
            pieces.append(Polytope([], []))
            continue
        base = [_dot(r, p.coords) for r in rows]
        ranges = [range(-sum(x for x in r if x > 0) - 1, -sum(x for x in r if x < 0) + 2) for r in rows]
        for c in product(*ranges):
            poly = Polytope([], [], rows, [b0 - ci for b0, ci in zip(base, c)])
            poly.N = N
            # closures of the top-dimensional pieces already cover the coset;
            # a piece inside a face x_j = 1 repeats one inside x_j = 0
            if poly.dim(N) == N - len(rows) and not any(
                    all(v[j] == 1 for v in poly.vertices(N)) for j in range(N)):
                pieces.append(poly)
    for poly in pieces:
        poly.N = N
    return pieces


def _dedupe(pieces, N):
    seen, out = set(), []
    for p in pieces:
        key = tuple(p.vertices(N))
        if key and key not in seen:
            seen.add(key)
            out.append(p)
    return out


def _union_contains(pieces, polys, N):
    """Each piece lies inside a single member polytope (sufficient containment test)."""
    for piece in pieces:
        vs = piece.vertices(N)
        if not any(all(P.contains_point(v, N) for v in vs) for P in polys):
            return False, [str(x) for x in vs[0]] if vs else None
    return True, None


def intersection_dim(pieces, polys, N):
    best = -1
    for piece in pieces:
        for P in polys:
            Q = piece.intersect(P)
            Q.N = N
            best = max(best, Q.dim(N))
    return best


def pl_family_dim_check(V, seq, translates=None, char_box_bound=10):
    """Per parameter index n: the hypotheses and the dimension equality of the limit support."""
    N = V.N
    lim_rep = limit_sequence(seq, char_box_bound)
    lim = lim_rep["limit"]
    stab = lim_rep["stabilization_index"]
    dim_lim = lim.dimension
    lim_pieces = _dedupe(support_pieces(lim), N)
    rows = []
    for n in range(stab, len(V.members)):
        polys = V.members[n]
        x_n = [Fraction(0)] * N if translates is None else [parse_fraction(x) for x in translates[n]]
        term = seq.term(n)
        inc = support_inclusion(term.without_offset(), lim.without_offset())
        term_pieces = _dedupe(support_pieces(term, x_n), N)
        contained, witness = _union_contains(term_pieces, polys, N)
        lim_shift = _dedupe(support_pieces(lim, x_n), N) if translates is not None else lim_pieces
        d = intersection_dim(lim_shift, polys, N)
        row = {"n": n, "support_inclusion": inc, "support_in_V": contained, "dim_limit": dim_lim,
               "dim_intersection": d, "equality": d == dim_lim}
        if translates is not None:
            row["dim_term_intersection"] = intersection_dim(term_pieces, polys, N)
        failed = []
        if not inc:
            failed.append("support_inclusion")
        if not contained:
            failed.append("translated_support_in_V" if translates is not None else "support_in_V")
            row["containment_witness"] = witness
        row["hypotheses_hold"] = not failed
        row["failed_hypotheses"] = failed
        row["flagged"] = bool(failed) or d != dim_lim
        rows.append(row)
    return {"stabilization_index": stab, "dim_limit": dim_lim, "rows": rows,
            "all_equal": all(r["equality"] for r in rows),
            "flagged": [r["n"] for r in rows if r["flagged"]]}
