"""Exact elements of cyclotomic fields Q(zeta_L).

A value is stored as (L, coefficients) with the coefficients of a
polynomial in zeta_L reduced modulo the L-th cyclotomic polynomial.
Arithmetic between different orders lifts both sides to the lcm order.
"""

import cmath
from fractions import Fraction
from functools import lru_cache
from math import lcm


def _divmod_monic(num, den):
    num = list(num)
    dq = len(den) - 1
    q = [0] * max(len(num) - dq, 1)
    for i in range(len(num) - 1, dq - 1, -1):
        c = num[i]
        if c:
            q[i - dq] = c
            for j, d in enumerate(den):
                num[i - dq + j] -= c * d
    return q, num[:dq]


@lru_cache(maxsize=None)
def cyclotomic_polynomial(L):
    """Integer coefficients of Phi_L, lowest degree first."""
    poly = [-1] + [0] * (L - 1) + [1]
    for d in range(1, L):
        if L % d == 0:
            poly, rem = _divmod_monic(poly, cyclotomic_polynomial(d))
            if any(rem):
                raise ArithmeticError("cyclotomic division left a remainder")
    return tuple(poly)


@lru_cache(maxsize=None)
def _sparse_phi(L):
    phi = cyclotomic_polynomial(L)
    return len(phi) - 1, [(j, c) for j, c in enumerate(phi[:-1]) if c]


_ZERO = Fraction(0)


def _reduce(coeffs, L):
    deg, terms = _sparse_phi(L)
    nonzero = [(i, x) for i, x in enumerate(coeffs) if x]
    den = 1
    for _, x in nonzero:
        if isinstance(x, Fraction):
            den = lcm(den, x.denominator)
    c = [0] * max(len(coeffs), deg)
    for i, x in nonzero:
        c[i] = int(x * den)
    for i in range(len(c) - 1, deg - 1, -1):
        x = c[i]
        if x:
            c[i] = 0
            for j, p in terms:
                c[i - deg + j] -= x * p
    return tuple(Fraction(v, den) if v else _ZERO for v in c[:deg])


class Cyclotomic:
    __slots__ = ("order", "coeffs")

    def __init__(self, order, coeffs):
        self.order = int(order)
        self.coeffs = _reduce(coeffs, self.order)

    @classmethod
    def rational(cls, r):
        return cls(1, [Fraction(r)])

    @classmethod
    def root(cls, L, a=1):
        """zeta_L ** a."""
        c = [0] * L
        c[a % L] = 1
        return cls(L, c)

    @classmethod
    def from_exponent_counts(cls, L, counts, scale=1):
        """scale * sum_a counts[a] * zeta_L^a."""
        c = [0] * L
        for a, n in counts.items():
            c[a % L] += n
        return cls(L, [Fraction(x) * scale for x in c])

    def lift(self, L):
        if L % self.order:
            raise ValueError(f"{self.order} does not divide {L}")
        step = L // self.order
        c = [Fraction(0)] * L
        for i, x in enumerate(self.coeffs):
            c[i * step] = x
        return Cyclotomic(L, c)

    def _common(self, other):
        if not isinstance(other, Cyclotomic):
            other = Cyclotomic.rational(other)
        L = lcm(self.order, other.order)
        return self.lift(L) if self.order != L else self, other.lift(L) if other.order != L else other, L

    def __add__(self, other):
        a, b, L = self._common(other)
        n = max(len(a.coeffs), len(b.coeffs))
        return Cyclotomic(L, [(a.coeffs[i] if i < len(a.coeffs) else 0) + (b.coeffs[i] if i < len(b.coeffs) else 0)
                              for i in range(n)])

    __radd__ = __add__

    def __neg__(self):
        return Cyclotomic(self.order, [-x for x in self.coeffs])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Cyclotomic) else Cyclotomic.rational(-other))

    def __mul__(self, other):
        if not isinstance(other, Cyclotomic):
            other = Cyclotomic.rational(other)
        for x, y in ((self, other), (other, self)):
            r = y.as_rational()
            if r is not None:
                return Cyclotomic(x.order, [c * r for c in x.coeffs])
        a, b, L = self._common(other)
        prod = [Fraction(0)] * (len(a.coeffs) + len(b.coeffs))
        for i, x in enumerate(a.coeffs):
            if x:
                for j, y in enumerate(b.coeffs):
                    if y:
                        prod[i + j] += x * y
        return Cyclotomic(L, prod)

    __rmul__ = __mul__

    def is_zero(self):
        return not any(self.coeffs)

    def __eq__(self, other):
        # reduced coefficients in the power basis are canonical
        if isinstance(other, (int, Fraction)):
            return self.as_rational() == other
        if not isinstance(other, Cyclotomic):
            return NotImplemented
        if self.order == other.order:
            n = max(len(self.coeffs), len(other.coeffs))
            pad = (Fraction(0),) * n
            return (self.coeffs + pad)[:n] == (other.coeffs + pad)[:n]
        return (self - other).is_zero()

    __hash__ = None

    def to_complex(self):
        z = cmath.exp(2j * cmath.pi / self.order)
        return sum(complex(float(x)) * z ** i for i, x in enumerate(self.coeffs))

    def as_rational(self):
        """The value as a Fraction when it is rational, else None."""
        # 1 is a power-basis element, so a rational value has no other terms
        if all(x == 0 for x in self.coeffs[1:]):
            return self.coeffs[0]
        return None

    def __repr__(self):
        return f"Cyclotomic({self.order}, {[str(x) for x in self.coeffs]})"

    def to_json(self):
        z = self.to_complex()
        return {"order": self.order, "coeffs": [str(x) for x in self.coeffs],
                "approx": [z.real, z.imag]}
