"""Numeric substrate: exact quadratic surds plus helpers that work across
int / Fraction / QuadSurd / float / numpy.longdouble / mpmath.mpf values.
"""
from fractions import Fraction
from math import isqrt
import numbers

import mpmath
import numpy as np


def _squarefree_split(n):
    """Write n = k**2 * m with m squarefree; return (k, m)."""
    k, m, p = 1, n, 2
    while p * p <= m:
        while m % (p * p) == 0:
            m //= p * p
            k *= p
        p += 1
    return k, m


class QuadSurd:
    """Exact number a + b*sqrt(d) with rational a, b and squarefree d > 1.

    Arithmetic is closed inside one quadratic field.  Values from different
    fields can be compared (never equal unless both rational) but not mixed
    arithmetically.
    """

    __slots__ = ("a", "b", "d")

    def __init__(self, a=0, b=0, d=0):
        a, b = Fraction(a), Fraction(b)
        if b == 0:
            d = 0
        elif d <= 1:
            raise ValueError("radicand must exceed 1")
        self.a, self.b, self.d = a, b, int(d)

    @classmethod
    def sqrt(cls, n):
        """Exact square root of a nonnegative rational."""
        n = Fraction(n)
        if n < 0:
            raise ValueError("negative radicand")
        # sqrt(p/q) = sqrt(p*q)/q
        k, m = _squarefree_split(n.numerator * n.denominator)
        if m == 1:
            return cls(Fraction(k, n.denominator))
        return cls(0, Fraction(k, n.denominator), m)

    # -- coercion -----------------------------------------------------
    def _lift(self, other):
        if isinstance(other, QuadSurd):
            return other
        if isinstance(other, (int, Fraction)):
            return QuadSurd(other)
        return None

    def _field(self, other):
        if self.d and other.d and self.d != other.d:
            raise TypeError(f"cannot mix sqrt({self.d}) and sqrt({other.d}) arithmetically")
        return self.d or other.d

    def is_rational(self):
        return self.b == 0

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        o = self._lift(other)
        if o is None:
            return float(self) + other
        return QuadSurd(self.a + o.a, self.b + o.b, self._field(o))

    __radd__ = __add__

    def __neg__(self):
        return QuadSurd(-self.a, -self.b, self.d)

    def __pos__(self):
        return self

    def __sub__(self, other):
        o = self._lift(other)
        if o is None:
            return float(self) - other
        return self + (-o)

    def __rsub__(self, other):
        o = self._lift(other)
        if o is None:
            return other - float(self)
        return o + (-self)

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            return float(self) * other
        d = self._field(o)
        return QuadSurd(self.a * o.a + self.b * o.b * d, self.a * o.b + self.b * o.a, d)

    __rmul__ = __mul__

    def conjugate(self):
        return QuadSurd(self.a, -self.b, self.d)

    def norm(self):
        return self.a * self.a - self.b * self.b * self.d

    def reciprocal(self):
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero surd")
        return QuadSurd(self.a / n, -self.b / n, self.d)

    def __truediv__(self, other):
        o = self._lift(other)
        if o is None:
            return float(self) / other
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is None:
            return other / float(self)
        return o * self.reciprocal()

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # -- order ----------------------------------------------------------
    def sign(self):
        sa = (self.a > 0) - (self.a < 0)
        sb = (self.b > 0) - (self.b < 0)
        if sb == 0 or sa == sb:
            return sa or sb
        if sa == 0:
            return sb
        # opposite signs: compare a^2 with b^2 d
        diff = self.a * self.a - self.b * self.b * self.d
        return sa if diff > 0 else -sa

    def _cmp(self, other):
        o = self._lift(other)
        if o is None:
            return (float(self) > other) - (float(self) < other)
        if self.d and o.d and self.d != o.d:
            return _cross_field_sign(self, o)
        return (self - o).sign()

    def __eq__(self, other):
        o = self._lift(other)
        if o is None:
            return NotImplemented if not isinstance(other, numbers.Real) else float(self) == other
        return self.a == o.a and self.b == o.b and (self.b == 0 or self.d == o.d)

    def __hash__(self):
        return hash(self.a) if self.b == 0 else hash((self.a, self.b, self.d))

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    # -- conversion -------------------------------------------------------
    def floor(self):
        """Exact floor."""
        den = self.a.denominator * self.b.denominator
        p = int(self.a * den)
        q = int(self.b * den)
        # q*sqrt(d) = n + f with 0 <= f < 1
        r = isqrt(q * q * self.d) if self.d else 0
        if q >= 0:
            n = r
        else:
            n = -r if r * r == q * q * self.d else -r - 1
        return (p + n) // den

    def __floor__(self):
        return self.floor()

    def __ceil__(self):
        return -(-self).floor()

    def to_mpf(self, prec=256):
        with mpmath.workprec(prec):
            return mpmath.mpf(self.a.numerator) / self.a.denominator + (
                mpmath.mpf(self.b.numerator) / self.b.denominator * mpmath.sqrt(self.d) if self.d else 0)

    def __float__(self):
        return float(self.to_mpf(80))

    def __repr__(self):
        if self.b == 0:
            return f"QuadSurd({self.a})"
        return f"QuadSurd({self.a} + {self.b}*sqrt({self.d}))"


def _cross_field_sign(u, v):
    # u - v is never zero when both carry different irrational parts
    for prec in (128, 512, 2048):
        with mpmath.workprec(prec):
            diff = u.to_mpf(prec) - v.to_mpf(prec)
            if abs(diff) > mpmath.mpf(2) ** (-prec + 16):
                return 1 if diff > 0 else -1
    raise ArithmeticError("could not separate surds from different fields")


SQRT3 = QuadSurd(0, 1, 3)


def is_exact(x):
    return isinstance(x, (int, Fraction, QuadSurd))


def exact(x):
    """Promote ints to Fraction; leave other scalars untouched."""
    if isinstance(x, bool):
        raise TypeError("boolean is not a scalar")
    if isinstance(x, int):
        return Fraction(x)
    return x


def sqrt3_like(x):
    """sqrt(3) in the arithmetic of x."""
    if is_exact(x):
        return SQRT3
    if isinstance(x, mpmath.mpf):
        return mpmath.sqrt(3)
    if isinstance(x, np.floating):
        return np.sqrt(x.dtype.type(3))
    return 3.0 ** 0.5


def floor_int(x):
    """Python int floor for any supported scalar."""
    if isinstance(x, QuadSurd):
        return x.floor()
    if isinstance(x, (int, Fraction)):
        return x.__floor__()
    if isinstance(x, mpmath.mpf):
        return int(mpmath.floor(x))
    if isinstance(x, np.floating):
        return int(np.floor(x))
    return int(np.floor(float(x)))


def ceil_int(x):
    return -floor_int(-x)


def floor_plus_sqrt3(u, k):
    """floor(u + k*sqrt(3)) for integer k, exact whenever u is exact."""
    if isinstance(u, QuadSurd) and u.d not in (0, 3):
        # field mismatch: decide by high precision, ties are impossible
        with mpmath.workprec(512):
            v = u.to_mpf(512) + k * mpmath.sqrt(3)
            n = int(mpmath.floor(v))
        cand = QuadSurd(n)
        lo = _cross_field_sign(u, QuadSurd(n, -k, 3))
        hi = _cross_field_sign(u, QuadSurd(n + 1, -k, 3))
        if lo >= 0 and hi < 0:
            return n
        raise ArithmeticError(f"floor verification failed near {cand}")
    return floor_int(u + k * sqrt3_like(u))


def to_float(x):
    return float(x)
