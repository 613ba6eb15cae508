"""Spliced continued fraction map on [0,1], its dual on [sqrt3-2, sqrt3],
inverse branches, the involution x -> (1-x)/(1+x) and the parity swap.

Every routine accepts any scalar supported by :mod:`scfdyn.scalar`.  Exact
inputs (int, Fraction, QuadSurd) are handled exactly; floating inputs use
the absorption band ``absorb`` around 0 and 1 and the digit cap ``a_max``.
"""
from dataclasses import dataclass, field
from fractions import Fraction
import re

from .scalar import (QuadSurd, SQRT3, ceil_int, exact, floor_plus_sqrt3,
                     is_exact, sqrt3_like)

ABSORB = 1e-14
A_MAX = 10 ** 9


class DomainError(ValueError):
    """Argument outside the domain of a map."""


class TerminatedError(ArithmeticError):
    """Orbit reached 0 or 1 (or fell inside the float absorption band)."""


@dataclass(frozen=True)
class Digit:
    """Letter (a, eps)_parity of the SCF alphabet."""

    a: int
    eps: int
    parity: str

    def __post_init__(self):
        if self.parity not in ("e", "o") or self.eps not in (1, -1):
            raise ValueError(f"bad digit {self.a, self.eps, self.parity}")
        if self.a < 1 or (self.a == 1 and (self.eps, self.parity) != (1, "e")):
            raise ValueError(f"({self.a},{self.eps})_{self.parity} is not in the alphabet")

    @property
    def eps_bar(self):
        return max(0, self.eps)

    def __str__(self):
        return f"({self.a},{self.eps:+d})_{self.parity}"


_DIGIT_RE = re.compile(r"\(\s*(\d+)\s*,\s*([+-]?1)\s*\)_?([eo])")


def parse_digit(text):
    m = _DIGIT_RE.fullmatch(text.strip())
    if not m:
        raise ValueError(f"cannot parse digit {text!r}")
    return Digit(int(m.group(1)), int(m.group(2)), m.group(3))


def parse_digits(text):
    return [Digit(int(a), int(e), p) for a, e, p in _DIGIT_RE.findall(text)]


@dataclass
class Expansion:
    digits: list = field(default_factory=list)
    terminated: bool = False


# ---------------------------------------------------------------------------
# forward map

def _digit_from_ceil(m, parity):
    # m = ceil(1/x) (e-type) or ceil((1+x)/(1-x)) (o-type)
    if parity == "e" and m <= 3:
        return Digit(1, 1, "e")
    if m % 2 == 0:
        return Digit(m // 2, -1, parity)
    return Digit((m - 1) // 2, 1, parity)


def classify(x):
    """Digit (a, eps)_s of the branch interval containing x in (0,1)."""
    x = exact(x)
    if not 0 < x < 1:
        raise DomainError(f"x = {x} outside (0,1)")
    if 2 * x <= 1:
        return _digit_from_ceil(ceil_int(1 / x), "e")
    return _digit_from_ceil(ceil_int((1 + x) / (1 - x)), "o")


def _apply_branch(d, x):
    a, e = d.a, d.eps
    if d.parity == "e":
        return 1 / x - 2 * a if e == 1 else 2 * a - 1 / x
    if e == -1:
        return (a * x - (a - 1)) / (a - (a + 1) * x)
    return (a - (a + 1) * x) / (a * x - (a - 1))


def step(x):
    """Return (digit, T(x))."""
    x = exact(x)
    d = classify(x)
    if is_exact(x) or d.parity == "e":
        return d, _apply_branch(d, x)
    # o-type in floating point: conjugate through the involution so that
    # rounding in the classification can never push T(x) out of [0,1]
    t = (1 + x) / (1 - x)
    w = t - 2 * d.a if d.eps == 1 else 2 * d.a - t
    return d, (1 - w) / (1 + w)


def expand(x, depth, absorb=ABSORB, a_max=A_MAX):
    """SCF digits of x up to ``depth`` steps."""
    if depth < 1:
        raise ValueError("depth must be positive")
    x = exact(x)
    if not 0 < x < 1:
        raise DomainError(f"x = {x} outside (0,1)")
    out = Expansion()
    inexact = not is_exact(x)
    for _ in range(depth):
        if inexact and (x < absorb or 1 - x < absorb):
            out.terminated = True
            break
        d, x = step(x)
        if inexact and d.a > a_max:
            out.terminated = True
            break
        out.digits.append(d)
        if x == 0 or x == 1:
            out.terminated = True
            break
    return out


def orbit_point(x, n):
    """T^n(x), raising TerminatedError when the orbit stops earlier."""
    x = exact(x)
    for _ in range(n):
        if x == 0 or x == 1:
            raise TerminatedError("orbit terminated")
        _, x = step(x)
    return x


# ---------------------------------------------------------------------------
# inverse branches

def inverse_branch(d, t):
    t = exact(t)
    if d.parity == "e":
        return 1 / (2 * d.a + d.eps * t)
    return 1 / (1 + 1 / ((d.a - d.eps_bar) + d.eps / (1 + t)))


def inverse_branch_derivative(d, t):
    """|h_d'(t)|."""
    t = exact(t)
    a = d.a
    if d.parity == "e":
        return 1 / (2 * a + d.eps * t) ** 2
    if d.eps == -1:
        return 1 / ((a + 1) * t + a) ** 2
    return 1 / (a * t + a + 1) ** 2


def branch_interval(d):
    """Closure (lo, hi) of the branch interval as Fractions."""
    a = d.a
    F = Fraction
    if d.parity == "e":
        if a == 1:
            return F(1, 3), F(1, 2)
        return (F(1, 2 * a + 1), F(1, 2 * a)) if d.eps == 1 else (F(1, 2 * a), F(1, 2 * a - 1))
    if d.eps == -1:
        return F(a - 1, a), F(2 * a - 1, 2 * a + 1)
    return F(2 * a - 1, 2 * a + 1), F(a, a + 1)


def in_branch(x, d):
    """Membership with the half-open conventions (e closed left, o closed right)."""
    lo, hi = branch_interval(d)
    if d == Digit(1, 1, "e"):
        return lo <= x <= hi
    if d.parity == "e":
        return lo <= x < hi
    return lo < x <= hi


def reconstruct(e, tail=0):
    """h_{d1} o ... o h_{dn}(tail); accepts an Expansion or a digit list."""
    digits = e.digits if isinstance(e, Expansion) else e
    x = exact(tail)
    for d in reversed(digits):
        x = inverse_branch(d, x)
    return x


# ---------------------------------------------------------------------------
# involution and parity swap

def involution(x):
    x = exact(x)
    return (1 - x) / (1 + x)


def substitute(d):
    if d == Digit(1, 1, "e"):
        return d
    return Digit(d.a, d.eps, "o" if d.parity == "e" else "e")


# ---------------------------------------------------------------------------
# dual map

def dual_bounds(y=None):
    s = sqrt3_like(y if y is not None else Fraction(0))
    return s - 2, s


def dual_interval(d):
    """Closed dual interval of d as exact surds (lo, hi)."""
    b, s = d.a, SQRT3
    if d.parity == "e":
        if d.eps == -1:
            return -1 / (2 * b - 2 + s), -1 / (2 * b + s)
        return 1 / (2 * b + s), 1 / (2 * b - 2 + s)
    if d.eps == 1:
        return (2 * b - 3 + s) / (2 * b - 1 + s), (2 * b - 1 + s) / (2 * b + 1 + s)
    return (2 * b + 1 + s) / (2 * b - 1 + s), (2 * b - 1 + s) / (2 * b - 3 + s)


def dual_classify(y, absorb=ABSORB):
    """Dual digit of y in [sqrt3-2, sqrt3].

    The printed closed intervals overlap at shared endpoints; a shared
    endpoint is assigned to the interval having it as left endpoint, and
    sqrt3 itself belongs to (2,-1)_o.
    """
    y = exact(y)
    lo, hi = dual_bounds(y)
    slack = 0 if is_exact(y) else absorb
    if y < lo - slack or y > hi + slack:
        raise DomainError(f"y = {y} outside [sqrt3-2, sqrt3]")
    if y == 0 or y == 1:
        raise TerminatedError(f"y = {y} has no dual digit")
    if y < 0:
        b = floor_plus_sqrt3(-1 / y, -1) // 2 + 1
        return Digit(max(b, 2), -1, "e")
    if 3 * y * y < 1:
        b = -(floor_plus_sqrt3(-1 / y, 1) // 2)
        return Digit(max(b, 1), 1, "e")
    if y < 1:
        b = floor_plus_sqrt3((1 + y) / (1 - y), -1) // 2 + 1
        return Digit(max(b, 2), 1, "o")
    b = -(floor_plus_sqrt3(-(y + 1) / (y - 1), 1) // 2)
    return Digit(max(b, 2), -1, "o")


def dual_inverse_branch(d, y):
    y = exact(y)
    b, n = d.a, d.eps
    if d.parity == "e":
        return n / (2 * b + y)
    return 1 / (1 + n / ((b - max(0, n)) + 1 / (1 + y)))


def dual_branch_map(d, y):
    """Dual forward map on the branch of d (inverse of dual_inverse_branch)."""
    y = exact(y)
    b = d.a
    if d.parity == "e":
        return -1 / y - 2 * b if d.eps == -1 else 1 / y - 2 * b
    if d.eps == 1:
        return (b - (b + 1) * y) / (b * y - (b - 1))
    return (b * y - (b + 1)) / (b - (b - 1) * y)


def dual_step(y):
    d = dual_classify(y)
    return d, dual_branch_map(d, y)


def dual_expand(y, depth):
    out = Expansion()
    y = exact(y)
    for _ in range(depth):
        try:
            d, y = dual_step(y)
        except TerminatedError:
            out.terminated = True
            break
        out.digits.append(d)
    return out


def dual_reconstruct(digits, tail=0):
    """hbar_{d1} o ... o hbar_{dn}(tail)."""
    y = exact(tail)
    for d in reversed(digits):
        y = dual_inverse_branch(d, y)
    return y


# ---------------------------------------------------------------------------
# named points

def x_star():
    """Fixed point of the period-2 block (2,-1)_e (3,+1)_o, exact."""
    return (QuadSurd.sqrt(Fraction(13, 5)) - 1) / 2


def y_dagger():
    """Dual period-2 point with digits (2,-1)_e (3,-1)_o, exact."""
    return (-9 + 4 * SQRT3) / 11
