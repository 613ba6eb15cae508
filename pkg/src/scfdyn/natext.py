"""Planar natural extension on [0,1] x [sqrt3-2, sqrt3], its double cover
with an orientation sign, and the invariant densities.
"""
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import integrate

from .scf import (ABSORB, TerminatedError, classify, dual_inverse_branch, step)
from .scalar import exact, is_exact

SQ3 = np.sqrt(3.0)
LOG_NORM = np.log(2.0 + SQ3)          # log(2+sqrt3), total mass of dx dy/(1+xy)^2
C0 = 2.0 / LOG_NORM                   # density of mu at 0
Y_MIN, Y_MAX = SQ3 - 2.0, SQ3


@dataclass(frozen=True)
class NatExtPoint:
    x: object
    y: object
    j: int = 1


def nat_step(x, y):
    x = exact(x)
    if x == 0 or x == 1:
        raise TerminatedError("x is an endpoint")
    d, tx = step(x)
    band = 0 if is_exact(tx) else ABSORB
    if tx <= band or tx >= 1 - band:
        raise TerminatedError(f"orbit of {x} terminates")
    return tx, dual_inverse_branch(d, y)


def double_cover_step(p):
    d = classify(exact(p.x))
    x1, y1 = nat_step(p.x, p.y)
    return NatExtPoint(x1, y1, -d.eps * p.j)


# ---------------------------------------------------------------------------
# densities

def _is_mp(x):
    return isinstance(x, mpmath.mpf)


def density_mu(x):
    if _is_mp(x):
        s = mpmath.sqrt(3)
        return 2 / (mpmath.log(2 + s) * (1 - (2 - s) * x) * (1 + s * x))
    x = np.asarray(x, dtype=float) if not np.isscalar(x) else float(x)
    return C0 / ((1 - (2 - SQ3) * x) * (1 + SQ3 * x))


def density_mu_bar(x, y):
    if _is_mp(x) or _is_mp(y):
        return 1 / (mpmath.log(2 + mpmath.sqrt(3)) * (1 + x * y) ** 2)
    return 1.0 / (LOG_NORM * (1 + np.asarray(x, float) * np.asarray(y, float)) ** 2)


def density_mu_tilde(x, y, j=1):
    """Unnormalised density dx dy dj / (1+xy)^2 (total mass 2 log(2+sqrt3))."""
    if j not in (1, -1):
        raise ValueError("j must be +1 or -1")
    return 1.0 / (1 + np.asarray(x, float) * np.asarray(y, float)) ** 2


def mu_cdf(x):
    """mu([0, x])."""
    x = np.asarray(x, float)
    return np.log((1 + SQ3 * x) / (1 - (2 - SQ3) * x)) / LOG_NORM


def mu_interval(lo, hi):
    """mu([lo, hi]) evaluated without cancellation for short intervals."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    # log((1+s hi)(1-c lo)/((1+s lo)(1-c hi))) with c = 2-sqrt3
    c = 2 - SQ3
    num = (hi - lo) * (SQ3 + c)
    den = (1 + SQ3 * lo) * (1 - c * hi)
    return np.log1p(num / den) / LOG_NORM


def box_measure_mu_bar(x0, x1, y0, y1):
    """Closed-form mu_bar of [x0,x1] x [y0,y1].

    The double integral of 1/(1+xy)^2 equals
    log((1+x1 y1)(1+x0 y0) / ((1+x1 y0)(1+x0 y1))); the numerator of the ratio
    minus its denominator is (x1-x0)(y1-y0), which feeds log1p.
    """
    x0, x1, y0, y1 = (np.asarray(v, float) for v in (x0, x1, y0, y1))
    area = (x1 - x0) * (y1 - y0)
    return np.log1p(area / ((1 + x1 * y0) * (1 + x0 * y1))) / LOG_NORM


def marginal_mu_bar(x):
    """Integral of the mu_bar density over the dual domain at fixed x > 0."""
    x = np.asarray(x, float)
    return (1 / (1 + Y_MIN * x) - 1 / (1 + Y_MAX * x)) / (x * LOG_NORM)


# ---------------------------------------------------------------------------
# preimages of boxes

def _h_e(a, eps, t):
    return 1.0 / (2 * a + eps * t)


def _h_o(a, eps, t):
    m = a - np.maximum(0, eps)
    return 1.0 / (1 + 1.0 / (m + eps / (1 + t)))


def _dual_interval_arrays(a, eps, parity):
    a = np.asarray(a, float)
    if parity == "e":
        if eps == -1:
            return -1 / (2 * a - 2 + SQ3), -1 / (2 * a + SQ3)
        return 1 / (2 * a + SQ3), 1 / (2 * a - 2 + SQ3)
    if eps == 1:
        return (2 * a - 3 + SQ3) / (2 * a - 1 + SQ3), (2 * a - 1 + SQ3) / (2 * a + 1 + SQ3)
    return (2 * a + 1 + SQ3) / (2 * a - 1 + SQ3), (2 * a - 1 + SQ3) / (2 * a - 3 + SQ3)


def _dual_forward(a, eps, parity, y):
    if parity == "e":
        return -1 / y - 2 * a if eps == -1 else 1 / y - 2 * a
    if eps == 1:
        return (a - (a + 1) * y) / (a * y - (a - 1))
    return (a * y - (a + 1)) / (a - (a - 1) * y)


FAMILIES = (("e", 1), ("e", -1), ("o", 1), ("o", -1))


def _family_start(parity, eps):
    return 1 if (parity, eps) == ("e", 1) else 2


def _family_mass(parity, eps, a, x0, x1, y0, y1):
    """mu_bar of the preimage pieces for digits (a, eps)_parity, a array."""
    h = _h_e if parity == "e" else _h_o
    u0, u1 = h(a, eps, x0), h(a, eps, x1)
    xl, xh = np.minimum(u0, u1), np.maximum(u0, u1)
    lo, hi = _dual_interval_arrays(a, eps, parity)
    jl, jh = np.maximum(lo, y0), np.minimum(hi, y1)
    ok = jl < jh
    af = np.asarray(a, float)
    v0 = _dual_forward(af, eps, parity, np.where(ok, jl, lo))
    v1 = _dual_forward(af, eps, parity, np.where(ok, jh, hi))
    yl = np.clip(np.minimum(v0, v1), Y_MIN, Y_MAX)
    yh = np.clip(np.maximum(v0, v1), Y_MIN, Y_MAX)
    return np.where(ok, box_measure_mu_bar(xl, xh, yl, yh), 0.0)


def _strip_mass(parity, eps, b, x0, x1):
    """mu of h_(b,eps)_parity([x0, x1]); the image length is written in
    closed form so that large b does not suffer cancellation."""
    if parity == "e":
        u0, u1 = _h_e(b, eps, x0), _h_e(b, eps, x1)
        length = (x1 - x0) / ((2 * b + eps * x0) * (2 * b + eps * x1))
    else:
        m = b - max(0, eps)
        g0, g1 = m + eps / (1 + x0), m + eps / (1 + x1)
        u0, u1 = g0 / (g0 + 1), g1 / (g1 + 1)
        length = (x1 - x0) / ((1 + x0) * (1 + x1) * (g0 + 1) * (g1 + 1))
    lo = np.minimum(u0, u1)
    c = 2 - SQ3
    return np.log1p(length * (SQ3 + c) / ((1 + SQ3 * lo) * (1 - c * (lo + length)))) / LOG_NORM


def preimage_measure_mu_bar(x0, x1, y0, y1, K=None):
    """mu_bar of the preimage of a box under the natural extension.

    Branches are enumerated explicitly up to a cutoff past which every dual
    interval of a family lies entirely inside [y0, y1] (only possible when
    the family's accumulation point, 0 or 1, is interior).  The remaining
    sum of x-strip masses is bracketed by integral comparison, valid because
    the strip mass is a convex decreasing function of the branch index there.

    Returns (value, tail_error_bound).
    """
    x0, x1, y0, y1 = map(float, (x0, x1, y0, y1))
    if x1 <= x0 or y1 <= y0:
        return 0.0, 0.0
    total, err = 0.0, 0.0
    for parity, eps in FAMILIES:
        acc = 0.0 if parity == "e" else 1.0
        inner = y0 < acc < y1
        # last branch index whose dual interval can straddle y0 or y1
        gap = min(abs(y0 - acc), abs(y1 - acc))
        if parity == "e":
            need = int(0.5 * (1.0 / max(gap, 1e-300) + 2)) + 2
        else:
            need = int(1.0 / max(gap, 1e-300)) + 2
        if not inner:
            # finite list of branches only; beyond 'need' the dual intervals
            # sit strictly between the accumulation point and the box
            if need > 10 ** 8:
                raise ValueError("box edge too close to an accumulation point of the dual intervals")
            Kf = need
        else:
            Kf = max(need, K or 2000)
        start = _family_start(parity, eps)
        for lo in range(start, Kf + 1, 10 ** 6):
            a = np.arange(lo, min(Kf, lo + 10 ** 6 - 1) + 1, dtype=float)
            total += float(np.sum(_family_mass(parity, eps, a, x0, x1, y0, y1)))
        if inner:
            val, bnd = _tail_sum(lambda b: _strip_mass(parity, eps, b, x0, x1), Kf)
            total += val
            err += bnd
    return total, err


def _tail_sum(F, K, B=10 ** 6):
    """Sum_{b > K} F(b) for a convex decreasing F: explicit up to B, then
    bracketed by integral comparison.  Returns (estimate, half-width)."""
    B = max(B, 4 * K)
    explicit = 0.0
    for lo in range(K + 1, B + 1, 10 ** 6):
        explicit += float(np.sum(F(np.arange(lo, min(B, lo + 10 ** 6 - 1) + 1, dtype=float))))
    b = np.array([B + 1.0, B + 2.0, B + 3.0])
    if F(b[0]) - 2 * F(b[1]) + F(b[2]) < -1e-24:
        raise ArithmeticError("strip mass not convex at the cutoff")
    # midpoint rule overestimates, trapezoid underestimates a convex integral;
    # s = 1/b turns the infinite range into a finite smooth one
    def integral(c):
        g = lambda u: F(1.0 / u) / (u * u)
        return integrate.quad(g, 0.0, 1.0 / c, epsabs=0.0, epsrel=1e-12, limit=200)
    up, e1 = integral(B + 0.5)
    low, e2 = integral(B + 1.0)
    low += 0.5 * F(B + 1.0)
    return explicit + 0.5 * (up + low), 0.5 * abs(up - low) + e1 + e2
