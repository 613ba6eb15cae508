"""Geodesics on the theta-group surface: normalised lifts, the return map
rho, the bijection J with the double cover of the natural extension,
excursion lengths, heights and tessellation crossing counts.

Endpoints are any scalars accepted by :mod:`scfdyn.scalar`; None stands for
the point at infinity.  Exact inputs give exact answers.
"""
from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .convergents import IDENTITY, REFLECT, SIGMA, TAU, TAU_INV, MobiusMap
from .natext import NatExtPoint, double_cover_step
from .scf import (ABSORB, DomainError, TerminatedError, classify, dual_inverse_branch,
                  step, substitute)
from .scalar import QuadSurd, exact, floor_int, floor_plus_sqrt3, is_exact, sqrt3_like

import mpmath

ESCAPE_RTOL = 1e-12
LIFT_MAX_ITER = 10 ** 4


class EscapeError(TerminatedError):
    """Forward endpoint in the escape set E: the geodesic runs into a cusp."""


@dataclass(frozen=True)
class GeodesicEnds:
    forward: object
    backward: object

    @property
    def j(self):
        return 1 if self.forward > 0 else -1

    def __iter__(self):
        return iter((self.forward, self.backward))


@dataclass(frozen=True)
class ExcursionRecord:
    n: int
    digit: object
    r_n: float
    T_n: float
    h_n: float
    alpha_star: object
    beta_star: object

    def row(self):
        return [self.n, str(self.digit), float(self.r_n), float(self.T_n), float(self.h_n)]


def _lift_exact(v):
    """Floats are dyadic rationals; lift them so geometry is decided exactly."""
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            raise DomainError(f"non-finite endpoint {v}")
        return Fraction(float(v))
    return exact(v)


# ---------------------------------------------------------------------------
# the set E and the section I

def _near(a, b):
    return abs(a - b) <= ESCAPE_RTOL * max(1.0, abs(b))


def in_escape_set(z):
    """|z| in E = {k/(k-1), (2k+1)/(2k-1), k : k >= 2}."""
    z = abs(exact(z))
    if is_exact(z):
        if isinstance(z, QuadSurd):
            if not z.is_rational():
                return False
            z = z.a
        if z <= 1:
            return False
        u = 1 / (z - 1)            # k - 1 for k/(k-1); (2k-1)/2 for (2k+1)/(2k-1)
        return (z.denominator == 1 and z >= 2) or (u.denominator == 1) or (
            (2 * u).denominator == 1 and (2 * u) % 2 == 1 and 2 * u >= 3)
    z = float(z)
    if z <= 1:
        return False
    k = round(z)
    if k >= 2 and _near(z, k):
        return True
    u = 1 / (z - 1)
    k = round(u) + 1
    if k >= 2 and _near(z, k / (k - 1)):
        return True
    m = round(2 * u)                # 2k - 1
    if m >= 3 and m % 2 == 1 and _near(z, (m + 2) / m):
        return True
    return False


def in_section(forward, backward):
    """(forward, backward) in I_+ or I_-."""
    if forward is None or backward is None:
        return False
    s = sqrt3_like(exact(backward))
    if forward > 1:
        return -s <= backward < 2 - s
    if forward < -1:
        return s - 2 < backward <= s
    return False


# ---------------------------------------------------------------------------
# normalisation of lifts

def _act(M, z):
    if z is None:
        return None if M.v == 0 else Fraction(M.u, M.v)
    den = M.v * z + M.q
    if den == 0:
        return None
    return (M.u * z + M.p) / den


def _tau_pow(n):
    return MobiusMap(1, 2 * n, 0, 1)


def _round_half_down(c):
    # n with c - 2n in [-1, 1)
    return floor_int((c + 1) / 2)


def normalize_lift(forward, backward, max_iter=LIFT_MAX_ITER):
    """Move a geodesic by an element of the theta group into the section.

    Returns (GeodesicEnds, word) with word(original ends) = new ends.
    """
    f = None if forward is None else exact(forward)
    b = None if backward is None else exact(backward)
    if f is not None and b is not None and f == b:
        raise DomainError("endpoints coincide")
    if f is None and b is None:
        raise DomainError("both endpoints at infinity")
    if in_section(f, b):
        return GeodesicEnds(f, b), IDENTITY

    W = IDENTITY

    def apply(M):
        nonlocal f, b, W
        f, b, W = _act(M, f), _act(M, b), M @ W

    # stage A: reach a lift crossing the ideal triangle (-1, 1, infinity)
    for _ in range(max_iter):
        if b is None:
            apply(_tau_pow(-_round_half_down(f)))
            if f == 0 or f == -1:
                raise DomainError("geodesic joins two cusps (reduction stage, backward at infinity)")
            apply(SIGMA)
            continue
        if f is None:
            apply(_tau_pow(-_round_half_down(b)))
            if b == 0 or b == -1:
                raise DomainError("geodesic joins two cusps (reduction stage, forward at infinity)")
            apply(TAU @ SIGMA)
            continue
        apply(_tau_pow(-_round_half_down((f + b) / 2)))
        lo, hi = min(f, b), max(f, b)
        if lo < -1 or hi > 1:
            break
        if lo == -1 and hi == 1:
            raise DomainError("geodesic is the unit semicircle (cusp to cusp)")
        apply(SIGMA)
    else:
        raise DomainError("reduction stage did not terminate")

    # stage B: the case analysis, run on a left-to-right geodesic
    flip = b > f
    if flip:
        f, b = -f, -b
    V, f, b = _normalize_increasing(f, b, max_iter)
    if flip:
        V = REFLECT @ V @ REFLECT
        f, b = -f, -b
    W = V @ W
    if not in_section(f, b):
        raise DomainError(f"normalisation ended outside the section at {(f, b)}")
    return GeodesicEnds(f, b), W


def _normalize_increasing(f, b, max_iter):
    s = sqrt3_like(b)
    V = IDENTITY

    def apply(M):
        nonlocal f, b, V
        f, b, V = _act(M, f), _act(M, b), M @ V

    if f == 1 or f == -1:
        raise DomainError("forward endpoint at a cusp (case analysis)")
    if b <= -1 and f < 1:                       # case 3
        apply(TAU)
    if b <= -1:                                 # case 1
        apply(_tau_pow(-(floor_plus_sqrt3(b, 1) // 2)))
        return V, f, b
    # case 2: -1 < b < 1 < f
    if b < 2 - s:
        return V, f, b
    if f > 3:
        apply(TAU_INV)
        return V, f, b
    G = TAU @ SIGMA                             # z -> 2 - 1/z, contracts (1, 3]
    for _ in range(max_iter):
        apply(G)
        if b < 2 - s:
            return V, f, b
    raise DomainError("case 2 iteration did not leave [2-sqrt3, 1)")


# ---------------------------------------------------------------------------
# the return map and the bijection J

def _mpow(M, k):
    out = IDENTITY
    while k:
        if k & 1:
            out = out @ M
        M, k = M @ M, k >> 1
    return out


def _rho_word(j, d):
    k = d.a
    st = SIGMA @ _tau_pow(-j)
    if d.parity == "e":
        return SIGMA @ _tau_pow(-j * k)
    if d.eps == -1:
        return _tau_pow(-j) @ _mpow(st, k - 1)
    return _mpow(st, k)


def rho_word(g):
    """(digit, theta-group element) for the return map at g."""
    f = exact(g.forward)
    if in_escape_set(f):
        raise EscapeError(f"forward endpoint {f} lies in E")
    j = 1 if f > 0 else -1
    d = classify(1 / (j * f))
    return d, _rho_word(j, d)


def rho(g):
    _, W = rho_word(g)
    return GeodesicEnds(_act(W, exact(g.forward)), _act(W, exact(g.backward)))


def J(g):
    f, b = exact(g.forward), exact(g.backward)
    if f > 0:
        return NatExtPoint(1 / f, -b, 1)
    return NatExtPoint(-1 / f, b, -1)


def J_inverse(p):
    x, y = exact(p.x), exact(p.y)
    return GeodesicEnds(p.j / x, -p.j * y)


def correspondence_check(p, tol=1e-10, lift=True):
    """J o rho o J^-1 (p) against the double cover step at p.

    With lift=True float coordinates are promoted to the rationals they
    represent, so both sides are evaluated exactly at the same point; the
    o-type branches have derivative up to a^2 and would otherwise amplify
    input rounding differently on the two routes.

    An escape on one side must be matched by termination on the other; when
    both sides stop, EscapeError is raised.
    """
    if lift:
        p = NatExtPoint(_lift_exact(p.x), _lift_exact(p.y), p.j)
    try:
        lhs = J(rho(J_inverse(p)))
    except EscapeError:
        lhs = None
    try:
        rhs = double_cover_step(p)
    except TerminatedError:
        rhs = None
    if lhs is None and rhs is None:
        raise EscapeError(f"x = {p.x} is a branch endpoint")
    if lhs is None or rhs is None:
        return False
    if lhs.j != rhs.j:
        return False
    return abs(float(lhs.x - rhs.x)) <= tol and abs(float(lhs.y - rhs.y)) <= tol


# ---------------------------------------------------------------------------
# excursion lengths

def iota(z):
    """(1-z)/(1+z) on the real line."""
    return (1 - z) / (1 + z)


def iota_tilde(z):
    """(z+1)/(z-1) on the real line."""
    return (z + 1) / (z - 1)


def _log(v):
    if isinstance(v, mpmath.mpf):
        return mpmath.log(v)
    return math.log(float(v))


def excursion_time_formula(alpha_star, beta_star):
    """r = log L(alpha*, beta*) / 2 with the digit read from 1/alpha*.

    Float arguments are read as the rationals they represent, so the
    cancellation in alpha* - 2a near an escape endpoint costs nothing.
    """
    a_ = _lift_exact(alpha_star)
    beta_star = _lift_exact(beta_star)
    if not a_ > 1:
        raise DomainError("alpha* must exceed 1")
    if in_escape_set(a_):
        raise EscapeError(f"alpha* = {a_} is an escape endpoint")
    d = classify(1 / a_)
    a, e = d.a, d.eps
    num = (a_ - 1) * (beta_star + 2 * a) * (beta_star + 2 * a + e)
    den = -(a_ - 2 * a) * (a_ - 2 * a - e) * (beta_star + 1)
    return 0.5 * _log(num / den)


def star_pair(g):
    """(digit, alpha*, beta*) of a normalised geodesic."""
    f, b = _lift_exact(g.forward), _lift_exact(g.backward)
    j = 1 if f > 0 else -1
    alpha, beta = j * f, -j * b
    d = classify(1 / alpha)
    if d.parity == "o":
        return d, iota_tilde(alpha), iota(beta)
    return d, alpha, beta


def excursion_time_direct(g):
    """Hyperbolic distance from the crossing with Re z = j to the crossing
    with the exit arc, from the half cross-ratio (exact for float input)."""
    f, b = _lift_exact(g.forward), _lift_exact(g.backward)
    if in_escape_set(f):
        raise EscapeError(f"forward endpoint {f} lies in E")
    if f < 0:
        f, b = -f, -b
    d = classify(1 / f)
    if d.parity == "o":
        f, b = iota_tilde(f), iota_tilde(b)
        d = substitute(d)
    a, e = d.a, d.eps
    re_eta = (f * b - 2 * a * (2 * a + e)) / ((f + b) - (4 * a + e))
    ratio = abs(f - 1) * abs(re_eta - b) / (abs(1 - b) * abs(f - re_eta))
    return 0.5 * _log(ratio)


# ---------------------------------------------------------------------------
# crossing counts

def _crosses(b, f, p, q):
    """Does the geodesic (b, f) meet the tessellation edge (p, q)?  An edge
    with an endpoint at infinity is the vertical line over the other."""
    lo, hi = min(b, f), max(b, f)
    if p is None or q is None:
        c = q if p is None else p
        return lo < c < hi
    # radical axis of the two circles meets the real line at Re of the
    # intersection point; the point is real iff it is inside both diameters
    s1, s2 = b + f, p + q
    if s1 == s2:
        return False
    x = (f * b - p * q) / (s1 - s2)
    return (x - lo) * (hi - x) > 0 and (x - min(p, q)) * (max(p, q) - x) > 0


def _map_edge(h, edge):
    return tuple(h(z) for z in edge)


def _iota_tilde_ext(z):
    if z is None:
        return Fraction(1)
    if z == 1:
        return None
    return iota_tilde(z)


def crossing_count(g, max_quads=10 ** 7):
    """Number of tessellation quadrilaterals traversed by the first excursion.

    Each step tests the geodesic against the exit edges of the current
    quadrilateral by circle intersection; float endpoints are lifted to
    exact rationals because near the cusp the intersection sits within
    rounding distance of the endpoint.
    """
    f, b = _lift_exact(g.forward), _lift_exact(g.backward)
    if in_escape_set(f):
        raise EscapeError(f"forward endpoint {f} lies in E")
    if f < 0:
        f, b = -f, -b
    o_type = f < 2
    h = _iota_tilde_ext if o_type else (lambda z: z)
    for i in range(1, max_quads + 1):
        # quadrilateral (2i-1, 2i, 2i+1, inf), or its image under iota-tilde
        exits = ((2 * i - 1, 2 * i), (2 * i, 2 * i + 1))
        for e in exits:
            p, q = _map_edge(h, (Fraction(e[0]), Fraction(e[1])))
            if _crosses(b, f, p, q):
                return i
        p, q = _map_edge(h, (Fraction(2 * i + 1), None))
        if not _crosses(b, f, p, q):
            raise DomainError(f"excursion leaves quadrilateral {i} through no edge")
    raise DomainError("crossing walk exceeded its cap")


# ---------------------------------------------------------------------------
# heights

def modified_geodesic(g):
    """Endpoints of gamma*: mirrored to positive forward end, then conjugated
    by iota-tilde when the forward end lies in (1, 2)."""
    f, b = exact(g.forward), exact(g.backward)
    if f < 0:
        f, b = -f, -b
    if f < 2:
        return iota_tilde(f), iota_tilde(b)
    return f, b


def excursion_height(g):
    """log of the Euclidean radius of gamma*."""
    f, b = modified_geodesic(g)
    return math.log(abs(float(f - b)) / 2)


def height_bracket(a):
    s = 3 ** 0.5
    return a - (3 - s) / 2, a + (s + 1) / 2


def horocycle_distance_at_one(p):
    """Signed hyperbolic distance from p (complex) to the horocycle
    |z - (1+i)| = 1 based at the cusp 1."""
    return math.log(2 * p.imag / abs(p - 1) ** 2)


# ---------------------------------------------------------------------------
# orbits of excursions

def excursions(g, n, T_max=None):
    """ExcursionRecords for n returns (or until the cumulative time exceeds
    T_max).  g must be normalised; ρ is applied between records."""
    out, T = [], 0.0
    for k in range(1, n + 1):
        d, a_s, b_s = star_pair(g)
        r = excursion_time_formula(a_s, b_s)
        T += r
        out.append(ExcursionRecord(k, d, r, T, excursion_height(g), a_s, b_s))
        if T_max is not None and T > T_max:
            break
        g = rho(g)
    return out


def _f_observable(x, tx):
    if x <= 0.5:
        return 1 / tx ** 2 if tx <= 0.5 else 2 / (1 - tx) ** 2
    return (1 + tx) ** 2 / (1 - tx) ** 2 if tx > 0.5 else (1 + tx) ** 2 / (2 * tx ** 2)


def log_f(x):
    """log f(x) for the four-case function whose mu-average is C*."""
    _, tx = step(x)
    return math.log(float(_f_observable(x, tx)))


def cstar_estimators(x, N, y=0.0, with_return_time=False):
    """(2 log Q_N / N, mean of log f along the orbit) and optionally T_N/N.

    Works in the arithmetic of x; a float x uses the absorption band.
    """
    x = exact(x)
    inexact = not is_exact(x)
    V, Q, logscale = 0.0, 1.0, 0.0
    s_f = 0.0
    s_r = 0.0
    beta = exact(y)
    for _ in range(N):
        if inexact and (x < ABSORB or 1 - x < ABSORB):
            raise TerminatedError("orbit entered the absorption band")
        if x == 0 or x == 1:
            raise TerminatedError("orbit terminated")
        d, tx = step(x)
        s_f += math.log(float(_f_observable(x, tx)))
        if with_return_time:
            alpha = 1 / x
            if d.parity == "o":
                s_r += excursion_time_formula(iota_tilde(alpha), iota(beta))
            else:
                s_r += excursion_time_formula(alpha, beta)
            beta = dual_inverse_branch(d, beta)
        # (V, Q) <- (V, Q) * M_d, rescaled
        if d.parity == "e":
            V, Q = d.eps * Q, V + 2 * d.a * Q
        else:
            m = d.a - d.eps_bar
            V, Q = m * V + (m + 1) * Q, (m + d.eps) * V + (m + d.eps + 1) * Q
        V, Q = float(V), float(Q)
        sc = abs(Q)
        V, Q, logscale = V / sc, Q / sc, logscale + math.log(sc)
        x = tx
    est = (2 * logscale / N, s_f / N)
    return est + (s_r / N,) if with_return_time else est


def product_ratios(x, y, N):
    """Running ratios prod L_alpha / R_N^2 and prod L_beta / Q_N^2 for n <= N.

    Works in float with exact integer convergents; used to exhibit the
    boundedness of both ratios.
    """
    from .convergents import ConvergentState, accumulate
    x, beta = float(x), float(y)
    st = ConvergentState()
    digits, alphas, betas = [], [], []
    for _ in range(N + 1):
        d, tx = step(x)
        digits.append(d)
        alpha = 1 / x
        if d.parity == "o":
            alphas.append(iota_tilde(alpha))
            betas.append(iota(beta))
        else:
            alphas.append(alpha)
            betas.append(beta)
        beta = dual_inverse_branch(d, beta)
        x = tx
    for d in digits:
        st = accumulate(st, d)
    la = lb = 0.0
    ra, rb = [], []
    for n in range(1, N + 1):
        d, a_s, b_s = digits[n - 1], alphas[n - 1], betas[n - 1]
        a, e = d.a, d.eps
        la += math.log((a_s - 1) / (-(a_s - 2 * a) * (a_s - 2 * a - e)))
        lb += math.log((b_s + 2 * a) * (b_s + 2 * a + e) / (b_s + 1))
        Qh = st.Q_history
        R = Qh[n + 1] if digits[n - 1].parity == digits[n].parity else Qh[n]
        ra.append(la - 2 * math.log(R))
        rb.append(lb - 2 * math.log(Qh[n]))
    return np.exp(ra), np.exp(rb)
