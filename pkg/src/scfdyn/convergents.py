"""Integer Mobius matrices of SCF digits and exact convergent products."""
from dataclasses import dataclass
from fractions import Fraction

from .scf import Digit, substitute
from .scalar import exact


@dataclass(frozen=True)
class MobiusMap:
    """Integer matrix ((u, p), (v, q)) acting by z -> (u z + p)/(v z + q)."""

    u: int
    p: int
    v: int
    q: int

    def __matmul__(self, o):
        return MobiusMap(self.u * o.u + self.p * o.v, self.u * o.p + self.p * o.q,
                         self.v * o.u + self.q * o.v, self.v * o.p + self.q * o.q)

    def det(self):
        return self.u * self.q - self.p * self.v

    def inverse(self):
        dt = self.det()
        if dt not in (1, -1):
            raise ValueError("not unimodular")
        return MobiusMap(self.q * dt, -self.p * dt, -self.v * dt, self.u * dt)

    def transpose(self):
        return MobiusMap(self.u, self.v, self.p, self.q)

    def __call__(self, z):
        """Action on a real point; None stands for infinity."""
        if z is None:
            return None if self.v == 0 else Fraction(self.u, self.v)
        z = exact(z)
        den = self.v * z + self.q
        if den == 0:
            return None
        return (self.u * z + self.p) / den

    def rows(self):
        return ((self.u, self.p), (self.v, self.q))


IDENTITY = MobiusMap(1, 0, 0, 1)
TAU = MobiusMap(1, 2, 0, 1)
TAU_INV = MobiusMap(1, -2, 0, 1)
SIGMA = MobiusMap(0, -1, 1, 0)
REFLECT = MobiusMap(-1, 0, 0, 1)     # z -> -z, normalises the theta group


def digit_matrix(d):
    if d.parity == "e":
        return MobiusMap(0, 1, d.eps, 2 * d.a)
    m = d.a - d.eps_bar
    return MobiusMap(m, m + d.eps, m + 1, m + d.eps + 1)


@dataclass(frozen=True)
class ConvergentState:
    """Running products M_n and Mhat_n (parity-swapped digits) with the
    previous step kept for the column identity and Q_0..Q_n for R_N."""

    M: MobiusMap = IDENTITY
    Mhat: MobiusMap = IDENTITY
    n: int = 0
    prev_M: MobiusMap = IDENTITY
    prev_Mhat: MobiusMap = IDENTITY
    Q_history: tuple = (1,)

    @property
    def P(self):
        return self.M.p

    @property
    def Q(self):
        return self.M.q

    @property
    def U(self):
        return self.M.u

    @property
    def V(self):
        return self.M.v

    @property
    def Phat(self):
        return self.Mhat.p

    @property
    def Qhat(self):
        return self.Mhat.q

    def convergent(self):
        return Fraction(self.P, self.Q)


def accumulate(state, d):
    M = state.M @ digit_matrix(d)
    Mh = state.Mhat @ digit_matrix(substitute(d))
    return ConvergentState(M, Mh, state.n + 1, state.M, state.Mhat, state.Q_history + (M.q,))


def convergent_states(digits):
    """States after 0, 1, ..., len(digits) digits."""
    out = [ConvergentState()]
    for d in digits:
        out.append(accumulate(out[-1], d))
    return out


def hat_identity_check(state, d_last):
    """Exact column identity linking (Phat_j, Qhat_j) with (P, Q) at j-1, j.

    For an e-type last digit the hatted column is produced from the plain
    ones; for an o-type digit the roles are swapped.
    """
    if state.n < 1:
        raise ValueError("need at least one digit")
    e = d_last.eps
    if d_last.parity == "e":
        src_prev, src, dst = state.prev_M, state.M, state.Mhat
    else:
        src_prev, src, dst = state.prev_Mhat, state.Mhat, state.M
    lhs_p = e * (src_prev.q - src_prev.p) + (src.q - src.p)
    lhs_q = e * (src_prev.q + src_prev.p) + (src.q + src.p)
    return lhs_p == 2 * dst.p and lhs_q == 2 * dst.q


def r_selector(state, N, s_N, s_next):
    """R_N = Q_{N+1} when the parities of digits N and N+1 agree, else Q_N."""
    if len(state.Q_history) < N + 2:
        raise IndexError(f"state holds {state.n} digits, need {N + 1}")
    return state.Q_history[N + 1] if s_N == s_next else state.Q_history[N]


def product(digits):
    M = IDENTITY
    for d in digits:
        M = M @ digit_matrix(d)
    return M


def sign_product(digits):
    """prod(-eps_i), the determinant predicted for the digit product."""
    s = 1
    for d in digits:
        s *= -d.eps
    return s
