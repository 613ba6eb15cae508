"""Discretised transfer operator of the SCF map.

Functions on [0,1] are stored by their values at grid nodes and read
between nodes by piecewise-linear interpolation.  Branches with partial
quotient a <= K are summed explicitly; one application is a dense
matrix-vector product with a collocation matrix assembled once per (grid, K).
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np
from scipy.special import polygamma

from .natext import C0, SQ3, density_mu, mu_cdf


class NonConvergenceError(ArithmeticError):
    pass


def make_nodes(G, rule="uniform"):
    if G < 2:
        raise ValueError("need at least two nodes")
    if rule == "uniform":
        return np.linspace(0.0, 1.0, G)
    if rule == "chebyshev":
        return 0.5 * (1 - np.cos(np.pi * np.arange(G) / (G - 1)))
    raise ValueError(f"unknown node rule {rule!r}")


@dataclass
class DensityGrid:
    values: np.ndarray
    nodes: np.ndarray
    rule: str = "uniform"
    tail_bound: float = 0.0

    @classmethod
    def from_function(cls, f, G, rule="uniform"):
        x = make_nodes(G, rule)
        return cls(np.asarray(f(x), float) * np.ones(G), x, rule)

    @property
    def G(self):
        return len(self.nodes)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values)

    def integral(self):
        return float(np.sum(trapezoid_weights(self.nodes) * self.values))

    def like(self, values, tail_bound=0.0):
        return DensityGrid(np.asarray(values, float), self.nodes, self.rule, tail_bound)


def trapezoid_weights(x):
    """Weights integrating the piecewise-linear interpolant exactly."""
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


# ---------------------------------------------------------------------------
# assembly

@numba.njit(cache=True)
def _scatter(P, i, p, w, nodes, uniform):
    G = nodes.shape[0]
    if uniform:
        j = int(p * (G - 1))
        if j >= G - 1:
            j = G - 2
    else:
        lo, hi = 0, G - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if nodes[mid] <= p:
                lo = mid
            else:
                hi = mid
        j = lo
    lam = (p - nodes[j]) / (nodes[j + 1] - nodes[j])
    P[i, j] += w * (1.0 - lam)
    P[i, j + 1] += w * lam


@numba.njit(cache=True)
def _assemble(nodes, K, uniform):
    G = nodes.shape[0]
    P = np.zeros((G, G))
    for i in range(G):
        x = nodes[i]
        # (1,+1)_e
        t = 1.0 / (x + 2.0)
        _scatter(P, i, t, t * t, nodes, uniform)
        for k in range(2, K + 1):
            # (k,+1)_e and (k,-1)_e
            t = 1.0 / (x + 2.0 * k)
            _scatter(P, i, t, t * t, nodes, uniform)
            t = 1.0 / (2.0 * k - x)
            _scatter(P, i, t, t * t, nodes, uniform)
            # (k,-1)_o and (k,+1)_o
            den = k + (k + 1.0) * x
            _scatter(P, i, (k * x + (k - 1.0)) / den, 1.0 / (den * den), nodes, uniform)
            den = k * x + (k + 1.0)
            _scatter(P, i, (k + (k - 1.0) * x) / den, 1.0 / (den * den), nodes, uniform)
    return P


def _closure_weights(x, K):
    """Exact sums over a > K of |h'(x)|, split by where the branches land.

    e-type branches with a > K map into [0, 1/(2K+1)], o-type ones into
    [K/(K+1), 1]; both cells are shorter than a grid cell once K > G.
    """
    e = 0.25 * (polygamma(1, K + 1 + x / 2) + polygamma(1, K + 1 - x / 2))
    o = (polygamma(1, K + 1 + x / (x + 1)) + polygamma(1, K + 1 + 1 / (x + 1))) / (x + 1) ** 2
    return e, o


@lru_cache(maxsize=8)
def _operator_matrix(G, rule, K, tail):
    x = make_nodes(G, rule)
    P = _assemble(x, K, rule == "uniform")
    if tail == "closure":
        e, o = _closure_weights(x, K)
        P[:, 0] += e
        P[:, -1] += o
    P.setflags(write=False)
    return P


TAIL_MODES = ("closure", "truncate")


def operator_matrix(G, K, rule="uniform", tail="closure"):
    """Collocation matrix of the operator with explicit branches a <= K.

    tail="truncate" drops the branches a > K; tail="closure" adds their
    exact derivative sums with f frozen at the endpoint they approach,
    which leaves an O(1/K^2) error instead of O(1/K).
    """
    if K < 2:
        raise ValueError("branch cutoff K must be at least 2")
    if tail not in TAIL_MODES:
        raise ValueError(f"tail must be one of {TAIL_MODES}")
    return _operator_matrix(int(G), rule, int(K), tail)


def tail_bound(sup_f, K):
    """sup|f| * sum_{a>K} (2/(2a)^2 + 2*2/a^2) from the derivative bounds."""
    return float(sup_f * 4.5 * polygamma(1, K + 1))


def apply_L(f, K, tail="closure"):
    P = operator_matrix(f.G, K, f.rule, tail)
    return f.like(P @ f.values, tail_bound(np.max(np.abs(f.values)), K))


def apply_normalized(g, K, tail="closure"):
    fm = density_mu(g.nodes)
    P = operator_matrix(g.G, K, g.rule, tail)
    out = P @ (fm * g.values) / fm
    # f_mu is smallest at x = 1, where it equals C0/2
    return g.like(out, tail_bound(np.max(np.abs(fm * g.values)), K) / (C0 / 2))


# ---------------------------------------------------------------------------
# spectrum

@dataclass
class SpectrumReport:
    leading_eigenvalue: float
    leading_eigenfunction: DensityGrid
    second_modulus_estimate: float
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list)
    left_eigenvector: np.ndarray = None
    K: int = None
    tail: str = "closure"

    def to_dict(self):
        return {
            "leading_eigenvalue": self.leading_eigenvalue,
            "second_modulus_estimate": self.second_modulus_estimate,
            "iterations": self.iterations,
            "residual": self.residual,
            "residual_history": list(map(float, self.residual_history)),
            "grid": self.leading_eigenfunction.G,
            "rule": self.leading_eigenfunction.rule,
            "sup_distance_to_density": float(np.max(np.abs(
                self.leading_eigenfunction.values - density_mu(self.leading_eigenfunction.nodes)))),
        }


def _power(A, w, v, tol, max_iter):
    hist = []
    lam = 0.0
    for it in range(1, max_iter + 1):
        Av = A @ v
        lam = float(w @ Av) / float(w @ v)
        res = float(np.max(np.abs(Av - lam * v)) / np.max(np.abs(v)))
        hist.append(res)
        v = Av / float(w @ Av)
        if res < tol:
            return lam, v, it, hist
    raise NonConvergenceError(f"power iteration stalled, last residual {hist[-1]:.3e}")


def leading_eigenpair(G=2048, K=10 ** 4, tol=1e-8, rule="uniform", max_iter=2000,
                      deflation_steps=60, tail="closure"):
    """Perron eigenpair of the truncated operator and a second-modulus estimate.

    The eigenfunction is normalised to unit integral.  theta-hat comes from
    power iteration on the operator with the Perron projection removed,
    taking the geometric mean growth of the iterates.
    """
    P = operator_matrix(G, K, rule, tail)
    x = make_nodes(G, rule)
    w = trapezoid_weights(x)
    lam, phi, its, hist = _power(P, w, np.ones(G), tol, max_iter)
    phi = phi / float(w @ phi)
    # left eigenvector: the discrete counterpart of Lebesgue integration
    _, psi, _, _ = _power(P.T, np.ones(G), w.copy(), tol, max_iter)
    psi = psi / float(psi @ phi)
    theta = _deflated_rate(P / lam, phi, psi, deflation_steps)
    return SpectrumReport(lam, DensityGrid(phi, x, rule), theta, its, hist[-1], hist, psi, K, tail)


def _deflated_rate(A, phi, psi, steps, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(len(phi))
    v -= phi * float(psi @ v)
    norms = []
    for _ in range(steps):
        v = A @ v
        v -= phi * float(psi @ v)       # keep rounding out of the Perron direction
        n = float(np.linalg.norm(v))
        norms.append(n)
        v /= n
    logs = np.log(norms)
    half = steps // 2
    return float(np.exp(np.mean(logs[half:])))


# ---------------------------------------------------------------------------
# superlevel sets and mixing

def superlevel_measure(N):
    """mu of {a_1 > N} = [0, 1/(2N+1)] u [N/(N+1), 1]."""
    if N < 1:
        raise ValueError("N must be positive")
    return float(C0 * np.log1p(1.0 / (N + (SQ3 - 1) / 2)))


def superlevel_measure_quadrature(N):
    return float(mu_cdf(1.0 / (2 * N + 1)) + 1.0 - mu_cdf(N / (N + 1.0)))


def _polish(A, v, steps=80):
    # extra power steps push the Perron vector to rounding level (theta^80)
    for _ in range(steps):
        v = A @ v
        v = v / np.max(np.abs(v))
    return v


def _indicator(nodes, intervals):
    out = np.zeros_like(nodes)
    for lo, hi in intervals:
        out[(nodes >= lo) & (nodes <= hi)] = 1.0
    return out


def correlation_decay(N, U, n_max, G=1024, K=10 ** 4, rule="uniform", spectrum=None,
                      tail="closure"):
    """Deviations mu(S_N n T^-n U) - mu(S_N) mu(U) for n = 0..n_max.

    The indicator of S_N is pushed forward by the normalised operator and
    integrated against the indicator of U.  Normalisation uses the discrete
    Perron pair (phi, psi) of the truncated matrix, so the discrete chain
    fixes constants and preserves its invariant weights psi*phi exactly; the
    deviations then decay at the discrete second-eigenvalue rate down to
    rounding instead of stalling on truncation drift.
    """
    rep = spectrum or leading_eigenpair(G, K, rule=rule, tail=tail)
    P = operator_matrix(rep.leading_eigenfunction.G, rep.K, rep.leading_eigenfunction.rule, rep.tail)
    x = rep.leading_eigenfunction.nodes
    phi, psi = _polish(P, rep.leading_eigenfunction.values), _polish(P.T, rep.left_eigenvector)
    lam = float(psi @ (P @ phi)) / float(psi @ phi)
    psi = psi / float(psi @ phi)
    m = psi * phi                       # discrete invariant weights, sum 1
    g = _indicator(x, [(0.0, 1.0 / (2 * N + 1)), (N / (N + 1.0), 1.0)])
    u = _indicator(x, U if np.ndim(U) == 2 else [tuple(U)])
    mu_s, mu_u = float(m @ g), float(m @ u)
    out = []
    for n in range(n_max + 1):
        out.append(float(m @ (u * g)) - mu_s * mu_u)
        g = (P @ (phi * g)) / (lam * phi)
    return np.array(out)
