"""Monte Carlo extreme value experiments for digit maxima and for the
heights of geodesic excursions, plus the excursion-time constant harness.

Randomness is counter based: the uniforms used by sample i in rejection
round r come from element i of a Philox stream keyed by (seed, r, component),
so a sample's value depends only on (seed, i) and never on M, the thread
count or the order in which samples are processed.
"""
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import mpmath
import numpy as np

from . import kernels
from .natext import C0, LOG_NORM, SQ3, Y_MAX, Y_MIN, density_mu
from .scf import ABSORB, A_MAX, dual_inverse_branch, step

CSTAR_REFERENCE = 3.72805
MEASURES = ("uniform", "mu", "mu_tilde")
MU_BOUND = C0                                   # sup f_mu = f_mu(0)
MU_TILDE_BOUND = (2.0 + SQ3) / 2.0              # sup 1/(1+xy)^2, at x=1, y=sqrt3-2
MAX_ROUNDS = 400


class SamplingError(RuntimeError):
    """Rejection sampler exceeded its round cap."""


# ---------------------------------------------------------------------------
# configuration and results

@dataclass
class ExperimentConfig:
    samples: int = 10 ** 5
    depth: float = 10 ** 4                      # N for digits, T for geodesics
    y_grid: tuple = (0.5, 1.0, 2.0, 4.0)
    sampling_measure: str = "uniform"
    seed: int = 0
    precision: int = 53
    cstar: float = CSTAR_REFERENCE
    tolerance: float = 0.02

    def validate(self, min_samples=1, min_depth=1):
        if int(self.samples) != self.samples or self.samples < min_samples:
            raise ValueError(f"samples must be an integer >= {min_samples}")
        if not self.depth >= min_depth:
            raise ValueError(f"depth/horizon must be >= {min_depth}")
        if len(self.y_grid) == 0 or any(not (y > 0) for y in self.y_grid):
            raise ValueError("y_grid must be a non-empty list of positive numbers")
        if self.sampling_measure not in MEASURES:
            raise ValueError(f"sampling_measure must be one of {MEASURES}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.precision < 53:
            raise ValueError("precision must be at least 53 bits")
        if not self.cstar > 0:
            raise ValueError("cstar must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        return self


@dataclass
class EmpiricalCDF:
    y: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    stderr: np.ndarray
    samples: int
    depth: float
    measure: str
    seed: int
    excluded: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_maxima(cls, stat, thresholds, y, cfg, excluded=0, extra=None):
        y = np.asarray(y, float)
        M = len(stat)
        srt = np.sort(stat)
        counts = np.searchsorted(srt, thresholds, side="right")
        p = counts / M if M else np.full(len(y), np.nan)
        return cls(y, p, np.exp(-1.0 / y), np.sqrt(p * (1 - p) / max(M, 1)), M,
                   cfg.depth, cfg.sampling_measure, int(cfg.seed), excluded, extra or {})

    def deviation(self):
        return np.abs(self.empirical - self.theoretical)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "empirical", "theoretical", "stderr", "M", "N_or_T", "measure", "seed"])
        for k in range(len(self.y)):
            w.writerow([repr(float(self.y[k])), repr(float(self.empirical[k])),
                        repr(float(self.theoretical[k])), repr(float(self.stderr[k])),
                        self.samples, _num(self.depth), self.measure, self.seed])
        return buf.getvalue()

    def summary(self, cfg, tolerance):
        dev = self.deviation()
        return {
            "config": _config_dict(cfg),
            "tolerance": tolerance,
            "samples_used": self.samples,
            "excluded": self.excluded,
            "points": [{"y": float(y), "empirical": float(e), "theoretical": float(t),
                        "stderr": float(s), "deviation": float(d), "pass": bool(d <= tolerance)}
                       for y, e, t, s, d in zip(self.y, self.empirical, self.theoretical,
                                                self.stderr, dev)],
            "pass": bool(np.all(dev <= tolerance)),
            **self.extra,
        }


def _num(v):
    return int(v) if float(v).is_integer() else float(v)


def _config_dict(cfg):
    d = asdict(cfg)
    d["y_grid"] = [float(y) for y in cfg.y_grid]
    return d


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# sampling

def _uniforms(seed, rnd, component, M):
    ss = np.random.SeedSequence([int(seed), rnd, component])
    return np.random.Generator(np.random.Philox(ss)).random(M)


def _signs(seed, rnd, M):
    ss = np.random.SeedSequence([int(seed), rnd, 3])
    return np.where(np.random.Generator(np.random.Philox(ss)).integers(0, 2, M) == 1, 1, -1)


@dataclass
class Draw:
    x: np.ndarray
    y: np.ndarray = None
    j: np.ndarray = None
    rounds: int = 1
    proposals: int = 0

    @property
    def acceptance(self):
        return len(self.x) / self.proposals if self.proposals else 1.0


def draw_starts(tag, seed, M, max_rounds=MAX_ROUNDS):
    """M independent starts from the named measure.

    Every pending sample i consumes element i of round r's streams; samples
    rejected in round r retry in round r+1, so the draw for index i is the
    same for any M > i.
    """
    if tag not in MEASURES:
        raise ValueError(f"unknown sampling measure {tag!r}")
    if tag == "uniform":
        x = _uniforms(seed, 0, 0, M)
        y = Y_MIN + (Y_MAX - Y_MIN) * _uniforms(seed, 0, 1, M)
        return Draw(x, y, _signs(seed, 0, M), 1, M)
    x = np.full(M, np.nan)
    y = np.full(M, np.nan)
    j = np.zeros(M, dtype=np.int64)
    pending = np.arange(M)
    proposals = 0
    for rnd in range(max_rounds):
        if pending.size == 0:
            return Draw(x, y, j, rnd, proposals)
        n = int(pending[-1]) + 1
        u = _uniforms(seed, rnd, 0, n)[pending]
        v = _uniforms(seed, rnd, 1, n)[pending]
        w = _uniforms(seed, rnd, 2, n)[pending]
        proposals += pending.size
        if tag == "mu":
            yy = Y_MIN + (Y_MAX - Y_MIN) * v
            ok = w * MU_BOUND <= density_mu(u)
        else:
            yy = Y_MIN + (Y_MAX - Y_MIN) * v
            ok = w * MU_TILDE_BOUND <= 1.0 / (1.0 + u * yy) ** 2
        acc = pending[ok]
        x[acc] = u[ok]
        y[acc] = yy[ok]
        j[acc] = _signs(seed, rnd, n)[acc]
        pending = pending[~ok]
    if pending.size:
        raise SamplingError(f"{pending.size} samples still rejected after {max_rounds} rounds")
    return Draw(x, y, j, max_rounds, proposals)


def sample_measure(tag, rng):
    """One draw from the named measure using a numpy Generator.

    uniform and mu give a float x; mu_tilde gives (x, y, j).
    """
    from .natext import NatExtPoint
    if tag == "uniform":
        return float(rng.random())
    for _ in range(10 ** 6):
        u, v, w = rng.random(3)
        if tag == "mu":
            if w * MU_BOUND <= density_mu(u):
                return float(u)
        elif tag == "mu_tilde":
            yy = Y_MIN + (Y_MAX - Y_MIN) * v
            if w * MU_TILDE_BOUND <= 1.0 / (1.0 + u * yy) ** 2:
                return NatExtPoint(float(u), float(yy), 1 if rng.random() < 0.5 else -1)
        else:
            raise ValueError(f"unknown sampling measure {tag!r}")
    raise SamplingError("rejection cap exceeded")


def _refine(values, seed, component, prec):
    """Extend float starts with extra random low-order bits for a run at
    ``prec`` bits; deterministic in (seed, index)."""
    extra = _uniforms(seed, 1000 + component, 0, len(values))
    with mpmath.workprec(prec):
        ulp = mpmath.mpf(2) ** -53
        return [mpmath.mpf(float(v)) + (mpmath.mpf(float(e)) - 0.5) * ulp * abs(mpmath.mpf(float(v)))
                for v, e in zip(values, extra)]


# ---------------------------------------------------------------------------
# generic precision orbits (slow; used when precision > 53)

def _digit_max_generic(x, n_iter, prec):
    with mpmath.workprec(prec):
        band = max(ABSORB ** (prec / 53.0), mpmath.mpf(2) ** (-prec + 8))
        best = 0
        for _ in range(n_iter):
            if x < band or 1 - x < band:
                return int(kernels.HUGE_DIGIT)
            d, x = step(x)
            if d.a > A_MAX:
                return int(kernels.HUGE_DIGIT)
            best = max(best, d.a)
        return best


def _geodesic_max_generic(x, y, horizon, prec):
    from .geodesic import excursion_time_formula, iota, iota_tilde
    with mpmath.workprec(prec):
        band = max(ABSORB ** (prec / 53.0), mpmath.mpf(2) ** (-prec + 8))
        T, mx, n = mpmath.mpf(0), mpmath.mpf(0), 0
        while True:
            if x < band or 1 - x < band:
                return float(mx), n, True
            d, tx = step(x)
            if d.a > A_MAX:
                return float(mx), n, True
            alpha = 1 / x
            if d.parity == "o":
                a_s, b_s = iota_tilde(alpha), iota(y)
            else:
                a_s, b_s = alpha, y
            r = excursion_time_formula(a_s, b_s)
            if T + r > horizon:
                return float(mx), n, False
            T += r
            n += 1
            mx = max(mx, (a_s + b_s) / 2)
            y = dual_inverse_branch(d, y)
            x = tx


# ---------------------------------------------------------------------------
# experiments

def digit_maxima(cfg):
    draw = draw_starts(cfg.sampling_measure, cfg.seed, int(cfg.samples))
    N = int(cfg.depth)
    if cfg.precision == 53:
        return kernels.digit_maxima(draw.x, N), draw
    xs = _refine(draw.x, cfg.seed, 0, cfg.precision)
    return np.array([_digit_max_generic(x, N, cfg.precision) for x in xs], dtype=np.int64), draw


def digit_evt(cfg, min_samples=10 ** 3, min_depth=10 ** 3):
    """Fraction of starts with max_{n<=N} a_n <= C0 N y, for each y."""
    cfg.validate(min_samples, min_depth)
    A, draw = digit_maxima(cfg)
    thresholds = C0 * float(cfg.depth) * np.asarray(cfg.y_grid, float)
    # A_N is an integer: A_N <= t  iff  A_N <= floor(t)
    extra = {"acceptance_rate": draw.acceptance, "rejection_rounds": draw.rounds,
             "absorbed": int(np.sum(A == kernels.HUGE_DIGIT))}
    return EmpiricalCDF.from_maxima(A, np.floor(thresholds), cfg.y_grid, cfg, 0, extra)


def geodesic_maxima(cfg):
    tag = cfg.sampling_measure
    if tag == "mu":
        raise ValueError("geodesic experiments start on the cross section: use mu_tilde or uniform")
    draw = draw_starts(tag, cfg.seed, int(cfg.samples))
    T = float(cfg.depth)
    if cfg.precision == 53:
        best, count, lost = kernels.geodesic_maxima(draw.x, draw.y, T)
        return best, count, lost, draw
    xs = _refine(draw.x, cfg.seed, 0, cfg.precision)
    ys = _refine(draw.y, cfg.seed, 1, cfg.precision)
    rows = [_geodesic_max_generic(x, y, T, cfg.precision) for x, y in zip(xs, ys)]
    best = np.array([r[0] for r in rows])
    count = np.array([r[1] for r in rows], dtype=np.int64)
    lost = np.array([r[2] for r in rows], dtype=bool)
    return best, count, lost, draw


def return_concentration(count, T, cstar, rel=0.02):
    """Share of samples with N(T,v)/T within rel of 1/C*."""
    ratio = np.asarray(count, float) / T
    target = 1.0 / cstar
    inside = np.abs(ratio - target) <= rel * target
    return {"target": target, "relative_window": rel,
            "fraction_within": float(np.mean(inside)) if len(ratio) else float("nan"),
            "mean_ratio": float(np.mean(ratio)) if len(ratio) else float("nan"),
            "std_ratio": float(np.std(ratio)) if len(ratio) else float("nan")}


def geodesic_evt(cfg, min_samples=10 ** 3, min_depth=10 ** 3):
    """Fraction of geodesics whose completed excursions up to flow time T
    all have exp(height) <= (C0/C*) T y.  Starts whose orbit reaches the
    escape set (or the float absorption band) are dropped and counted."""
    cfg.validate(min_samples, min_depth)
    if cfg.sampling_measure == "mu":
        raise ValueError("geodesic experiments start on the cross section: use mu_tilde or uniform")
    best, count, lost, draw = geodesic_maxima(cfg)
    keep = ~lost
    C = C0 / cfg.cstar
    thresholds = C * float(cfg.depth) * np.asarray(cfg.y_grid, float)
    conc = return_concentration(count[keep], float(cfg.depth), cfg.cstar)
    extra = {"constant_C": C, "return_concentration": conc,
             "acceptance_rate": draw.acceptance, "rejection_rounds": draw.rounds}
    return EmpiricalCDF.from_maxima(best[keep], thresholds, cfg.y_grid, cfg,
                                    int(np.sum(lost)), extra)


# ---------------------------------------------------------------------------
# excursion-time constant

@dataclass
class CstarResult:
    seed: int
    start: float
    convergent_estimate: float
    birkhoff_estimate: float
    return_time_estimate: float
    redraws: int

    def within(self, ref, tol):
        return abs(self.convergent_estimate - ref) <= tol and abs(self.birkhoff_estimate - ref) <= tol


def cstar_run(seed, iters, max_redraws=100):
    """Both estimators of C* along one mu-distributed orbit.

    An orbit that falls into the absorption band is restarted from the next
    draw of the same stream.
    """
    draws = draw_starts("mu_tilde", seed, max_redraws + 1)
    for k in range(max_redraws + 1):
        x, y = float(draws.x[k]), float(draws.y[k])
        a, b, c, ok = kernels.cstar_orbit(x, y, int(iters))
        if ok:
            return CstarResult(int(seed), x, a, b, c, k)
    raise SamplingError(f"every start for seed {seed} was absorbed")


def cstar_experiment(seeds, iters, reference=CSTAR_REFERENCE, tolerance=5e-3):
    runs = [cstar_run(s, iters) for s in seeds]
    conv = np.array([r.convergent_estimate for r in runs])
    birk = np.array([r.birkhoff_estimate for r in runs])
    return {
        "iters": int(iters),
        "reference": reference,
        "tolerance": tolerance,
        "runs": [asdict(r) for r in runs],
        "mean_convergent": float(conv.mean()),
        "mean_birkhoff": float(birk.mean()),
        "std_birkhoff": float(birk.std(ddof=1)) if len(runs) > 1 else 0.0,
        "within_tolerance": int(sum(r.within(reference, tolerance) for r in runs)),
        "log_norm": LOG_NORM,
    }


def cstar_quadrature(K=10 ** 4):
    """C* as the mu-integral of log f, computed in the variable t = T(x).

    log f(x) depends only on T(x) and on whether x is an e- or o-type point,
    so the integral equals the integral over t in [0,1] of
    log f_e(t) E(t) + log f_o(t) O(t), where E and O are the parity-split
    branch sums of f_mu(h(t)) |h'(t)|.  Branches a <= K are summed exactly,
    the rest with the polygamma closure (f_mu frozen at 0 or 1).
    """
    from scipy import integrate
    from .transfer import _closure_weights

    k = np.arange(2, K + 1, dtype=float)
    f0, f1 = C0, C0 / 2

    def split(t):
        h = np.array([1 / (t + 2)])
        e = np.sum(density_mu(h) * h * h)
        for hh in (1 / (t + 2 * k), 1 / (2 * k - t)):
            e += np.sum(density_mu(hh) * hh * hh)
        o = 0.0
        for num, den in ((k * t + k - 1, k + (k + 1) * t), (k + (k - 1) * t, k * t + k + 1)):
            o += np.sum(density_mu(num / den) / (den * den))
        ce, co = _closure_weights(t, K)
        return e + f0 * ce, o + f1 * co

    def logf_e(t):
        return -2 * math.log(t) if t <= 0.5 else math.log(2) - 2 * math.log1p(-t)

    def logf_o(t):
        if t > 0.5:
            return 2 * (math.log1p(t) - math.log1p(-t))
        return 2 * math.log1p(t) - math.log(2) - 2 * math.log(t)

    def g(t):
        e, o = split(t)
        return logf_e(t) * e + logf_o(t) * o

    total = 0.0
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        val, _ = integrate.quad(g, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total
