"""Mittag-Leffler series, tail moments and the Beta-sum estimates behind them.

E_a(x) = sum_{k>=1} x^k / Gamma(a k + 1), which behaves like exp(x^{1/a}) - 1.
All Gamma and Beta factors go through log-Gamma so k ~ 60 stays finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .diagnostics import CheckRecord
from .grid import RadialFunction, full_moment, node_mass

_LOG_MAX = math.log(np.finfo(float).max) - 1.0


@dataclass(frozen=True)
class MLParams:
    a: float
    alpha: float
    n_terms: int = 60
    tol: float = 1e-17

    def __post_init__(self):
        if self.a < 1:
            raise ValueError("Mittag-Leffler order a must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.n_terms < 1:
            raise ValueError("n_terms must be >= 1")


def mittag_leffler(a: float, x, tol: float = 1e-17):
    """E_a(x) for x >= 0 (scalar or array); inf where the value overflows."""
    if a < 1:
        raise ValueError("a must be >= 1")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("x must be >= 0")
    out = np.zeros_like(xs)
    # E_a(x) ~ exp(x^{1/a}) / a: beyond this the value cannot be represented
    huge = xs ** (1.0 / a) > _LOG_MAX + math.log(a) + 1.0
    out[huge] = np.inf
    pos = (xs > 0) & ~huge
    if np.any(pos):
        lx = np.log(xs[pos])
        # largest term sits near k = x^{1/a}/a; sum well past it
        k_peak = np.max(xs[pos]) ** (1.0 / a) / a
        total = np.zeros_like(lx)
        overflow = np.zeros(lx.shape, dtype=bool)
        k = 1
        while True:
            lt = k * lx - gammaln(a * k + 1.0)
            overflow |= lt > _LOG_MAX
            term = np.exp(np.minimum(lt, _LOG_MAX))
            total += term
            if k > k_peak and np.all((term <= tol * total) | overflow):
                break
            k += 1
        total[overflow | ~np.isfinite(total)] = np.inf
        out[pos] = total
    return float(out[0]) if np.ndim(x) == 0 else out


def ml_integral(f: RadialFunction, a: float, alpha: float) -> float:
    """int f E_a(alpha^a |p|) dp = sum mu_i f_i E_a(alpha^a r_i)."""
    e = mittag_leffler(a, alpha ** a * f.grid.nodes)
    with np.errstate(invalid="ignore"):
        terms = np.where(f.values > 0, node_mass(f.grid) * f.values * e, 0.0)
    return float(np.sum(terms))


def _series_weights(a: float, alpha: float, n: int) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=float)
    return np.exp(a * k * math.log(alpha) - gammaln(a * k + 1.0))


def ml_partial_sums(f: RadialFunction, a: float, alpha: float, n: int,
                    rho: int = 0) -> tuple[float, float]:
    """(sum_{k<=n} M_k c_k, sum_{k<=n} M_{k+rho} c_k), c_k = alpha^{ak}/Gamma(ak+1)."""
    if n < 1 or rho < 0:
        raise ValueError("need n >= 1 and rho >= 0")
    w = _series_weights(a, alpha, n)
    mk = np.array([full_moment(f, k) for k in range(1, n + rho + 1)])
    return float(np.dot(w, mk[:n])), float(np.dot(w, mk[rho:rho + n]))


def tail_relation_sides(f: RadialFunction, a: float, alpha: float,
                        n: int) -> tuple[float, float]:
    """Both sides of I_{a,5}^n >= alpha^{-5/2} E_a^n - alpha^{-2} M_1 E_a(alpha^{a-1/2})."""
    e_n, i_n5 = ml_partial_sums(f, a, alpha, n, rho=5)
    rhs = alpha ** -2.5 * e_n - alpha ** -2.0 * full_moment(f, 1) * mittag_leffler(a, alpha ** (a - 0.5))
    return i_n5, rhs


def beta_sum(a: float, k: int) -> float:
    """S(k) = sum_{i=1}^{floor((k+1)/2)} C(k,i) B(ai+1, a(k-i)+1)."""
    i = np.arange(1, (k + 1) // 2 + 1, dtype=float)
    log_binom = gammaln(k + 1.0) - gammaln(i + 1) - gammaln(k - i + 1)
    log_beta = gammaln(a * i + 1) + gammaln(a * (k - i) + 1) - gammaln(a * k + 2)
    return float(np.sum(np.exp(log_binom + log_beta)))


def beta_sum_check(a: float, k_max: int) -> CheckRecord:
    """Is S(k) (ak)^{1+a} bounded over 3 <= k <= k_max, with S eventually decreasing?

    "Bounded" is judged on the finite range: the scaled sequence must peak
    before the last quarter of the range rather than keep climbing.
    """
    if a < 1 or k_max < 3:
        raise ValueError("need a >= 1 and k_max >= 3")
    ks = np.arange(3, k_max + 1)
    s = np.array([beta_sum(a, int(k)) for k in ks])
    scaled = s * (a * ks) ** (1 + a)
    arg = int(np.argmax(scaled))
    tail_start = len(ks) - max(1, len(ks) // 4)
    bounded = bool(np.all(np.isfinite(scaled))) and arg < tail_start
    tail = s[tail_start - 1:]
    decreasing = bool(np.all(np.diff(tail) <= 0))
    return CheckRecord(f"beta_sum_a{a:g}", bounded and decreasing,
                       measured={"S": {int(k): float(v) for k, v in zip(ks, s)},
                                 "empirical_C_a": float(scaled.max()),
                                 "argmax_k": int(ks[arg]),
                                 "growth_ratio": float(scaled[-1] / scaled[0]),
                                 "bounded": bounded, "eventually_decreasing": decreasing},
                       reference="Beta-function sum estimate")


def normalized_alpha0(f0: RadialFunction, a: float, hi: float = 1.0,
                      iterations: int = 60) -> float:
    """Largest alpha0 <= hi with int f0 E_a(alpha0^a |p|) dp <= 1 (bisection)."""
    if ml_integral(f0, a, hi) <= 1.0:
        return hi
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ml_integral(f0, a, mid) <= 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def check_ml_propagation(trajectory: Sequence, a: float, alpha0: float,
                         iterations: int = 12) -> CheckRecord:
    """Find the largest alpha <= alpha0 keeping sup_t int f E_a(alpha^a|p|) <= 2."""
    fs = [s.f for s in trajectory]
    initial = ml_integral(fs[0], a, alpha0)
    name = f"ml_propagation_a{a:g}"
    ref = "propagation of Mittag-Leffler tails"
    if not initial <= 1.0:
        return CheckRecord(name, False, measured={"initial_integral": initial},
                           bound={"initial_integral": 1.0}, reference=ref,
                           note="precondition failed: initial tail integral exceeds 1")

    def sup_at(alpha):
        return max(ml_integral(f, a, alpha) for f in fs)

    if sup_at(alpha0) <= 2.0:
        found = alpha0
    else:
        lo, hi = 0.0, alpha0
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if sup_at(mid) <= 2.0:
                lo = mid
            else:
                hi = mid
        found = lo
    return CheckRecord(name, found >= alpha0 / 100.0,
                       measured={"alpha": found, "initial_integral": initial,
                                 "sup_integral": sup_at(found) if found > 0 else 0.0},
                       bound={"sup_integral": 2.0, "alpha_min": alpha0 / 100.0},
                       reference=ref)
