"""Low-temperature three-phonon collision operator on a uniform radial grid.

The production operator is assembled pair by pair: every ordered pair of
nodes (j, l) with j + l <= N interacts with the node j + l, and its rate
W_jl * G_jl is added to node j + l and removed from nodes j and l.  This is
the transpose of the discrete weak form, so energy and total mass balance are
algebraic identities.  Pairs landing beyond the last node are dropped whole.

Units: ``rate`` (q_i) is the weak-form contribution of node i, i.e. the
discrete int Q[f] phi dp equals sum_i q_i phi_i.  The pointwise df/dt
contribution is q_i / (4 pi w_i r_i^2).  Neither carries the kappa0 / n_c
prefactor of the coupled system.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grid import RadialFunction, RadialGrid, node_mass

EIGHT_PI_SQ = 8.0 * math.pi ** 2

# Fixed pair-chunk size: partial sums are reduced in chunk order, so results
# do not depend on how many workers process the chunks.
CHUNK_PAIRS = 8192


def kernel(x, y):
    """Symmetric collision kernel K(x, y) = x^2 y^2 (x + y)^2."""
    return (x * y * (x + y)) ** 2


def kernel0(a, b, c):
    """K_0(a, b, c) = a^2 b^2 c^2."""
    return (a * b * c) ** 2


class CollisionTables:
    """Precomputed ordered-pair geometry and weights for one grid.

    ``j``, ``l``, ``s`` hold the node indices of every ordered pair with
    1 <= j, l and s = j + l <= N; ``pair_weights`` holds
    W_jl = 8 pi^2 w_j w_l K_0(r_s, r_j, r_l).
    """

    def __init__(self, grid: RadialGrid):
        n = grid.n
        jj, ll = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="ij")
        keep = (jj + ll) <= n
        self.grid = grid
        self.j = jj[keep].astype(np.intp)
        self.l = ll[keep].astype(np.intp)
        self.s = self.j + self.l
        r, w = grid.nodes, grid.weights
        self.kernel = kernel(r[self.j], r[self.l])
        self.pair_weights = EIGHT_PI_SQ * w[self.j] * w[self.l] * kernel0(
            r[self.s], r[self.j], r[self.l])
        self.node_mass = node_mass(grid)
        bounds = list(range(0, self.j.size, CHUNK_PAIRS)) + [self.j.size]
        self.chunks = list(zip(bounds[:-1], bounds[1:]))

    @property
    def n_pairs(self) -> int:
        return self.j.size

    def weight_matrix(self) -> np.ndarray:
        """Dense (N+1)x(N+1) view of W_jl, zero where no pair exists."""
        n1 = self.grid.n_nodes
        out = np.zeros((n1, n1))
        out[self.j, self.l] = self.pair_weights
        return out


@dataclass(frozen=True)
class CollisionOutput:
    rate: np.ndarray
    point_rate: np.ndarray


def _check(f: RadialFunction, tables: CollisionTables) -> None:
    f.same_grid(tables.grid)


def _brackets(fv: np.ndarray, tables: CollisionTables, lo=0, hi=None) -> np.ndarray:
    sl = slice(lo, hi)
    fj, fl, fs = fv[tables.j[sl]], fv[tables.l[sl]], fv[tables.s[sl]]
    return fj * fl - fj * fs - fl * fs - fs


def collision_bracket(f: RadialFunction, j: int, l: int) -> float:
    """G_jl = f_j f_l - f_j f_{j+l} - f_l f_{j+l} - f_{j+l}."""
    n = f.grid.n
    if not (1 <= j and 1 <= l and j + l <= n):
        raise IndexError(f"pair ({j}, {l}) outside 1 <= j, l and j + l <= {n}")
    v = f.values
    s = j + l
    return float(v[j] * v[l] - v[j] * v[s] - v[l] * v[s] - v[s])


def _chunk_rate(fv, tables, lo, hi):
    c = tables.pair_weights[lo:hi] * _brackets(fv, tables, lo, hi)
    m = tables.grid.n_nodes
    return (np.bincount(tables.s[lo:hi], c, m)
            - np.bincount(tables.j[lo:hi], c, m)
            - np.bincount(tables.l[lo:hi], c, m))


def pair_rate(fv: np.ndarray, tables: CollisionTables, workers: int = 1) -> np.ndarray:
    """Weak-form node rates q for raw nodal values (no validation)."""
    if workers > 1 and len(tables.chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _chunk_rate(fv, tables, *c), tables.chunks))
    else:
        parts = [_chunk_rate(fv, tables, lo, hi) for lo, hi in tables.chunks]
    q = parts[0]
    for p in parts[1:]:
        q = q + p
    return q


def point_rate_from(q: np.ndarray, tables: CollisionTables) -> np.ndarray:
    out = np.zeros_like(q)
    out[1:] = q[1:] / tables.node_mass[1:]
    return out


def apply_pair(f: RadialFunction, tables: CollisionTables,
               workers: int = 1) -> CollisionOutput:
    """Pair-interaction assembly of Q[f]."""
    _check(f, tables)
    q = pair_rate(f.values, tables, workers)
    return CollisionOutput(rate=q, point_rate=point_rate_from(q, tables))


def weak_pairing(f: RadialFunction, phi, tables: CollisionTables) -> float:
    """Discrete int Q[f] phi dp = sum_pairs W G (phi_{j+l} - phi_j - phi_l)."""
    _check(f, tables)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (tables.grid.n_nodes,):
        raise ValueError("test vector does not match the grid")
    jump = phi[tables.s] - phi[tables.j] - phi[tables.l]
    return float(np.sum(tables.pair_weights * _brackets(f.values, tables) * jump))


def strong_terms(f: RadialFunction) -> dict[str, np.ndarray]:
    """The nine quadratic and three linear terms of the strong form, per node.

    Each entry is the line density at r_i of one term, including 8 pi^2 and
    the quadrature normalisation matched to the pair tables: inner sums use
    step ``spacing``, and node i is divided by its own weight ratio w_i /
    spacing (so the half-weight end node gets twice the density).  Integrals
    over p1 > |p| stop at p_max; integrals over all p1 stop at p_max - |p|,
    mirroring the dropped pairs.
    """
    g = f.grid
    n, h = g.n, g.spacing
    r, v = g.nodes, f.values
    i = np.arange(n + 1)[:, None]
    k = np.arange(1, n)[None, :]
    below = k < i                      # partner p1 = r_k in (0, r_i)
    above = k <= (n - i)               # partner offset r_k with r_i + r_k <= p_max
    kb = np.where(below, k, 0)
    ib = np.where(below, i - k, 0)     # index of r_i - r_k
    ka = np.where(above, k, 0)
    ia = np.where(above, i + k, 0)     # index of r_i + r_k
    ri, rk = r[i], r[k]

    K_low = np.where(below, kernel(r[kb], r[ib]), 0.0)      # K(p1, p - p1)
    K_low_swap = np.where(below, kernel(r[ib], r[kb]), 0.0)  # K(p - p1, p1)
    K_up = np.where(above, kernel(ri, rk), 0.0)             # K(p, p1 - p)
    K_up_swap = np.where(above, kernel(rk, ri), 0.0)        # K(p1 - p, p)
    f_low, f_diff = v[kb], v[ib]
    f_shift, f_part = v[ia], v[ka]
    fi = v[:, None] * np.ones_like(k, dtype=float)

    terms = {
        "B1": (K_low * f_low * f_diff).sum(1),
        "B2": (K_up * f_shift * f_part).sum(1),
        "B3": (K_up_swap * f_shift * f_part).sum(1),
        "B4": (fi * K_up * f_shift).sum(1),
        "B5": -(fi * K_up * f_part).sum(1),
        "B6": -(fi * K_low_swap * f_low).sum(1),
        "B7": (fi * K_up_swap * f_shift).sum(1),
        "B8": -(fi * K_up_swap * f_part).sum(1),
        "B9": -(fi * K_low * f_low).sum(1),
        "L1": (K_up * f_shift).sum(1),
        "L2": (K_up_swap * f_shift).sum(1),
        "L3": -(fi * K_low).sum(1),
    }
    scale = EIGHT_PI_SQ * h * h / g.weights
    scale[0] = 0.0
    return {name: scale * t for name, t in terms.items()}


def apply_strong(f: RadialFunction) -> np.ndarray:
    """Line density (Q_q + L)(r_i) by direct quadrature of the twelve terms.

    Satisfies sum_i w_i S_i phi_i == sum_i q_i phi_i for the pair assembly q.
    """
    terms = strong_terms(f)
    return sum(terms[name] for name in sorted(terms))


def loss_frequency(f: RadialFunction, tables: CollisionTables) -> np.ndarray:
    """Collision frequency nu_i in line-density units without 8 pi^2.

    nu(p) = 2 int K(p1, p) f(p1) dp1 + 2 int_0^p K(p1, p - p1) f(p1) dp1
            + int_0^p K(p1, p - p1) dp1,
    with the same pair truncation and weights as the tables.
    """
    _check(f, tables)
    v = f.values
    h = tables.grid.spacing
    hk = h * tables.kernel
    m = tables.grid.n_nodes
    return (np.bincount(tables.j, 2.0 * hk * v[tables.l], m)
            + np.bincount(tables.s, 2.0 * hk * v[tables.j], m)
            + np.bincount(tables.s, hk, m))


def loss_rate(f: RadialFunction, tables: CollisionTables) -> np.ndarray:
    """Pointwise attenuation lambda_i with point_rate = gain - f * lambda."""
    nu = loss_frequency(f, tables)
    g = tables.grid
    out = np.zeros_like(nu)
    out[1:] = EIGHT_PI_SQ * g.spacing * nu[1:] / tables.node_mass[1:]
    return out


def gain(f: RadialFunction, tables: CollisionTables,
         out: CollisionOutput | None = None) -> np.ndarray:
    """Pointwise gain Q+ = point_rate + f * lambda (nonnegative up to round-off)."""
    if out is None:
        out = apply_pair(f, tables)
    return out.point_rate + f.values * loss_rate(f, tables)


def _log_ratio(f: RadialFunction, floor: bool) -> np.ndarray:
    v = f.values
    if floor:
        v = np.maximum(v, 1e-300)
    else:
        bad = np.flatnonzero(v[1:] <= 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise ValueError(
                f"entropy dissipation needs f > 0; node {i} has f={v[i]!r}")
        v = v.copy()
        v[0] = max(v[0], 1e-300)  # node 0 never enters a pair
    return np.log(v) - np.log1p(v)


def dissipation_summands(f: RadialFunction, tables: CollisionTables,
                         floor: bool = False) -> np.ndarray:
    """Per-pair entropy production -W G (h_{j+l} - h_j - h_l), h = log(f/(1+f))."""
    _check(f, tables)
    hv = _log_ratio(f, floor)
    jump = hv[tables.s] - hv[tables.j] - hv[tables.l]
    return -tables.pair_weights * _brackets(f.values, tables) * jump


def dissipation_scale(f: RadialFunction, tables: CollisionTables,
                      floor: bool = False) -> float:
    """Sum over pairs of W (f_j f_l + f_s (1 + f_j + f_l)) (|h_s| + |h_j| + |h_l|).

    The size of the ingredients of each summand, so round-off in a summand
    can be judged even when the summand itself vanishes at equilibrium.
    """
    _check(f, tables)
    hv = np.abs(_log_ratio(f, floor))
    v = f.values
    fj, fl, fs = v[tables.j], v[tables.l], v[tables.s]
    mag = fj * fl + fs * (1.0 + fj + fl)
    return float(np.sum(tables.pair_weights * mag * (hv[tables.s] + hv[tables.j] + hv[tables.l])))


def entropy_dissipation(f: RadialFunction, tables: CollisionTables,
                        floor: bool = False) -> float:
    """D = -int Q[f] log(f/(1+f)) dp, nonnegative for every positive f.

    ``floor=True`` clamps values at 1e-300 before taking logarithms; by
    default non-positive values raise.
    """
    return float(np.sum(dissipation_summands(f, tables, floor)))


def quadratic_pairing(f: RadialFunction, phi, tables: CollisionTables) -> float:
    """Weak pairing of the quadratic part Q_q alone."""
    _check(f, tables)
    v = f.values
    fj, fl, fs = v[tables.j], v[tables.l], v[tables.s]
    phi = np.asarray(phi, dtype=float)
    jump = phi[tables.s] - phi[tables.j] - phi[tables.l]
    return float(np.sum(tables.pair_weights * (fj * fl - fj * fs - fl * fs) * jump))


def linear_pairing(f: RadialFunction, phi, tables: CollisionTables) -> float:
    """Weak pairing of the linear (spontaneous decay) part L alone."""
    _check(f, tables)
    phi = np.asarray(phi, dtype=float)
    jump = phi[tables.s] - phi[tables.j] - phi[tables.l]
    return float(-np.sum(tables.pair_weights * f.values[tables.s] * jump))


def equilibrium_residual(f: RadialFunction, tables: CollisionTables) -> tuple[float, float]:
    """(max_i |q_i|, largest single pair term) for judging a fixed point."""
    _check(f, tables)
    v = f.values
    fj, fl, fs = v[tables.j], v[tables.l], v[tables.s]
    terms = tables.pair_weights * np.maximum(np.abs(fj * fl), np.abs(fs * (1 + fj + fl)))
    q = pair_rate(v, tables)
    return float(np.max(np.abs(q))), float(np.max(terms))
