"""Uniform radial momentum grid, trapezoid quadrature and line-moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GridMismatchError(ValueError):
    """Raised when values living on different grids are combined."""


def _snap_spacing(spacing: float, n: int) -> float:
    # Trim the mantissa so i*spacing is exact for every i <= n; this makes
    # r_j + r_l == r_{j+l} hold bit-for-bit, not just to round-off.
    bits = 52 - n.bit_length()
    mant, expo = math.frexp(spacing)
    return math.ldexp(round(mant * 2.0**bits) / 2.0**bits, expo)


@dataclass(frozen=True)
class RadialGrid:
    """Nodes r_i = i*spacing for i = 0..n with composite-trapezoid weights.

    ``n`` counts intervals, so the grid holds ``n + 1`` nodes.  The spacing is
    ``p_max / n`` with its last few mantissa bits cleared (relative change
    below 1e-12) so that node sums are exact in floating point.
    """

    n: int
    p_max: float
    spacing: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs at least 2 intervals, got {self.n!r}")
        if not (self.p_max > 0 and math.isfinite(self.p_max)):
            raise ValueError(f"p_max must be > 0, got {self.p_max!r}")
        n = int(self.n)
        h = _snap_spacing(float(self.p_max) / n, n)
        nodes = np.arange(n + 1, dtype=float) * h
        weights = np.full(n + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "p_max", float(nodes[-1]))
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_nodes(self) -> int:
        return self.n + 1

    def sample(self, fn: Callable[[np.ndarray], np.ndarray]) -> "RadialFunction":
        """Evaluate ``fn`` at the nodes and wrap the result."""
        return RadialFunction(self, np.asarray(fn(self.nodes), dtype=float))

    def zeros(self) -> "RadialFunction":
        return RadialFunction(self, np.zeros(self.n_nodes))


class RadialFunction:
    """Nonnegative nodal values of a radial distribution f(|p|) on one grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values):
        values = np.array(values, dtype=float)
        if values.shape != (grid.n_nodes,):
            raise ValueError(
                f"expected {grid.n_nodes} nodal values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("distribution has non-finite values")
        neg = np.flatnonzero(values < 0)
        if neg.size:
            i = int(neg[0])
            raise ValueError(f"distribution is negative at node {i} (f={values[i]!r})")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def __repr__(self):
        return f"RadialFunction(n={self.grid.n}, p_max={self.grid.p_max:g})"

    def __len__(self):
        return self.values.size

    def same_grid(self, other: "RadialFunction | RadialGrid") -> None:
        grid = other if isinstance(other, RadialGrid) else other.grid
        if grid != self.grid:
            raise GridMismatchError(f"{self.grid!r} vs {grid!r}")

    def scaled(self, factor: float) -> "RadialFunction":
        return RadialFunction(self.grid, factor * self.values)


def line_moment(f: RadialFunction, k: float) -> float:
    """Trapezoid approximation of the line-moment int_0^p_max f(r) r^k dr."""
    if k < 0:
        raise ValueError(f"moment order must be >= 0, got {k}")
    g = f.grid
    return float(np.dot(g.weights * f.values, g.nodes ** k))


def line_moments(f: RadialFunction, orders) -> np.ndarray:
    """Several line-moments at once."""
    return np.array([line_moment(f, k) for k in orders])


def full_moment(f: RadialFunction, k: float) -> float:
    """Moment over R^3, int f |p|^k dp = 4 pi m_{k+2}."""
    return 4.0 * math.pi * line_moment(f, k + 2)


def weighted_sup(f: RadialFunction) -> float:
    """max_i f_i r_i^2, the sup-norm of f |p|^2."""
    return float(np.max(f.values * f.grid.nodes ** 2))


def node_mass(grid: RadialGrid) -> np.ndarray:
    """Particle-count weight 4 pi w_i r_i^2 of each node."""
    return 4.0 * math.pi * grid.weights * grid.nodes ** 2


def particle_mass(f: RadialFunction) -> float:
    """Quasi-particle mass int f dp = 4 pi m_2."""
    return full_moment(f, 0)


def boundary_mass(f: RadialFunction) -> float:
    """f_N r_N^2, a health indicator for the truncation at p_max."""
    return float(f.values[-1] * f.grid.nodes[-1] ** 2)


def bose_einstein(grid: RadialGrid, alpha: float) -> RadialFunction:
    """Sample 1/(exp(alpha r) - 1) at the nodes; the singular r=0 node is set to 0.

    Node 0 carries no quadrature mass and never enters a collision, so its
    value is immaterial.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    r = grid.nodes
    vals = np.zeros_like(r)
    with np.errstate(over="ignore"):
        vals[1:] = 1.0 / np.expm1(alpha * r[1:])
    return RadialFunction(grid, vals)


def gaussian_bump(grid: RadialGrid, amplitude: float, center: float,
                  width: float) -> RadialFunction:
    r = grid.nodes
    return RadialFunction(grid, amplitude * np.exp(-0.5 * ((r - center) / width) ** 2))
