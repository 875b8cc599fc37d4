"""Initial-condition presets and deterministic CSV / JSON output."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .config import RunConfig
from .grid import RadialFunction, RadialGrid, bose_einstein, gaussian_bump

TIMESERIES_COLUMNS = ("t", "n_c", "mass_f", "total_mass", "m_3", "m_4", "m_5", "m_6",
                      "m_7", "m_8", "m_9", "weighted_sup", "entropy", "dissipation",
                      "tail_rate", "dt_used", "drift_energy", "drift_mass")


def fmt(x) -> str:
    """17 significant digits: round-trips every double exactly."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def parse_bumps(text: str) -> list[tuple[float, float, float]]:
    """``"A r0 sigma; A r0 sigma; ..."`` -> list of (A, r0, sigma)."""
    out = []
    for chunk in text.split(";"):
        parts = chunk.replace(",", " ").split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ValueError(f"bump {chunk.strip()!r} needs 'amplitude center width'")
        a, r0, s = map(float, parts)
        if a < 0 or r0 < 0 or s <= 0:
            raise ValueError(f"bump {chunk.strip()!r}: need amplitude, center >= 0 and width > 0")
        out.append((a, r0, s))
    if not out:
        raise ValueError("no bumps given")
    return out


def power_tail(grid: RadialGrid, amplitude: float, core: float,
               exponent: float = 4.0) -> RadialFunction:
    """A / (1 + (r/core)^2)^{exponent/2}: algebraic tail of order r^{-exponent}."""
    r = grid.nodes
    return RadialFunction(grid, amplitude / (1.0 + (r / core) ** 2) ** (exponent / 2.0))


def write_snapshot(path: str | Path, f: RadialFunction) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(("r", "f"))
        for r, v in zip(f.grid.nodes, f.values):
            w.writerow((fmt(r), fmt(v)))


def read_snapshot(path: str | Path, grid: RadialGrid) -> RadialFunction:
    """Load an (r, f) snapshot; its nodes must coincide with ``grid``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["r", "f"]:
        raise ValueError(f"{path}: expected header 'r,f'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    if data.shape != (grid.n_nodes, 2):
        raise ValueError(f"{path}: {len(rows) - 1} rows for a grid of {grid.n_nodes} nodes")
    if not np.allclose(data[:, 0], grid.nodes, rtol=1e-12, atol=1e-12 * grid.p_max):
        raise ValueError(f"{path}: snapshot nodes do not match the configured grid")
    return RadialFunction(grid, data[:, 1])


def initial_distribution(cfg: RunConfig, grid: RadialGrid) -> RadialFunction:
    ic = cfg.initial_condition
    if ic.preset == "bose_einstein":
        return bose_einstein(grid, ic.alpha)
    if ic.preset == "gaussian_bump":
        return gaussian_bump(grid, ic.amplitude, ic.center, ic.width)
    if ic.preset == "bumps":
        vals = sum(gaussian_bump(grid, *b).values for b in parse_bumps(ic.bumps))
        return RadialFunction(grid, vals)
    if ic.preset == "power_tail":
        return power_tail(grid, ic.amplitude, ic.core, ic.exponent)
    if ic.preset == "file":
        return read_snapshot(cfg.resolve(ic.path), grid)
    raise ValueError(f"unknown preset {ic.preset!r}")


def write_timeseries(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(TIMESERIES_COLUMNS)
        for row in rows:
            w.writerow([fmt(row[c]) for c in TIMESERIES_COLUMNS])


def read_timeseries(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = np.array([[float(x) for x in r] for r in rows[1:]]).T
    return {name: cols[i] for i, name in enumerate(header)}
