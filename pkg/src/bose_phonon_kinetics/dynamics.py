"""Coupled quasi-particle / condensate system and its time integration.

The state (f, n_c, flux) evolves by

    df/dt    = (kappa0 / n_c) Q[f]
    dn_c/dt  = -(kappa0 / n_c) int Q[f] dp
    dflux/dt = int Q[f] dp

with classical RK4.  Energy m_3 and total mass 4 pi m_2 + n_c are linear
invariants of this system, so RK4 keeps them to round-off.  The closed form
n_c = sqrt(n0^2 - 2 kappa0 flux) is only used as a consistency check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .collision import CollisionTables, loss_rate, pair_rate, point_rate_from
from .grid import (RadialFunction, line_moment, particle_mass, weighted_sup)

logger = logging.getLogger(__name__)

# local gaps below this multiple of n_c are rounding, not truncation
ROUNDOFF_GAP = 16 * np.finfo(float).eps
END_SNAP = 1e-10
C0 = 1.0 / 30.0  # int_0^1 z^2 (1 - z)^2 dz


class SingularCondensateError(ValueError):
    """The condensate mass is zero or negative where the model needs n_c > 0."""


class CondensateDepletedError(ValueError):
    """The closed-form condensate radicand went negative."""


class StabilityLoss(RuntimeError):
    """n_c fell below the configured floor during a step."""

    def __init__(self, crossing_time: float, n_c: float):
        super().__init__(f"condensate fell below floor at t={crossing_time:.17g} (n_c={n_c:.6g})")
        self.crossing_time = crossing_time
        self.n_c = n_c


class StiffnessError(RuntimeError):
    """Step halving could not restore a nonnegative distribution."""


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    g: float = 1.0
    kBT: float | None = None

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("physics.m must be > 0")
        if not self.g > 0:
            raise ValueError("physics.g must be > 0")
        if self.kBT is not None and not self.kBT > 0:
            raise ValueError("physics.kBT must be > 0")

    @property
    def kappa0(self) -> float:
        return 9.0 / (64.0 * math.pi ** 2 * self.m)

    def sound_speed(self, n_c: float) -> float:
        return math.sqrt(self.g * n_c / self.m)

    def cold_gas_ratio(self, n_c: float) -> float | None:
        """k_B T / sqrt(g n_c / m); the reduced model needs this << 1."""
        if self.kBT is None:
            return None
        return self.kBT / self.sound_speed(n_c)


def dispersion_bogoliubov(p, params: PhysicalParams, n_c: float):
    """sqrt((g n_c / m) p^2 + (p^2 / 2m)^2)."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(params.g * n_c / params.m * p * p + (p * p / (2 * params.m)) ** 2)


def dispersion_phonon(p, params: PhysicalParams, n_c: float):
    """Linear phonon law c p with c = sqrt(g n_c / m)."""
    return params.sound_speed(n_c) * np.asarray(p, dtype=float)


def transition_probability(p, p1, p2, params: PhysicalParams, n_c: float):
    """|M|^2 = kappa p p1 p2 with kappa = 9 / (64 pi^2 (m g n_c)^{3/2})."""
    if n_c <= 0:
        raise SingularCondensateError(f"transition probability needs n_c > 0, got {n_c}")
    kappa = 9.0 / (64.0 * math.pi ** 2 * (params.m * params.g * n_c) ** 1.5)
    return kappa * np.asarray(p, dtype=float) * p1 * p2


@dataclass(frozen=True)
class SimState:
    t: float
    f: RadialFunction
    n_c: float
    flux_integral: float
    total_mass0: float
    energy0: float
    n0: float

    @classmethod
    def initial(cls, f: RadialFunction, n0: float) -> "SimState":
        if not n0 > 0:
            raise SingularCondensateError(f"initial condensate must be > 0, got {n0}")
        return cls(t=0.0, f=f, n_c=float(n0), flux_integral=0.0,
                   total_mass0=particle_mass(f) + n0,
                   energy0=line_moment(f, 3), n0=float(n0))

    @property
    def total_mass(self) -> float:
        return particle_mass(self.f) + self.n_c

    def energy_drift(self) -> float:
        e = line_moment(self.f, 3)
        return abs(e - self.energy0) / self.energy0 if self.energy0 else abs(e)

    def mass_drift(self) -> float:
        return abs(self.total_mass - self.total_mass0) / self.total_mass0


@dataclass(frozen=True)
class StepControl:
    safety: float = 0.5
    dt_max: float = 1.0
    nc_floor: float = 1e-3
    positivity_policy: str = "reject-and-halve"
    max_halvings: int = 30
    closed_form_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ValueError("integration.safety must be in (0, 1]")
        if not self.dt_max > 0:
            raise ValueError("integration.dt_max must be > 0")
        if not self.nc_floor > 0:
            raise ValueError("integration.nc_floor must be > 0")
        if self.closed_form_tol < 0:
            raise ValueError("closed_form_tol must be >= 0")
        if self.positivity_policy not in ("reject-and-halve", "clamp-with-ledger"):
            raise ValueError("integration.positivity_policy must be "
                             "reject-and-halve or clamp-with-ledger")


def _rhs(fv, n_c, tables, kappa0, workers=1):
    if n_c <= 0:
        raise SingularCondensateError(f"n_c = {n_c!r} during right-hand side evaluation")
    q = pair_rate(fv, tables, workers)
    c = kappa0 / n_c
    flux = float(np.sum(q))
    return c * point_rate_from(q, tables), -c * flux, flux


def coupled_rhs(state: SimState, tables: CollisionTables,
                params: PhysicalParams) -> tuple[np.ndarray, float]:
    """(df/dt per node, dn_c/dt)."""
    state.f.same_grid(tables.grid)
    df, dn, _ = _rhs(state.f.values, state.n_c, tables, params.kappa0)
    return df, dn


def nc_closed_form(n0: float, flux_integral: float, kappa0: float) -> float:
    """sqrt(n0^2 - 2 kappa0 flux)."""
    rad = n0 * n0 - 2.0 * kappa0 * flux_integral
    if rad < 0:
        raise CondensateDepletedError(
            f"n0^2 - 2 kappa0 flux = {rad:.6g} < 0: condensate exhausted")
    return math.sqrt(rad)


def _rk4(fv, n_c, flux, dt, tables, kappa0, workers):
    k1 = _rhs(fv, n_c, tables, kappa0, workers)
    k2 = _rhs(fv + 0.5 * dt * k1[0], n_c + 0.5 * dt * k1[1], tables, kappa0, workers)
    k3 = _rhs(fv + 0.5 * dt * k2[0], n_c + 0.5 * dt * k2[1], tables, kappa0, workers)
    k4 = _rhs(fv + dt * k3[0], n_c + dt * k3[1], tables, kappa0, workers)
    w = dt / 6.0
    f_new = fv + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    n_new = n_c + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    flux_new = flux + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return f_new, n_new, flux_new


@dataclass
class StepInfo:
    dt: float = 0.0
    halvings: int = 0
    clamped_mass: float = 0.0


def step(state: SimState, dt: float, tables: CollisionTables, control: StepControl,
         params: PhysicalParams, workers: int = 1,
         info: StepInfo | None = None) -> SimState:
    """Advance by one RK4 step of size ``dt`` (or a halved one, see policy)."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if state.n_c <= control.nc_floor:
        raise StabilityLoss(state.t, state.n_c)
    state.f.same_grid(tables.grid)
    info = info if info is not None else StepInfo()
    kappa0 = params.kappa0
    fv = state.f.values
    for attempt in range(control.max_halvings + 1):
        try:
            f_new, n_new, flux_new = _rk4(fv, state.n_c, state.flux_integral, dt,
                                          tables, kappa0, workers)
        except SingularCondensateError:
            f_new, n_new = None, -math.inf
        if f_new is not None and n_new > 0 and (
                np.all(f_new >= 0) or control.positivity_policy == "clamp-with-ledger"):
            break
        # negative f or a condensate at or below zero: the step overshoots
        dt *= 0.5
        info.halvings = attempt + 1
    else:
        raise StiffnessError(
            f"negative distribution after {control.max_halvings} halvings at t={state.t}")
    info.dt = dt
    t_new = state.t + dt
    if n_new < control.nc_floor:
        frac = (state.n_c - control.nc_floor) / (state.n_c - n_new)
        raise StabilityLoss(state.t + frac * dt, n_new)
    if np.any(f_new < 0):
        f_new, n_new, lost = _clamp(f_new, state, tables)
        info.clamped_mass += lost
        logger.info("clamped negative values at t=%.6g, removed mass %.3g", t_new, lost)
    return replace(state, t=t_new, f=RadialFunction(tables.grid, f_new),
                   n_c=float(n_new), flux_integral=float(flux_new))


def _clamp(f_new, state: SimState, tables: CollisionTables):
    g = tables.grid
    neg = np.minimum(f_new, 0.0)
    lost = float(-np.dot(tables.node_mass, neg))
    f_new = np.maximum(f_new, 0.0)
    e = float(np.dot(g.weights * f_new, g.nodes ** 3))
    if e > 0 and state.energy0 > 0:
        f_new = f_new * (state.energy0 / e)
    n_new = state.total_mass0 - float(np.dot(tables.node_mass, f_new))
    return f_new, n_new, lost


def relaxation_dt(state: SimState, tables: CollisionTables, control: StepControl,
                  params: PhysicalParams) -> float:
    """safety * n_c / (kappa0 * max_i lambda_i): inverse fastest local rate."""
    lam = float(np.max(loss_rate(state.f, tables)))
    if lam <= 0:
        return math.inf
    return control.safety * state.n_c / (params.kappa0 * lam)


def nc_allowance(n_c: float, control: StepControl) -> float:
    """Largest condensate change allowed in one adaptive step."""
    # The lower bound keeps the floor reachable in finitely many steps.
    return max(0.05 * (n_c - control.nc_floor), 0.005 * control.nc_floor)


def adaptive_dt(state: SimState, tables: CollisionTables, control: StepControl,
                params: PhysicalParams) -> float:
    """Stable explicit step, also limiting the condensate change per step."""
    if state.n_c <= 0:
        raise SingularCondensateError(f"n_c = {state.n_c}")
    if not np.any(state.f.values[1:]):
        return control.dt_max  # f = 0 is a fixed point; nothing to resolve
    dt = min(control.dt_max, relaxation_dt(state, tables, control, params))
    _, dn = coupled_rhs(state, tables, params)
    if dn != 0:
        dt = min(dt, nc_allowance(state.n_c, control) / abs(dn))
    return dt


def local_closed_form_gap(before: SimState, after: SimState, kappa0: float) -> float:
    """|n_c after one step - closed form restarted from the step's start|."""
    rad = before.n_c ** 2 - 2.0 * kappa0 * (after.flux_integral - before.flux_integral)
    return abs(after.n_c - math.sqrt(rad)) if rad >= 0 else math.inf


def stability_threshold(f0: RadialFunction, c8: float = 1.0) -> float:
    """Threshold C(f0) from the sup-norm and moment bounds (line-moment units).

    C(f0) = 2 sqrt(m3 max{||f0 r^2||, 3 max{m4, c8 m3^{5/4}} / (2 c0^{1/4} m3^{3/4})}).
    """
    if c8 <= 0:
        raise ValueError("C8 must be > 0")
    m3 = line_moment(f0, 3)
    if m3 == 0:
        if np.any(f0.values[1:]):
            raise ValueError("degenerate energy: m_3 = 0 for a nonzero distribution")
        return 0.0
    m4 = line_moment(f0, 4)
    ws = weighted_sup(f0)
    moment_term = 3.0 * max(m4, c8 * m3 ** 1.25) / (2.0 * C0 ** 0.25 * m3 ** 0.75)
    return 2.0 * math.sqrt(m3 * max(ws, moment_term))


@dataclass(frozen=True)
class ThresholdResult:
    passed: bool
    margin: float
    threshold: float
    required_n0: float
    convention: str


def threshold_check(f0: RadialFunction, n0: float, delta: float, c8: float = 1.0,
                    convention: str = "total") -> ThresholdResult:
    """Is n0 large enough for the condensate to stay above ``delta``?

    ``convention="total"`` (default) works in the units of the total-mass
    balance 4 pi m_2 + n_c: n0 >= 4 pi (C(f0) - m_2(f0)) + delta.
    ``convention="mixed"`` uses n0 >= C(f0) - 4 pi m_2(f0) + delta and
    ``convention="line"`` uses n0 >= C(f0) - m_2(f0) + delta.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    c = stability_threshold(f0, c8)
    m2 = line_moment(f0, 2)
    if convention == "total":
        need = 4.0 * math.pi * (c - m2) + delta
    elif convention == "mixed":
        need = c - 4.0 * math.pi * m2 + delta
    elif convention == "line":
        need = c - m2 + delta
    else:
        raise ValueError(f"unknown threshold convention {convention!r}")
    margin = n0 - need
    return ThresholdResult(margin >= 0, margin, c, need, convention)


@dataclass
class RunResult:
    trajectory: list[SimState] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    status: str = "completed"
    crossing_time: float | None = None
    steps: int = 0
    clamped_mass: float = 0.0
    max_closed_form_gap: float = 0.0


def integrate(state: SimState, t_end: float, tables: CollisionTables,
              params: PhysicalParams, control: StepControl, *, stride: int = 1,
              max_steps: int = 10_000_000, fixed_dt: float | None = None,
              workers: int = 1,
              record: Callable[[SimState, float], bool] | None = None) -> RunResult:
    """Integrate to ``t_end``; snapshot every ``stride`` steps and at the end.

    ``record(state, dt)`` may force an extra snapshot by returning True.
    Stability loss ends the run early with ``status = "stability_loss"``.
    Adaptive runs also shrink steps whose local ODE vs closed-form condensate
    gap exceeds a ``dt / t_end`` share of ``control.closed_form_tol * n0``.
    """
    res = RunResult(trajectory=[state], dts=[0.0])
    info = StepInfo()
    kappa0 = params.kappa0
    controlled = fixed_dt is None and control.closed_form_tol > 0
    shrink = 1.0
    while state.t < t_end:
        if res.steps >= max_steps:
            res.status = "max_steps"
            break
        dt = fixed_dt if fixed_dt is not None else shrink * adaptive_dt(state, tables, control,
                                                                        params)
        dt = min(dt, t_end - state.t)
        try:
            new = step(state, dt, tables, control, params, workers, info)
        except StabilityLoss as exc:
            res.status = "stability_loss"
            res.crossing_time = exc.crossing_time
            logger.warning("%s", exc)
            break
        if controlled:
            # keep the accumulated ODE vs closed-form gap under half the tolerance
            budget = max(0.5 * control.closed_form_tol * state.n0 * info.dt / t_end,
                         ROUNDOFF_GAP * max(state.n_c, new.n_c))
            ratio = local_closed_form_gap(state, new, kappa0) / budget
            factor = 2.0 if ratio == 0 else min(2.0, max(0.1, 0.9 * ratio ** -0.25))
            if ratio > 1:
                shrink *= factor
                if shrink < 1e-12:
                    raise StiffnessError(f"closed-form consistency unreachable at t={state.t}")
                continue
            shrink = min(1.0, shrink * factor)
        if t_end - new.t <= END_SNAP * t_end:
            # summing many steps leaves a rounding sliver short of t_end
            new = replace(new, t=t_end)
        state = new
        res.steps += 1
        try:
            gap = abs(nc_closed_form(state.n0, state.flux_integral, kappa0) - state.n_c)
        except CondensateDepletedError:
            gap = math.inf
        res.max_closed_form_gap = max(res.max_closed_form_gap, gap)
        done = state.t >= t_end
        forced = record(state, info.dt) if record is not None else False
        if done or forced or res.steps % stride == 0:
            res.trajectory.append(state)
            res.dts.append(info.dt)
    if res.trajectory[-1] is not state:
        res.trajectory.append(state)
        res.dts.append(info.dt)
    res.clamped_mass = info.clamped_mass
    return res
