"""Run orchestration: config -> simulation -> time series, snapshot and report."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as dg
from .collision import CollisionTables, entropy_dissipation
from .config import RunConfig
from .dynamics import (PhysicalParams, RunResult, SimState, StepControl, integrate,
                       threshold_check)
from .grid import (RadialFunction, RadialGrid, boundary_mass, line_moment, particle_mass,
                   weighted_sup)
from .io import initial_distribution, write_snapshot, write_timeseries
from .mittag_leffler import check_ml_propagation, normalized_alpha0

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_CHECKS_FAILED, EXIT_STABILITY_LOSS = 0, 1, 2, 3
CONSERVATION_TOL = 1e-12
CLOSED_FORM_TOL = 1e-8


@dataclass
class Setup:
    grid: RadialGrid
    tables: CollisionTables
    f0: RadialFunction
    params: PhysicalParams
    control: StepControl


@dataclass
class RunOutcome:
    exit_code: int
    report: dg.DiagnosticsReport
    rows: list[dict] = field(default_factory=list)
    result: RunResult | None = None


def build(cfg: RunConfig) -> Setup:
    grid = RadialGrid(cfg.grid.n_points, cfg.grid.p_max)
    it = cfg.integration
    return Setup(grid=grid, tables=CollisionTables(grid),
                 f0=initial_distribution(cfg, grid),
                 params=PhysicalParams(cfg.physics.m, cfg.physics.g, cfg.physics.kBT),
                 control=StepControl(safety=it.safety, dt_max=it.dt_max,
                                     nc_floor=it.nc_floor,
                                     positivity_policy=it.positivity_policy))


def snapshot_row(state: SimState, dt: float, tables: CollisionTables) -> dict:
    f = state.f
    row = {"t": state.t, "n_c": state.n_c, "mass_f": particle_mass(f),
           "total_mass": state.total_mass, "weighted_sup": weighted_sup(f),
           "entropy": dg.entropy(f),
           "dissipation": entropy_dissipation(f, tables, floor=True),
           "tail_rate": dg.tail_rate_estimate(f, state.t) if state.t > 0 else math.nan,
           "dt_used": dt, "drift_energy": state.energy_drift(),
           "drift_mass": state.mass_drift()}
    for k in range(3, 10):
        row[f"m_{k}"] = line_moment(f, k)
    return row


def _log_targets(cfg: RunConfig):
    o = cfg.outputs
    if not o.log_samples:
        return None
    targets = list(np.geomspace(o.log_t_min, cfg.integration.t_end, o.log_samples))

    def record(state: SimState, dt: float) -> bool:
        hit = False
        while targets and state.t >= targets[0] * (1 - 1e-12):
            targets.pop(0)
            hit = True
        return hit

    return record


def _guarded(report: dg.DiagnosticsReport, name: str, fn) -> None:
    try:
        report.add(fn())
    except (ValueError, ArithmeticError) as exc:
        report.add(dg.CheckRecord(name, False, note=f"check could not run: {exc}"))


def _diagnose(cfg: RunConfig, setup: Setup, res: RunResult,
              report: dg.DiagnosticsReport) -> None:
    d = cfg.diagnostics
    traj = res.trajectory
    f0 = setup.f0
    n0 = cfg.physics.n0
    checks = set(d.checks)
    if "conservation" in checks:
        de = max(s.energy_drift() for s in traj)
        dm = max(s.mass_drift() for s in traj)
        report.add(dg.CheckRecord(
            "conservation", de <= CONSERVATION_TOL and dm <= CONSERVATION_TOL,
            measured={"energy_drift": de, "mass_drift": dm},
            bound={"energy_drift": CONSERVATION_TOL, "mass_drift": CONSERVATION_TOL},
            tolerance=CONSERVATION_TOL, reference="conservation of mass and energy"))
    if "closed_form" in checks:
        gap = res.max_closed_form_gap
        report.add(dg.CheckRecord(
            "condensate_closed_form", gap <= CLOSED_FORM_TOL * n0,
            measured={"max_abs_gap": gap}, bound={"max_abs_gap": CLOSED_FORM_TOL * n0},
            tolerance=CLOSED_FORM_TOL, reference="closed-form condensate mass"))
    if "h_theorem" in checks and len(traj) >= 2:
        _guarded(report, "h_theorem", lambda: dg.check_h_theorem(traj, setup.tables))
    if "linf_bound" in checks:
        _guarded(report, "linf_bound", lambda: dg.check_linf_bound(traj))
    if "threshold" in checks:
        th = threshold_check(f0, n0, cfg.delta, d.c8, d.threshold_convention)
        n_min = min(s.n_c for s in traj)
        held = n_min >= cfg.delta and res.status != "stability_loss"
        report.add(dg.CheckRecord(
            "bec_stability", th.passed and held,
            measured={"margin": th.margin, "threshold": th.threshold, "min_n_c": n_min},
            bound={"required_n0": th.required_n0, "delta": cfg.delta},
            reference="uniform condensate stability above threshold",
            note=f"threshold convention: {th.convention}"))
    if "moment_propagation" in checks:
        def prop():
            probe = dg.check_moment_propagation(traj, d.k, d.ck or 1.0)
            ck = d.ck if d.ck is not None else probe.measured["min_passing_ck"]
            return dg.check_moment_propagation(traj, d.k, ck)
        _guarded(report, f"moment_propagation_k{d.k}", prop)
    if "moment_creation" in checks:
        _guarded(report, f"moment_creation_k{d.k}", lambda: dg.check_moment_creation(
            traj, d.k, cfg.delta, window=d.creation_window, slack=d.creation_slack))
    if "ml_propagation" in checks:
        alpha0 = d.alpha0 if d.alpha0 is not None else normalized_alpha0(f0, d.a)
        _guarded(report, f"ml_propagation_a{d.a:g}",
                 lambda: check_ml_propagation(traj, d.a, alpha0))
    if "budget" in checks:
        budget = dg.MomentBudget.from_initial(f0, cfg.delta, d.budget_headroom)
        _guarded(report, "budget_membership", lambda: dg.budget_check(traj, budget))


def run(cfg: RunConfig, workers: int = 1) -> RunOutcome:
    """Simulate, write the configured outputs and return the exit status."""
    setup = build(cfg)
    n0 = cfg.physics.n0
    th = threshold_check(setup.f0, n0, cfg.delta, cfg.diagnostics.c8,
                         cfg.diagnostics.threshold_convention)
    logger.info("threshold C(f0) = %.6g, required n0 = %.6g, margin = %.6g",
                th.threshold, th.required_n0, th.margin)
    state = SimState.initial(setup.f0, n0)
    it = cfg.integration
    res = integrate(state, it.t_end, setup.tables, setup.params, setup.control,
                    stride=cfg.outputs.stride, max_steps=it.max_steps,
                    fixed_dt=it.fixed_dt, workers=workers, record=_log_targets(cfg))
    rows = [snapshot_row(s, dt, setup.tables) for s, dt in zip(res.trajectory, res.dts)]
    final = res.trajectory[-1]
    report = dg.DiagnosticsReport(run={
        "config": dict(cfg.entries), "status": res.status, "steps": res.steps,
        "t_final": final.t, "n_c_final": final.n_c,
        "n_c_min": min(s.n_c for s in res.trajectory),
        "crossing_time": res.crossing_time, "clamped_mass": res.clamped_mass,
        "threshold": {"value": th.threshold, "required_n0": th.required_n0,
                      "margin": th.margin, "convention": th.convention},
        "max_boundary_mass": max(boundary_mass(s.f) for s in res.trajectory),
        "cold_gas_ratio": setup.params.cold_gas_ratio(n0)})
    _diagnose(cfg, setup, res, report)
    o = cfg.outputs
    if o.timeseries:
        write_timeseries(cfg.resolve(o.timeseries), rows)
    if o.snapshot:
        write_snapshot(cfg.resolve(o.snapshot), final.f)
    if o.report:
        cfg.resolve(o.report).write_text(report.to_json())
    if res.status == "stability_loss":
        code = EXIT_STABILITY_LOSS
    elif res.status != "completed" or not report.all_passed:
        code = EXIT_CHECKS_FAILED
    else:
        code = EXIT_OK
    return RunOutcome(code, report, rows, res)
