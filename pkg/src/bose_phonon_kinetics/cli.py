"""Command-line entry point ``bose-phonon-kinetics``."""

from __future__ import annotations

import argparse
import logging
import sys

from .collision import CollisionTables, equilibrium_residual
from .config import ConfigError, load_config
from .diagnostics import decay_constant, linear_constant, linear_constant_exact, tail_rate_estimate
from .dynamics import PhysicalParams, stability_threshold, threshold_check
from .grid import RadialGrid, bose_einstein, line_moment, particle_mass
from .io import initial_distribution, read_snapshot
from .mittag_leffler import beta_sum, ml_integral, ml_partial_sums, normalized_alpha0
from .runner import EXIT_CHECKS_FAILED, EXIT_ERROR, EXIT_OK, run

EQUILIBRIUM_TOL = 1e-10


def _simulate(args) -> int:
    cfg = load_config(args.config)
    out = run(cfg, workers=args.workers)
    r = out.report.run
    print(f"status: {r['status']}  steps: {r['steps']}  t: {r['t_final']:.6g}  "
          f"n_c: {r['n_c_final']:.6g}")
    if r["crossing_time"] is not None:
        print(f"condensate reached the floor at t = {r['crossing_time']:.17g}")
    for rec in out.report.records:
        print(f"  {'PASS' if rec.passed else 'FAIL'}  {rec.name}")
    return out.exit_code


def _threshold(args) -> int:
    cfg = load_config(args.config)
    grid = RadialGrid(cfg.grid.n_points, cfg.grid.p_max)
    f0 = initial_distribution(cfg, grid)
    d = cfg.diagnostics
    res = threshold_check(f0, cfg.physics.n0, cfg.delta, d.c8, d.threshold_convention)
    print(f"C(f0)      = {stability_threshold(f0, d.c8):.17g}")
    print(f"m_2(f0)    = {line_moment(f0, 2):.17g}  (mass {particle_mass(f0):.17g})")
    print(f"condition  : n0 >= {res.required_n0:.17g}  [{res.convention} units, "
          f"delta = {cfg.delta:g}]")
    print(f"n0         = {cfg.physics.n0:.17g}")
    print(f"margin     = {res.margin:.17g}  -> {'PASS' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_CHECKS_FAILED


def _equilibrium(args) -> int:
    cfg = load_config(args.config)
    grid = RadialGrid(cfg.grid.n_points, cfg.grid.p_max)
    alpha = cfg.initial_condition.alpha
    resid, scale = equilibrium_residual(bose_einstein(grid, alpha), CollisionTables(grid))
    ratio = resid / scale if scale > 0 else 0.0
    print(f"Bose-Einstein alpha = {alpha:g} on N = {grid.n}, p_max = {grid.p_max:g}")
    print(f"max residual       = {resid:.6e}")
    print(f"max pair term      = {scale:.6e}")
    print(f"relative residual  = {ratio:.3e}  -> {'PASS' if ratio <= EQUILIBRIUM_TOL else 'FAIL'}")
    return EXIT_OK if ratio <= EQUILIBRIUM_TOL else EXIT_CHECKS_FAILED


def _tails(args) -> int:
    cfg = load_config(args.config)
    grid = RadialGrid(cfg.grid.n_points, cfg.grid.p_max)
    f = read_snapshot(args.snapshot, grid)
    d = cfg.diagnostics
    alpha = d.alpha0 if d.alpha0 is not None else normalized_alpha0(f, d.a)
    e_n, i_n = ml_partial_sums(f, d.a, alpha, args.terms, rho=args.rho)
    print(f"a = {d.a:g}, alpha = {alpha:.17g}, n = {args.terms}, rho = {args.rho}")
    print(f"E_a^n          = {e_n:.17g}")
    print(f"I_a,rho^n      = {i_n:.17g}")
    print(f"int f E_a      = {ml_integral(f, d.a, alpha):.17g}")
    print(f"tail rate(t={args.time:g}) = {tail_rate_estimate(f, args.time):.17g}")
    return EXIT_OK


def _constants(args) -> int:
    k_max = args.k_max
    if k_max < 0:
        raise ConfigError("k_max must be >= 0")
    print(f"kappa0(m={args.m:g}) = {PhysicalParams(m=args.m).kappa0:.17g}")
    print(f"c0 = {decay_constant():.17g}  (= 1/30)")
    print("k  c_k                      c_k/(8 pi^2)")
    for k in range(k_max + 1):
        print(f"{k:<3d}{linear_constant(k):<25.17g}{linear_constant_exact(k)}")
    if k_max >= 3:
        print("k  S(k), a=1               S(k), a=1.5              S(k), a=2")
        for k in range(3, k_max + 1):
            print(f"{k:<3d}" + "".join(f"{beta_sum(a, k):<25.17g}" for a in (1.0, 1.5, 2.0)))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bose-phonon-kinetics",
                                description="Phonon kinetics coupled to a condensate.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run a simulation and its checks")
    s.add_argument("config")
    s.add_argument("--workers", type=int, default=1,
                   help="threads for the pair loop (results do not depend on it)")
    s.set_defaults(func=_simulate)
    s = sub.add_parser("threshold", help="evaluate the condensate stability threshold")
    s.add_argument("config")
    s.set_defaults(func=_threshold)
    s = sub.add_parser("equilibrium", help="operator residual on the Bose-Einstein state")
    s.add_argument("config")
    s.set_defaults(func=_equilibrium)
    s = sub.add_parser("tails", help="Mittag-Leffler sums and tail rate of a snapshot")
    s.add_argument("config")
    s.add_argument("snapshot")
    s.add_argument("--time", type=float, default=1.0)
    s.add_argument("--terms", type=int, default=40)
    s.add_argument("--rho", type=int, default=0)
    s.set_defaults(func=_tails)
    s = sub.add_parser("constants", help="print kappa0, c0, c_k and Beta sums")
    s.add_argument("k_max", nargs="?", type=int, default=10)
    s.add_argument("--m", type=float, default=1.0)
    s.set_defaults(func=_constants)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
