"""Numerical checks of the conservation laws, entropy decay and moment bounds.

Every check returns a :class:`CheckRecord`; a :class:`DiagnosticsReport`
collects them and serializes to JSON.  Constants that the estimates only
assert to exist are measured (smallest passing value) rather than invented.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .collision import (EIGHT_PI_SQ, CollisionTables, dissipation_scale, dissipation_summands,
                        linear_pairing, quadratic_pairing)
from .grid import RadialFunction, line_moment, node_mass, weighted_sup

SCHEMA_VERSION = 1
CREATION_NOISE = 1e-10


@dataclass
class CheckRecord:
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)
    tolerance: float = 0.0
    reference: str = ""
    note: str = ""


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class DiagnosticsReport:
    records: list[CheckRecord] = field(default_factory=list)
    run: dict = field(default_factory=dict)

    def add(self, rec: CheckRecord) -> CheckRecord:
        self.records.append(rec)
        return rec

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_dict(self) -> dict:
        return _json_safe({"schema_version": SCHEMA_VERSION, "run": self.run,
                           "all_passed": self.all_passed,
                           "checks": [asdict(r) for r in self.records]})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


# ----------------------------------------------------------------- constants

def _beta_int(a: int, b: int) -> Fraction:
    # B(a, b) for positive integers
    return Fraction(math.factorial(a - 1) * math.factorial(b - 1), math.factorial(a + b - 1))


def decay_constant() -> float:
    """c0 = int_0^1 z^2 (1 - z)^2 dz = B(3, 3) = 1/30."""
    return float(_beta_int(3, 3))


def linear_constant_exact(k: int) -> Fraction:
    """c_k / (8 pi^2) = B(3,3) - B(k+3,3) - B(3,k+3) as an exact rational."""
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a nonnegative integer, got {k}")
    k = int(k)
    return _beta_int(3, 3) - 2 * _beta_int(k + 3, 3)


def linear_constant(k: int) -> float:
    """c_k = 8 pi^2 int_0^1 z^2 (1-z)^2 (1 - z^k - (1-z)^k) dz."""
    return EIGHT_PI_SQ * float(linear_constant_exact(k))


def linear_constant_record(k_max: int = 10) -> CheckRecord:
    """c_1 = 0 and c_k > 0 for k >= 2; c_0 is negative, which is reported."""
    table = {k: linear_constant(k) for k in range(k_max + 1)}
    ok = (linear_constant_exact(1) == 0 and
          all(linear_constant_exact(k) > 0 for k in range(2, k_max + 1)))
    return CheckRecord("linear_constant_signs", ok, measured={"c_k": table},
                       reference="linear part of the moment identity",
                       note="c_0 < 0 and c_1 = 0: positivity holds only for k >= 2")


# ------------------------------------------------------------------- entropy

def entropy(f: RadialFunction) -> float:
    """H = sum mu_i (f log f - (1+f) log(1+f)), with 0 where f = 0."""
    x = f.values
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
    integrand = xlogx - (1.0 + x) * np.log1p(x)
    return float(np.dot(node_mass(f.grid), integrand))


def check_h_theorem(trajectory: Sequence, tables: CollisionTables,
                    rel_tol: float = 1e-10, summand_tol: float = 1e-13) -> CheckRecord:
    """Entropy non-increasing along snapshots; every pair summand nonnegative."""
    if len(trajectory) < 2:
        raise ValueError("H-theorem check needs at least 2 snapshots")
    hs = [entropy(s.f) for s in trajectory]
    tol = rel_tol * abs(hs[0])
    rises = [hs[i + 1] - hs[i] for i in range(len(hs) - 1)]
    worst_rise = max(rises)
    worst_summand = math.inf
    for s in trajectory:
        d = dissipation_summands(s.f, tables, floor=True)
        scale = dissipation_scale(s.f, tables, floor=True)
        if scale > 0:
            worst_summand = min(worst_summand, float(d.min()) / scale)
    if worst_summand == math.inf:
        worst_summand = 0.0
    ok = worst_rise <= tol and worst_summand >= -summand_tol
    return CheckRecord("h_theorem", ok,
                       measured={"max_entropy_increase": worst_rise,
                                 "min_relative_summand": worst_summand,
                                 "H_first": hs[0], "H_last": hs[-1]},
                       bound={"entropy_increase": tol, "relative_summand": -summand_tol},
                       tolerance=rel_tol, reference="H-theorem")


# ------------------------------------------------------------------- moments

def controlm2_check(f: RadialFunction, slack: float = 1e-12) -> tuple[bool, float, float]:
    """m_2 <= 2 sqrt(m_3 ||f r^2||_inf); returns (ok, lhs, rhs)."""
    lhs = line_moment(f, 2)
    # separate roots: the product underflows for tiny states
    rhs = 2.0 * math.sqrt(line_moment(f, 3)) * math.sqrt(weighted_sup(f))
    return lhs <= rhs * (1 + slack), lhs, rhs


def check_linf_bound(trajectory: Sequence, rel_tol: float = 1e-9) -> CheckRecord:
    """sup_t ||f r^2|| <= max{||f0 r^2||, 3 sup_t m_4 / (2 c0^{1/4} m_3^{3/4})}."""
    ws = np.array([weighted_sup(s.f) for s in trajectory])
    m4 = np.array([line_moment(s.f, 4) for s in trajectory])
    m3 = line_moment(trajectory[0].f, 3)
    c0 = decay_constant()
    moment_side = 3.0 * m4.max() / (2.0 * c0 ** 0.25 * m3 ** 0.75) if m3 > 0 else 0.0
    bound = max(ws[0], moment_side)
    m2_ok = [controlm2_check(s.f) for s in trajectory]
    worst_m2 = max((lhs / rhs if rhs > 0 else 0.0) for _, lhs, rhs in m2_ok)
    ok = ws.max() <= bound * (1 + rel_tol) and all(o for o, _, _ in m2_ok)
    return CheckRecord("linf_bound", ok,
                       measured={"sup_weighted_sup": ws.max(), "sup_m4": m4.max(),
                                 "max_m2_ratio": worst_m2},
                       bound={"weighted_sup": bound, "m2_ratio": 1.0},
                       tolerance=rel_tol,
                       reference="weighted sup-norm estimate and m_2 interpolation")


def log_convexity_holds(f: RadialFunction, i: float, j: float, k: float,
                        slack: float = 1e-12) -> bool:
    """m_j <= m_i^{(k-j)/(k-i)} m_k^{(j-i)/(k-i)} for i < j < k."""
    mi, mj, mk = (line_moment(f, q) for q in (i, j, k))
    if mj == 0:
        return True
    if mi == 0 or mk == 0:
        return False
    # compared in logs so that tiny moments do not underflow
    log_rhs = ((k - j) * math.log(mi) + (j - i) * math.log(mk)) / (k - i)
    return math.log(mj) <= log_rhs + math.log1p(slack)


def check_moment_propagation(trajectory: Sequence, k: int, ck: float) -> CheckRecord:
    """sup_t m_k <= max{m_k(0), ck m_3^{(k+1)/4}}; reports the smallest passing ck."""
    if k <= 3:
        raise ValueError("moment propagation needs k > 3")
    mk = np.array([line_moment(s.f, k) for s in trajectory])
    m3 = line_moment(trajectory[0].f, 3)
    scale = m3 ** ((k + 1) / 4.0) if m3 > 0 else 0.0
    sup = float(mk.max())
    if sup <= mk[0] or scale == 0:
        ck_min = 0.0
    else:
        ck_min = sup / scale
    bound = max(float(mk[0]), ck * scale)
    ok = sup <= bound * (1 + 1e-12)
    return CheckRecord(f"moment_propagation_k{k}", ok,
                       measured={"sup_m_k": sup, "m_k0": float(mk[0]), "min_passing_ck": ck_min},
                       bound={"m_k": bound, "ck": ck}, tolerance=1e-12,
                       reference="propagation of polynomial moments")


def fit_power_law(t, y) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log t."""
    lt, ly = np.log(np.asarray(t, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lt, ly, 1)
    return float(slope), float(intercept)


def check_moment_creation(trajectory: Sequence, k: int, delta: float,
                          window: tuple[float, float] | None = None,
                          plateau: float | None = None, slack: float = 0.5,
                          slope_tol: float = 0.25) -> CheckRecord:
    """Early-time decay of m_k from large initial tails.

    Over the window, t^{(k-3)/5} (m_k(t) - plateau) is compared with
    (1/(delta (k-3)))^{(k-3)/5} m_3 (1 + slack), and the log-log slope of
    m_k - plateau is fitted for comparison with -(k-3)/5.  The plateau
    defaults to the last snapshot's m_k.
    """
    if k <= 3:
        raise ValueError("moment creation needs k > 3")
    t = np.array([s.t for s in trajectory])
    mk = np.array([line_moment(s.f, k) for s in trajectory])
    plateau = float(mk[-1]) if plateau is None else plateau
    lo, hi = window if window is not None else (t[t > 0].min(), t.max())
    if not (lo > 0 and hi / lo >= 10.0 * (1 - 1e-12)):
        raise ValueError(f"creation window [{lo}, {hi}] spans less than one decade")
    inside = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    # excesses at rounding level are no transient
    sel = inside & (mk - plateau > CREATION_NOISE * abs(plateau))
    expo = (k - 3) / 5.0
    m3 = line_moment(trajectory[0].f, 3)
    bound = (1.0 / (delta * (k - 3))) ** expo * m3 * (1 + slack)
    if not sel.any():
        return CheckRecord(f"moment_creation_k{k}", True,
                           measured={"sup_scaled_excess": 0.0, "plateau": plateau,
                                     "window": [float(lo), float(hi)]},
                           bound={"scaled_excess": bound, "slope": -expo},
                           tolerance=slope_tol, reference="creation of polynomial moments",
                           note="no decaying transient in the window")
    if sel.sum() < 3:
        raise ValueError("creation window holds fewer than 3 decaying snapshots")
    ts, excess = t[sel], mk[sel] - plateau
    scaled = float(np.max(ts ** expo * excess))
    slope, _ = fit_power_law(ts, excess)
    slope_ok = abs(slope + expo) <= slope_tol * expo
    return CheckRecord(f"moment_creation_k{k}", bool(scaled <= bound and slope_ok),
                       measured={"sup_scaled_excess": scaled, "slope": slope,
                                 "plateau": plateau, "window": [float(lo), float(hi)],
                                 "bound_satisfied": bool(scaled <= bound),
                                 "slope_satisfied": bool(slope_ok)},
                       bound={"scaled_excess": bound, "slope": -expo},
                       tolerance=slope_tol, reference="creation of polynomial moments")


# ------------------------------------------- pairing with powers of r

def quadratic_bound_check(f: RadialFunction, k: float, tables: CollisionTables,
                          slack: float = 1e-12) -> tuple[bool, float, float]:
    """Quadratic pairing with r^k <= 8 pi^2 4 2^k (m_{k+3} m_3 + m_{k+1} m_5)."""
    if k < 1:
        raise ValueError("quadratic bound needs k >= 1")
    lhs = quadratic_pairing(f, f.grid.nodes ** k, tables)
    m = lambda q: line_moment(f, q)
    rhs = EIGHT_PI_SQ * 4.0 * 2.0 ** k * (m(k + 3) * m(3) + m(k + 1) * m(5))
    return lhs <= rhs + slack * abs(rhs), lhs, rhs


def linear_identity_check(f: RadialFunction, k: int, tables: CollisionTables,
                          rel_tol: float = 1e-6) -> tuple[bool, float, float]:
    """Linear pairing with r^k against -c_k m_{k+7}."""
    lhs = linear_pairing(f, f.grid.nodes ** k, tables)
    rhs = -linear_constant(k) * line_moment(f, k + 7)
    scale = max(abs(rhs), abs(lhs))
    ok = abs(lhs - rhs) <= rel_tol * scale if scale > 0 else True
    return ok, lhs, rhs


# ------------------------------------------------------------------- tails

def tail_rate_estimate(f: RadialFunction, t: float, alpha_max: float = 50.0,
                       iterations: int = 60) -> float:
    """Largest alpha with 4 pi sum w r^3 f exp(alpha min(1, t^{1/5}) r) <= 1/(2 alpha)."""
    if not t > 0:
        raise ValueError("tail rate needs t > 0")
    g = f.grid
    base = 4.0 * math.pi * g.weights * g.nodes ** 3 * f.values
    s = min(1.0, t ** 0.2)
    r = g.nodes

    def ok(alpha):
        with np.errstate(over="ignore"):
            return float(np.dot(base, np.exp(alpha * s * r))) <= 0.5 / alpha

    if ok(alpha_max):
        return alpha_max
    lo, hi = 0.0, alpha_max
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ------------------------------------------------------------------ budgets

@dataclass(frozen=True)
class MomentBudget:
    h3: float
    h8: float
    h_inf: float
    delta: float

    def __post_init__(self):
        if self.h3 < 0 or self.h8 < 0 or self.h_inf < 0 or not self.delta > 0:
            raise ValueError("budgets must be nonnegative and delta > 0")

    @classmethod
    def from_initial(cls, f0: RadialFunction, delta: float, headroom: float = 0.5,
                     h8: float | None = None) -> "MomentBudget":
        """Budgets read off f0 with multiplicative headroom on m_8 and sup-norm."""
        return cls(h3=line_moment(f0, 3),
                   h8=h8 if h8 is not None else (1 + headroom) * line_moment(f0, 8),
                   h_inf=(1 + headroom) * weighted_sup(f0), delta=delta)


def h8_from(h3: float, delta: float, kappa0: float, c_big: float,
            c_small: float = 1.0) -> float:
    """2 (C8/c8) h3^{9/4} + (kappa0/delta) C8 h3^{7/2}."""
    return 2.0 * (c_big / c_small) * h3 ** 2.25 + kappa0 / delta * c_big * h3 ** 3.5


def in_budget(f: RadialFunction, budget: MomentBudget, rel_tol: float = 1e-10) -> dict:
    m3 = line_moment(f, 3)
    e_ok = abs(m3 - budget.h3) <= rel_tol * budget.h3 if budget.h3 > 0 else m3 == 0
    return {"nonnegative": bool(np.all(f.values >= 0)), "energy": bool(e_ok),
            "m8": bool(line_moment(f, 8) <= budget.h8 * (1 + 1e-12)),
            "weighted_sup": bool(weighted_sup(f) <= budget.h_inf * (1 + 1e-12))}


def budget_check(states: Sequence | RadialFunction, budget: MomentBudget) -> CheckRecord:
    """Membership in the invariant set; along a trajectory, preservation."""
    fs = [states] if isinstance(states, RadialFunction) else [s.f for s in states]
    flags = [in_budget(f, budget) for f in fs]
    inside = [all(fl.values()) for fl in flags]
    ok = all(inside) if inside[0] else True
    first_exit = next((i for i, v in enumerate(inside) if not v), None)
    return CheckRecord("budget_membership", ok,
                       measured={"initially_inside": inside[0], "first_exit": first_exit,
                                 "max_m8": max(line_moment(f, 8) for f in fs),
                                 "max_weighted_sup": max(weighted_sup(f) for f in fs)},
                       bound=asdict(budget), tolerance=1e-10,
                       reference="invariant moment set")
