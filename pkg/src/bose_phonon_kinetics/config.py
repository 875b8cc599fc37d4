"""Flat ``section.key = value`` run configuration.

Grammar, one statement per line::

    line      := blank | comment | statement [comment]
    comment   := "#" anything
    statement := section "." key "=" value
    section   := [a-z_][a-z0-9_]*
    key       := [A-Za-z_][A-Za-z0-9_]*

Values are bare tokens (numbers, words, paths, lists).  Unknown sections or
keys, repeated keys and malformed lines are errors that carry the line number.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

_LINE = re.compile(r"^([a-z_][a-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")

PRESETS = ("bose_einstein", "gaussian_bump", "bumps", "power_tail", "file")
CHECKS = ("conservation", "closed_form", "h_theorem", "linf_bound", "threshold",
          "moment_propagation", "moment_creation", "ml_propagation", "budget")


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class GridConfig:
    n_points: int = 0
    p_max: float = 0.0


@dataclass(frozen=True)
class PhysicsConfig:
    m: float = 1.0
    g: float = 1.0
    n0: float = 0.0
    kBT: float | None = None


@dataclass(frozen=True)
class InitialConfig:
    preset: str = "bose_einstein"
    alpha: float = 1.0
    amplitude: float = 1.0
    center: float = 1.0
    width: float = 0.5
    bumps: str = ""
    core: float = 1.0
    exponent: float = 4.0
    path: str = ""


@dataclass(frozen=True)
class IntegrationConfig:
    t_end: float = 0.0
    dt_max: float = 1.0
    safety: float = 0.5
    nc_floor: float = 1e-3
    positivity_policy: str = "reject-and-halve"
    max_steps: int = 1_000_000
    fixed_dt: float | None = None


@dataclass(frozen=True)
class OutputsConfig:
    stride: int = 1
    log_samples: int = 0
    log_t_min: float = 0.0
    timeseries: str = ""
    report: str = ""
    snapshot: str = ""


@dataclass(frozen=True)
class DiagnosticsConfig:
    checks: tuple[str, ...] = ("conservation", "closed_form", "h_theorem", "linf_bound")
    k: int = 8
    a: float = 1.0
    alpha0: float | None = None
    c8: float = 1.0
    ck: float | None = None
    delta: float | None = None
    budget_headroom: float = 0.5
    threshold_convention: str = "total"
    creation_window: tuple[float, float] | None = None
    creation_slack: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig
    physics: PhysicsConfig
    initial_condition: InitialConfig = field(default_factory=InitialConfig)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    base_dir: Path = field(default=Path("."), compare=False)
    entries: tuple[tuple[str, str], ...] = field(default=(), compare=False)

    @property
    def spacing(self) -> float:
        return self.grid.p_max / self.grid.n_points

    @property
    def delta(self) -> float:
        d = self.diagnostics.delta
        return d if d is not None else self.integration.nc_floor

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


_SECTIONS = {"grid": GridConfig, "physics": PhysicsConfig,
             "initial_condition": InitialConfig, "integration": IntegrationConfig,
             "outputs": OutputsConfig, "diagnostics": DiagnosticsConfig}
_REQUIRED = ("grid.n_points", "grid.p_max", "physics.n0", "integration.t_end")


def _convert(section: str, key: str, raw: str, lineno: int):
    name = f"{section}.{key}"

    def num(cast=float):
        try:
            v = cast(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: {name} expects a number, got {raw!r}") from None
        if isinstance(v, float) and math.isnan(v):
            raise ConfigError(f"line {lineno}: {name} must not be nan")
        return v

    if name in ("grid.n_points", "integration.max_steps", "outputs.stride",
                "outputs.log_samples", "diagnostics.k"):
        return num(int)
    if name == "diagnostics.checks":
        items = tuple(x for x in re.split(r"[,\s]+", raw) if x)
        bad = [x for x in items if x not in CHECKS]
        if bad:
            raise ConfigError(f"line {lineno}: unknown check(s) {bad}; choose from {list(CHECKS)}")
        return items
    if name == "diagnostics.creation_window":
        parts = re.split(r"[,\s]+", raw)
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: {name} expects two times")
        try:
            return (float(parts[0]), float(parts[1]))
        except ValueError:
            raise ConfigError(f"line {lineno}: {name} expects two times") from None
    if name in ("diagnostics.alpha0", "diagnostics.ck") and raw == "auto":
        return None
    default = next(f for f in fields(_SECTIONS[section]) if f.name == key).default
    if isinstance(default, str):
        return raw
    return num(float)


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    """Parse and validate a configuration document."""
    values: dict[str, dict] = {s: {} for s in _SECTIONS}
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line.strip()!r}")
        section, key, raw = m.groups()
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        known = {f.name for f in fields(_SECTIONS[section])}
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {section}.{key}")
        if key in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key {section}.{key}")
        if raw == "":
            raise ConfigError(f"line {lineno}: {section}.{key} has no value")
        values[section][key] = _convert(section, key, raw, lineno)
        entries.append((f"{section}.{key}", raw))
    for name in _REQUIRED:
        s, k = name.split(".")
        if k not in values[s]:
            raise ConfigError(f"missing required key {name}")
    cfg = RunConfig(**{s: cls(**values[s]) for s, cls in _SECTIONS.items()},
                    base_dir=Path(base_dir), entries=tuple(entries))
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def _positive(name, v):
    if v is not None and not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be > 0")


def validate(cfg: RunConfig) -> None:
    g, p, ic, it, o, d = (cfg.grid, cfg.physics, cfg.initial_condition,
                          cfg.integration, cfg.outputs, cfg.diagnostics)
    if g.n_points < 2:
        raise ConfigError("grid.n_points must be >= 2")
    _positive("grid.p_max", g.p_max)
    for name in ("m", "g", "n0", "kBT"):
        _positive(f"physics.{name}", getattr(p, name))
    if ic.preset not in PRESETS:
        raise ConfigError(f"initial_condition.preset must be one of {list(PRESETS)}")
    if ic.preset == "bose_einstein":
        _positive("initial_condition.alpha", ic.alpha)
    if ic.preset in ("gaussian_bump", "power_tail"):
        _positive("initial_condition.amplitude", ic.amplitude)
    if ic.preset == "gaussian_bump":
        _positive("initial_condition.width", ic.width)
        if ic.center < 0:
            raise ConfigError("initial_condition.center must be >= 0")
    if ic.preset == "power_tail":
        _positive("initial_condition.core", ic.core)
        _positive("initial_condition.exponent", ic.exponent)
    if ic.preset == "bumps" and not ic.bumps:
        raise ConfigError("initial_condition.bumps is required for preset bumps")
    if ic.preset == "file" and not ic.path:
        raise ConfigError("initial_condition.path is required for preset file")
    _positive("integration.t_end", it.t_end)
    _positive("integration.dt_max", it.dt_max)
    _positive("integration.nc_floor", it.nc_floor)
    _positive("integration.fixed_dt", it.fixed_dt)
    if not 0 < it.safety <= 1:
        raise ConfigError("integration.safety must be in (0, 1]")
    if it.positivity_policy not in ("reject-and-halve", "clamp-with-ledger"):
        raise ConfigError("integration.positivity_policy must be reject-and-halve "
                          "or clamp-with-ledger")
    if it.max_steps < 1:
        raise ConfigError("integration.max_steps must be >= 1")
    if o.stride < 1:
        raise ConfigError("outputs.stride must be >= 1")
    if o.log_samples < 0:
        raise ConfigError("outputs.log_samples must be >= 0")
    if o.log_samples and not 0 < o.log_t_min < it.t_end:
        raise ConfigError("outputs.log_t_min must be in (0, integration.t_end)")
    if d.k <= 3:
        raise ConfigError("diagnostics.k must be > 3")
    if d.a < 1:
        raise ConfigError("diagnostics.a must be >= 1")
    for name in ("alpha0", "c8", "ck", "delta"):
        _positive(f"diagnostics.{name}", getattr(d, name))
    if d.budget_headroom < 0:
        raise ConfigError("diagnostics.budget_headroom must be >= 0")
    if d.threshold_convention not in ("total", "mixed", "line"):
        raise ConfigError("diagnostics.threshold_convention must be total, mixed or line")
    if d.creation_window is not None:
        lo, hi = d.creation_window
        if not 0 < lo < hi:
            raise ConfigError("diagnostics.creation_window must satisfy 0 < t0 < t1")
    if d.creation_slack < 0:
        raise ConfigError("diagnostics.creation_slack must be >= 0")
