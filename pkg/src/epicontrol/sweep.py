"""One-parameter sweeps of the deterministic optimizer."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .control import OptimizationError, optimize, seed_config, seed_policy
from .model import DomainError, IntegrationError, StateVector
from .scenario import ConfigError, Scenario

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("axis", "strategy", "cost_per_person", "end_time", "converged")
EXTRA_COLUMNS = ("init", "capped", "sigma", "error")


def _scale_population(sc: Scenario, n: float) -> Scenario:
    factor = n / sc.model.n_pop
    x = sc.initial.as_array() * factor
    x[0] = n - x[1:].sum()
    return replace(sc, model=replace(sc.model, n_pop=n), initial=StateVector.from_array(x))


def _scale_infected(sc: Scenario, factor: float) -> Scenario:
    x = sc.initial.as_array()
    x[1:4] *= factor
    x[0] = sc.model.n_pop - x[1:].sum()
    if x[0] < 0:
        raise ConfigError(f"i0_scale={factor} leaves no susceptibles")
    return replace(sc, initial=StateVector.from_array(x))


# axis -> (rule applied to the base scenario, description written into output metadata)
AXIS_RULES: dict[str, tuple[Callable[[Scenario, float], Scenario], str]] = {
    "n_pop": (_scale_population, "every initial compartment scaled by N / N_base"),
    "k": (lambda sc, v: replace(sc, cost=replace(sc.cost, k=v)), "control cost coefficient k replaced"),
    "i0_scale": (_scale_infected, "initial E, I, H multiplied by the value; S absorbs the difference"),
    "mean_infectious_period": (
        lambda sc, v: replace(sc, model=sc.model.with_infectious_period(v)),
        "lambda0, gamma0, delta0 rescaled to sum to 1/value with their ratios fixed",
    ),
    "vacc_rate": (lambda sc, v: sc.with_vaccination(v), "vaccination rate o replaced"),
}


def parse_number(text) -> float:
    """Float from ``'0.5'``, ``'1/300'`` or a number."""
    if isinstance(text, (int, float)):
        return float(text)
    try:
        return float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    strategy_seeds: tuple = ("suppression", "mitigation")
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in AXIS_RULES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {sorted(AXIS_RULES)}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one value")
        vals = tuple(parse_number(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("sweep values must be finite")
        object.__setattr__(self, "values", vals)
        for tag in self.strategy_seeds:
            if tag not in ("suppression", "mitigation"):
                raise ConfigError(f"unknown strategy seed {tag!r}")

    def scenario_at(self, base: Scenario, value: float) -> Scenario:
        rule, _ = AXIS_RULES[self.axis]
        try:
            return replace(rule(base, value), label=f"{base.label}:{self.axis}={value:g}")
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class SweepRow:
    axis: float
    strategy: str
    cost_per_person: float
    end_time: float
    converged: bool
    init: str
    capped: bool = False
    sigma: float = float("nan")
    error: str = ""


@dataclass
class SweepTable:
    axis_name: str
    rows: list
    rule: str

    @property
    def failed(self) -> list:
        return [r for r in self.rows if r.error]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def run_sweep(spec: SweepSpec, base: Scenario, progress: Optional[Callable[[SweepRow], None]] = None) -> SweepTable:
    """One optimizer run per (axis value, seed); failures become rows with ``error`` set."""
    rows = []
    scenarios = [(value, spec.scenario_at(base, value)) for value in spec.values]
    for value, sc in scenarios:
        for tag in spec.strategy_seeds:
            try:
                config = seed_config(tag, **spec.config)
                res = optimize(sc, seed_policy(tag, sc.model, sc.cost, sc.dt, sc.initial), config)
                row = SweepRow(value, res.label, res.cost_per_person, res.end_time, res.converged, tag,
                               res.capped, res.sigma)
            except (OptimizationError, IntegrationError, DomainError, FloatingPointError) as exc:
                log.warning("sweep %s=%g seed %s failed: %s", spec.axis, value, tag, exc)
                row = SweepRow(value, "failed", float("nan"), float("nan"), False, tag, error=str(exc))
            rows.append(row)
            if progress is not None:
                progress(row)
    return SweepTable(spec.axis, rows, AXIS_RULES[spec.axis][1])


def log_fit_r2(n_values: Sequence[float], end_times: Sequence[float]) -> tuple[float, float]:
    """Slope and R^2 of a least-squares line of end time against log N."""
    x = np.log(np.asarray(n_values, dtype=np.float64))
    y = np.asarray(end_times, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(slope), float(1.0 - np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0
