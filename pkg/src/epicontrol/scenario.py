"""Built-in scenarios (parameter tables and initial conditions) and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .costs import CostParams
from .model import ModelParams, StateVector

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A scenario or sweep description is malformed."""


@dataclass(frozen=True)
class Scenario:
    model: ModelParams
    cost: CostParams
    initial: StateVector
    dt: float = 1.0
    end_time_cap: float = 6000.0
    label: str = ""

    def __post_init__(self):
        x = self.initial.as_array()
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise ConfigError(f"initial state must be finite and non-negative: {x}")
        if abs(x.sum() - self.model.n_pop) > 1e-9 * self.model.n_pop:
            raise ConfigError(f"initial compartments sum to {x.sum()}, expected n_pop={self.model.n_pop}")
        if not (self.dt > 0 and self.end_time_cap > 0):
            raise ConfigError("dt and end_time_cap must be positive")

    def with_vaccination(self, vacc_rate: float) -> "Scenario":
        return replace(self, model=replace(self.model, vacc_rate=vacc_rate))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "label": self.label,
            "model": self.model.to_dict(),
            "cost": self.cost.to_dict(),
            "initial": self.initial.to_dict(),
            "dt": self.dt,
            "end_time_cap": self.end_time_cap,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            return cls(
                model=ModelParams(**data["model"]),
                cost=CostParams(**data.get("cost", {})),
                initial=StateVector(**data["initial"]),
                dt=float(data.get("dt", 1.0)),
                end_time_cap=float(data.get("end_time_cap", 6000.0)),
                label=str(data.get("label", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc


WA_INITIAL = StateVector(7_497_705, 7_044, 6_221, 338, 88_692, 0)
US_INITIAL = StateVector(235_682_298, 4_569_525, 4_035_804, 237_589, 83_674_784, 0)


def builtin_scenarios() -> list[Scenario]:
    """Washington State on 2020-06-01 and the U.S. on 2021-01-01."""
    return [
        Scenario(ModelParams(n_pop=7_600_000.0), CostParams(), WA_INITIAL, label="wa-2020-06"),
        Scenario(ModelParams(n_pop=328_200_000.0), CostParams(), US_INITIAL, label="us-2021-01"),
    ]


def get_scenario(name: str) -> Scenario:
    for sc in builtin_scenarios():
        if sc.label == name:
            return sc
    path = Path(name)
    if path.suffix == ".json" or path.exists():
        return load_scenario(path)
    raise ConfigError(f"unknown scenario {name!r}; built-ins: {[s.label for s in builtin_scenarios()]}")


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return Scenario.from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario.to_dict(), fh, indent=2)
