"""Running and terminal cost functions shared by the deterministic and stochastic solvers."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .model import DomainError


@dataclass(frozen=True)
class CostParams:
    """Cost coefficients in USD.

    k: control cost per person per unit log-reduction of the infection rate
    b: baseline (uncontrolled) infection rate, per day
    c0, c1: linear and quadratic hospitalization cost rates
    d: cost of one death
    """

    k: float = 100.0
    b: float = 0.87
    c0: float = 3500.0
    c1: float = 1750.0
    d: float = 7_000_000.0

    def __post_init__(self):
        if not (self.k > 0 and self.b > 0):
            raise DomainError(f"k and b must be positive, got k={self.k}, b={self.b}")
        if not (self.c0 >= 0 and self.c1 >= 0 and self.d >= 0):
            raise DomainError("c0, c1 and d must be non-negative")

    def packed(self) -> np.ndarray:
        return np.array([self.k, self.b, self.c0, self.c1, self.d], dtype=np.float64)

    def to_dict(self) -> dict:
        return asdict(self)


def control_cost(beta, cost: CostParams, n_pop: float):
    """``N k (-log(beta/b) + beta/b - 1)``; +inf for ``beta <= 0``. Vectorised."""
    beta = np.asarray(beta, dtype=np.float64)
    q = beta / cost.b
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(beta > 0, n_pop * cost.k * (-np.log(np.where(beta > 0, q, 1.0)) + q - 1.0), np.inf)
    return float(out) if out.ndim == 0 else out


def control_cost_derivative(beta, cost: CostParams, n_pop: float):
    beta = np.asarray(beta, dtype=np.float64)
    out = n_pop * cost.k * (1.0 / cost.b - 1.0 / beta)
    return float(out) if out.ndim == 0 else out


def hospitalization_cost(h, cost: CostParams, n_pop: float):
    """``c0 H + (c1/N) H^2``."""
    h = np.asarray(h, dtype=np.float64)
    if np.any(h < 0):
        raise DomainError("hospitalized count must be non-negative")
    out = cost.c0 * h + cost.c1 / n_pop * h * h
    return float(out) if out.ndim == 0 else out


def death_cost(d_count, cost: CostParams):
    d_count = np.asarray(d_count, dtype=np.float64)
    if np.any(d_count < 0):
        raise DomainError("death count must be non-negative")
    out = cost.d * d_count
    return float(out) if out.ndim == 0 else out
