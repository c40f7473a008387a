"""Optimal infection-rate control for an SEIHRD epidemic model."""

from .control import (
    ControlPolicy, DescentConfig, OptimizationError, OptimizationResult, classify_strategy, optimize,
    seed_config, seed_policy,
)
from .costs import CostParams, control_cost, death_cost, hospitalization_cost
from .ctmc import SimulationRun, ensemble_stats, simulate
from .dp import BetaMenu, FeedbackPolicy, GridConfig, ValueGrid, reduce_parameters, solve_bellman
from .model import (
    DomainError, EigenReport, IntegrationError, ModelParams, StateVector, Trajectory,
    drift, effective_reproduction_number, integrate, jacobian_eigenvalues, reproduction_number,
)
from .scenario import ConfigError, Scenario, builtin_scenarios, get_scenario

__version__ = "0.1.0"
