"""Open-loop optimal control of the infection rate with a free end time.

The Euler-discretized cost is minimised by heavy-ball gradient descent over the
per-step infection rates. Gradients come from an exact reverse sweep through
the Euler map, the extinction constraint ``E_T + I_T + H_T <= 1/e`` is relaxed
by a quadratic penalty, and the horizon moves one step at a time according to
the sign of the Hamiltonian at the end.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from . import _kernels
from .costs import CostParams, control_cost, control_cost_derivative, hospitalization_cost
from .model import (
    DomainError, IntegrationError, ModelParams, StateVector, Trajectory, drift, effective_reproduction_number,
    integrate,
)

if TYPE_CHECKING:
    from .scenario import Scenario

log = logging.getLogger(__name__)

EXTINCTION_THRESHOLD = float(np.exp(-1.0))

STRATEGIES = ("suppression", "mitigation", "delay-mitigation", "other")


class OptimizationError(RuntimeError):
    """Descent produced a non-finite cost; ``last_result`` holds the last stable iterate."""

    def __init__(self, message: str, last_result: Optional["OptimizationResult"] = None):
        super().__init__(message)
        self.last_result = last_result


@dataclass
class ControlPolicy:
    """Per-step infection rates ``beta[n]`` applied on ``[n dt, (n + 1) dt)``."""

    beta: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        self.beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        if self.beta.ndim != 1:
            raise DomainError("beta must be one-dimensional")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")

    @classmethod
    def constant(cls, beta: float, end_time: float, dt: float = 1.0) -> "ControlPolicy":
        return cls(np.full(int(round(end_time / dt)), float(beta)), dt)

    @property
    def horizon_steps(self) -> int:
        return int(self.beta.shape[0])

    @property
    def end_time(self) -> float:
        return self.horizon_steps * self.dt


@dataclass(frozen=True)
class AdjointTrajectory:
    """Costates ``p`` (shape (K + 1, 6), sign convention of the maximum principle) and multiplier."""

    p: np.ndarray
    sigma: float


@dataclass(frozen=True)
class CostBreakdown:
    control: float
    hospitalization: float
    death: float
    penalty: float = 0.0

    @property
    def total(self) -> float:
        return self.control + self.hospitalization + self.death + self.penalty


@dataclass(frozen=True)
class DescentConfig:
    """Hyperparameters of :func:`optimize`.

    ``step`` is multiplied by ``1/N`` before use, so it is comparable across
    population sizes. ``grad_tol`` is relative to ``N k dt``.
    """

    step: float = 1e-6
    momentum: float = 0.9
    mu: float = 0.01
    inner_steps: int = 20
    max_outer: int = 20_000
    grad_tol: float = 1e-3
    patience: int = 50
    stall_outer: int = 200
    end_time_window: int = 3
    max_polish: int = 200_000
    end_time_cap: Optional[float] = None
    beta_min_frac: float = 1e-4
    constrained: bool = True
    adjust_end_time: bool = True


@dataclass
class OptimizationResult:
    policy: ControlPolicy
    trajectory: Trajectory
    total_cost: float
    cost_breakdown: CostBreakdown
    end_time: float
    sigma: float
    converged: bool
    label: str
    model: ModelParams
    cost: CostParams
    mu: float
    capped: bool = False
    iterations: int = 0
    hamiltonian_end: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    @property
    def cost_per_person(self) -> float:
        return self.total_cost / self.model.n_pop

    @property
    def effective_reproduction(self) -> np.ndarray:
        s = self.trajectory.column("s")[:-1]
        return effective_reproduction_number(self.policy.beta, np.clip(s, 0, self.model.n_pop), self.model)


def penalty(trajectory: Trajectory, mu: float, n_pop: float) -> float:
    ex = max(0.0, trajectory.final.active - EXTINCTION_THRESHOLD)
    return n_pop / (2.0 * mu) * ex * ex


def sigma_from_penalty(trajectory: Trajectory, mu: float, n_pop: float) -> float:
    """Lagrange multiplier recovered from the penalty: ``(N/mu) max(0, E+I+H - 1/e)``."""
    return n_pop / mu * max(0.0, trajectory.final.active - EXTINCTION_THRESHOLD)


def total_cost(trajectory: Trajectory, policy: ControlPolicy, model: ModelParams, cost: CostParams,
               mu: Optional[float] = None) -> tuple[float, CostBreakdown]:
    """Left-rectangle running cost plus death cost, plus the penalty when ``mu`` is given."""
    beta = policy.beta
    if trajectory.n_steps != beta.shape[0]:
        raise ValueError(f"trajectory has {trajectory.n_steps} steps but policy has {beta.shape[0]}")
    dt = policy.dt
    n = model.n_pop
    h = trajectory.column("h")[:-1]
    parts = CostBreakdown(
        control=float(dt * np.sum(control_cost(beta, cost, n))),
        hospitalization=float(dt * np.sum(hospitalization_cost(h, cost, n))),
        death=float(cost.d * trajectory.final.d),
        penalty=penalty(trajectory, mu, n) if mu is not None else 0.0,
    )
    return parts.total, parts


def adjoint_sweep(trajectory: Trajectory, policy: ControlPolicy, model: ModelParams, cost: CostParams,
                  sigma: float) -> AdjointTrajectory:
    """Reverse sweep through the Euler scheme.

    With ``sigma = (N/mu) * excess`` this is the exact gradient of the
    penalised discrete cost with respect to every state.
    """
    if trajectory.n_steps != policy.horizon_steps:
        raise ValueError("trajectory and policy are not aligned")
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    lam_T = np.array([0.0, sigma, sigma, sigma, 0.0, cost.d])
    lam, _ = _kernels.backward(trajectory.states, policy.beta, policy.dt, model.packed(), cost.packed(), lam_T)
    bad = ~np.all(np.isfinite(lam), axis=1)
    if bad.any():
        step = int(np.flatnonzero(bad).max())
        raise FloatingPointError(f"non-finite costate at step {step}")
    return AdjointTrajectory(p=-lam, sigma=float(sigma))


def policy_gradient(trajectory: Trajectory, adjoint: AdjointTrajectory, policy: ControlPolicy,
                    model: ModelParams, cost: CostParams) -> np.ndarray:
    """Derivative of the penalised discrete cost with respect to each ``beta[n]``."""
    dt = policy.dt
    beta = policy.beta
    x = trajectory.states[:-1]
    lam_next = -adjoint.p[1:]
    s, i = x[:, 0], x[:, 2]
    inf = dt * beta * s * i / model.n_pop
    lam_s = lam_next[:, 0].copy()
    vmax = model.vacc_rate * model.n_pop * dt
    if vmax > 0:
        clamped = s - inf <= vmax
        lam_s[clamped] = lam_next[clamped, 4]
    return dt * control_cost_derivative(beta, cost, model.n_pop) + dt * s * i / model.n_pop * (lam_next[:, 1] - lam_s)


def hamiltonian(state, costate, beta: float, model: ModelParams, cost: CostParams) -> float:
    """``f(x, beta) . P - L(beta) - F(H)``."""
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=np.float64)
    f = drift(x, beta, model)
    return float(f @ np.asarray(costate)) - control_cost(beta, cost, model.n_pop) \
        - hospitalization_cost(x[3], cost, model.n_pop)


def maximizing_beta(state, costate, model: ModelParams, cost: CostParams, beta_min: float = 0.0) -> float:
    """Argmax of the Hamiltonian over ``beta`` in ``(beta_min, b]``.

    The Hamiltonian is ``beta * a - L(beta) + const`` with
    ``a = S I / N (P_E - P_S)``, which is strictly concave in beta.
    """
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=np.float64)
    p = np.asarray(costate, dtype=np.float64)
    a = x[0] * x[2] / model.n_pop * (p[1] - p[0])
    nk = model.n_pop * cost.k
    if a >= 0:
        best = cost.b
    else:
        best = 1.0 / (1.0 / cost.b - a / nk)
    return float(min(cost.b, max(beta_min, best)))


def sup_hamiltonian(state, costate, model: ModelParams, cost: CostParams, beta_min: float = 0.0) -> tuple[float, float]:
    beta = maximizing_beta(state, costate, model, cost, beta_min)
    return hamiltonian(state, costate, beta, model, cost), beta


# seeds placing the descent in each basin
SUPPRESSION_SEED_R0 = 0.25
SUPPRESSION_SEED_DAYS = 120.0
MITIGATION_SEED_DAYS = 1500.0


def seed_policy(tag: str, model: ModelParams, cost: CostParams, dt: float = 1.0,
                initial: Optional[StateVector] = None, max_days: float = 6000.0) -> ControlPolicy:
    """Initial policy placing the descent in the basin named by ``tag``.

    Given ``initial``, the suppression seed runs until its own trajectory meets
    the extinction threshold (at least ``SUPPRESSION_SEED_DAYS``), so it starts
    feasible at any population size.
    """
    if tag == "suppression":
        beta = SUPPRESSION_SEED_R0 * model.infectious_exit_rate
        days = SUPPRESSION_SEED_DAYS
        if initial is not None:
            steps = int(round(max_days / dt))
            traj = integrate(initial, np.full(steps, beta), model, dt)
            active = traj.states[:, 1:4].sum(axis=1)
            hit = np.flatnonzero(active <= EXTINCTION_THRESHOLD)
            days = max(days, (hit[0] if hit.size else steps) * dt)
        return ControlPolicy.constant(beta, days, dt)
    if tag == "mitigation":
        return ControlPolicy.constant(cost.b, MITIGATION_SEED_DAYS, dt)
    raise ValueError(f"unknown seed {tag!r}; expected 'suppression' or 'mitigation'")


# The short suppression horizon tolerates only small steps; the long mitigation
# horizon needs larger ones to leave shallow basins within the iteration budget.
SEED_STEPS = {"suppression": 1e-6, "mitigation": 1e-5}


def seed_config(tag: str, **overrides) -> DescentConfig:
    """Default :class:`DescentConfig` for a seed tag, with field overrides."""
    if tag not in SEED_STEPS:
        raise ValueError(f"unknown seed {tag!r}; expected one of {sorted(SEED_STEPS)}")
    overrides.setdefault("step", SEED_STEPS[tag])
    return DescentConfig(**overrides)


def _make_result(x0, beta, dt, model, cost, config, **extra) -> OptimizationResult:
    policy = ControlPolicy(beta.copy(), dt)
    traj = integrate(x0, policy, model, dt)
    mu = config.mu if config.constrained else None
    total, parts = total_cost(traj, policy, model, cost, mu)
    sigma = sigma_from_penalty(traj, config.mu, model.n_pop) if config.constrained else 0.0
    result = OptimizationResult(
        policy=policy, trajectory=traj, total_cost=total, cost_breakdown=parts,
        end_time=policy.end_time, sigma=sigma, label="other", model=model, cost=cost,
        mu=config.mu, **extra,
    )
    result.label = classify_strategy(result)
    return result


def optimize(scenario: "Scenario", init_policy: ControlPolicy,
             config: DescentConfig = DescentConfig()) -> OptimizationResult:
    """Locally optimal policy and end time from ``init_policy``.

    Each outer iteration runs ``config.inner_steps`` descent steps on the
    current horizon, then moves the end time by at most one step: extend when
    the maximised Hamiltonian at ``T`` is positive, otherwise shrink when the
    one at ``T - dt`` is negative.
    """
    model, cost = scenario.model, scenario.cost
    dt = init_policy.dt
    if np.any(init_policy.beta <= 0):
        raise DomainError("initial policy must be strictly positive")
    n = model.n_pop
    mp, cp = model.packed(), cost.packed()
    x0 = scenario.initial.as_array()
    cap = config.end_time_cap if config.end_time_cap is not None else scenario.end_time_cap
    cap_steps = int(round(cap / dt))
    beta_lo = config.beta_min_frac * cost.b
    inv_mu = 1.0 / config.mu if config.constrained else 0.0
    step = config.step / n
    grad_scale = config.grad_tol * n * cost.k * dt

    beta = np.clip(init_policy.beta, beta_lo, cost.b).copy()[:cap_steps]
    vel = np.zeros_like(beta)
    horizons: deque = deque(maxlen=config.patience)
    recent: deque = deque(maxlen=config.stall_outer)
    history: list = []
    capped = False
    iterations = 0

    def run(beta, vel, n_iter):
        nonlocal iterations
        stable = beta.copy()
        buf = np.empty(n_iter)
        fail = _kernels.descend(x0, beta, vel, n_iter, step, config.momentum, beta_lo, cost.b,
                                dt, mp, cp, inv_mu, EXTINCTION_THRESHOLD, buf)
        iterations += n_iter if fail < 0 else fail
        X, lam, grad, parts, bad = _kernels.evaluate(x0, beta, dt, mp, cp, inv_mu, EXTINCTION_THRESHOLD)
        if fail >= 0 or bad >= 0 or not np.isfinite(parts.sum()):
            try:
                last = _make_result(x0, stable, dt, model, cost, config, iterations=iterations, history=history)
            except IntegrationError:
                last = None
            raise OptimizationError(f"descent diverged at iteration {iterations}", last)
        history.append(float(parts.sum()))
        proj = np.where(((beta >= cost.b) & (grad < 0)) | ((beta <= beta_lo) & (grad > 0)), 0.0, grad)
        return X, lam, float(np.max(np.abs(proj))), float(parts.sum())

    # phase 1: descend and move the end time until it settles within a few steps,
    # or until a short cycle of horizons stops lowering the cost
    settled = False
    best_total, stale = np.inf, 0
    for outer in range(config.max_outer):
        X, lam, gmax, total = run(beta, vel, config.inner_steps)
        K = beta.shape[0]
        horizons.append(K)
        recent.append(K)
        if total < best_total * (1.0 - 1e-12):
            best_total, stale = total, 0
        else:
            stale += 1
        if outer % 500 == 0:
            log.debug("outer %d: T=%d cost/N=%.4f |g|max/N=%.3g", outer, K, total / n, gmax / n)
        if not config.adjust_end_time:
            if gmax <= grad_scale:
                settled = True
                break
            continue
        if len(horizons) == horizons.maxlen:
            spread = max(horizons) - min(horizons)
            cycling = (stale >= config.stall_outer and len(recent) == recent.maxlen
                       and max(recent) - min(recent) <= 3 * config.end_time_window)
            if spread <= config.end_time_window or cycling:
                settled = True
                break
        h_end, beta_new = sup_hamiltonian(X[K], -lam[K], model, cost, beta_lo)
        if h_end > 0:
            if K < cap_steps:
                beta = np.append(beta, beta_new)
                vel = np.append(vel, 0.0)
            else:
                capped = True
        elif K > 1:
            h_prev, _ = sup_hamiltonian(X[K - 1], -lam[K - 1], model, cost, beta_lo)
            if h_prev < 0:
                beta = beta[:-1].copy()
                vel = vel[:-1].copy()

    # phase 2: polish each horizon left in the window and keep the cheaper one
    candidates = list(range(min(horizons), max(horizons) + 1)) if config.adjust_end_time else [beta.shape[0]]
    best = None
    for K in candidates:
        b_k = np.concatenate([beta, np.full(max(0, K - beta.shape[0]), beta[-1])])[:K].copy()
        v_k = np.zeros(K)
        for _ in range(config.max_polish // config.inner_steps):
            X, lam, gmax, total = run(b_k, v_k, config.inner_steps)
            if gmax <= grad_scale:
                break
        log.debug("polish T=%d: cost/N=%.6f |g|max/N=%.3g", K, total / n, gmax / n)
        if best is None or total < best[0]:
            best = (total, b_k, gmax <= grad_scale, X, lam)
    _, beta, grad_ok, X, lam = best
    K = beta.shape[0]
    h_end, _ = sup_hamiltonian(X[K], -lam[K], model, cost, beta_lo)
    capped = capped or K >= cap_steps
    return _make_result(x0, beta, dt, model, cost, config, converged=settled and grad_ok, capped=capped,
                        iterations=iterations, hamiltonian_end=h_end, history=history)


def classify_strategy(result: OptimizationResult, tol: float = 0.05) -> str:
    """Qualitative label for an optimised policy.

    With vaccination on, a policy that either holds ``R_e`` in ``[0.8, 1.2]``
    for at least half of the horizon or lets vaccination exhaust the
    susceptible pool, and ends with ``R_e`` below 0.8, is a delay-mitigation.
    Otherwise ``R_e < 1`` throughout is a suppression, and a policy whose
    infection rate comes back to within ``tol`` of ``b`` and ends with fewer
    than half the population susceptible is a mitigation.
    """
    model, cost = result.model, result.cost
    beta = result.policy.beta
    if beta.size == 0:
        return "other"
    re = result.effective_reproduction
    s_end = result.trajectory.final.s
    if model.vacc_rate > 0 and re[-1] < 0.8:
        near_one = np.mean((re >= 0.8) & (re <= 1.2))
        if near_one >= 0.5 or s_end <= 0.01 * model.n_pop:
            return "delay-mitigation"
    if np.all(re < 1.0):
        return "suppression"
    if np.any(beta >= (1 - tol) * cost.b) and s_end < model.n_pop / 2:
        return "mitigation"
    return "other"
