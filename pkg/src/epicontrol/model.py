"""SEIHRD compartment model: parameters, drift, Euler integration, equilibria."""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace
from typing import Sequence

import numpy as np

from . import _kernels

COMPARTMENTS = ("s", "e", "i", "h", "r", "d")

# e + i + h below this fraction of N counts as an equilibrium for the eigen analysis
EQUILIBRIUM_TOL = 1e-6


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class ModelParams:
    """Epidemiological rates (per day) and population size.

    ``vacc_rate`` is the fraction of the population vaccinated per day; zero
    disables vaccination.
    """

    alpha: float = 0.192
    lambda0: float = 0.008
    gamma0: float = 0.209
    delta0: float = 0.000195
    gamma1: float = 0.1
    delta1: float = 0.013
    n_pop: float = 7_600_000.0
    vacc_rate: float = 0.0

    def __post_init__(self):
        rates = (self.alpha, self.lambda0, self.gamma0, self.delta0, self.gamma1, self.delta1)
        if any(not np.isfinite(r) or r < 0 for r in rates):
            raise DomainError(f"rates must be finite and non-negative: {rates}")
        if not self.n_pop > 0:
            raise DomainError(f"n_pop must be positive, got {self.n_pop}")
        if not self.vacc_rate >= 0:
            raise DomainError(f"vacc_rate must be non-negative, got {self.vacc_rate}")
        if not self.infectious_exit_rate > 0:
            raise DomainError("lambda0 + gamma0 + delta0 must be positive")

    @property
    def infectious_exit_rate(self) -> float:
        return self.lambda0 + self.gamma0 + self.delta0

    @property
    def hospital_exit_rate(self) -> float:
        return self.gamma1 + self.delta1

    def packed(self) -> np.ndarray:
        """Flat float array in the layout the compiled kernels expect."""
        return np.array(
            [self.alpha, self.lambda0, self.gamma0, self.delta0,
             self.gamma1, self.delta1, self.n_pop, self.vacc_rate],
            dtype=np.float64,
        )

    def with_infectious_period(self, days: float) -> "ModelParams":
        """Rescale lambda0, gamma0, delta0 so their sum is ``1/days``, keeping ratios."""
        if not days > 0:
            raise DomainError(f"infectious period must be positive, got {days}")
        scale = (1.0 / days) / self.infectious_exit_rate
        return replace(
            self,
            lambda0=self.lambda0 * scale,
            gamma0=self.gamma0 * scale,
            delta0=self.delta0 * scale,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StateVector:
    s: float
    e: float
    i: float
    h: float
    r: float
    d: float

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "StateVector":
        if len(x) != 6:
            raise DomainError(f"expected 6 components, got {len(x)}")
        return cls(*(float(v) for v in x))

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.e, self.i, self.h, self.r, self.d], dtype=np.float64)

    @property
    def total(self) -> float:
        return self.s + self.e + self.i + self.h + self.r + self.d

    @property
    def active(self) -> float:
        """Exposed + infectious + hospitalized; the quantity the extinction constraint bounds."""
        return self.e + self.i + self.h

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Trajectory:
    """States on the uniform grid ``t_n = n * dt``; ``states`` has shape (K + 1, 6)."""

    states: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.states.shape[0])

    @property
    def final(self) -> StateVector:
        return StateVector.from_array(self.states[-1])

    def __getitem__(self, n: int) -> StateVector:
        return StateVector.from_array(self.states[n])

    def column(self, name: str) -> np.ndarray:
        return self.states[:, COMPARTMENTS.index(name)]


def _as_state_array(state) -> np.ndarray:
    x = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=np.float64)
    if x.shape != (6,):
        raise DomainError(f"state must have 6 components, got shape {x.shape}")
    return x


def drift(state: StateVector, beta: float, params: ModelParams) -> np.ndarray:
    """Right-hand side of the six ODEs, ordered (S, E, I, H, R, D)."""
    x = _as_state_array(state)
    if beta < 0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    if np.any(x < 0):
        raise DomainError(f"state components must be non-negative, got {x}")
    return _kernels.drift(x, float(beta), params.packed())


def integrate(initial: StateVector, beta, params: ModelParams, dt: float = 1.0) -> Trajectory:
    """Explicit Euler integration under the per-step infection rates ``beta``.

    ``beta`` may be an array (one value per step) or anything with a ``beta``
    attribute such as a :class:`~epicontrol.control.ControlPolicy`. Steps that
    would drive a compartment negative raise :class:`IntegrationError` rather
    than being clamped.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    betas = np.ascontiguousarray(getattr(beta, "beta", beta), dtype=np.float64)
    if betas.ndim != 1:
        raise DomainError("beta must be one-dimensional")
    if np.any(betas < 0):
        raise DomainError("beta must be non-negative")
    x0 = _as_state_array(initial)
    if np.any(x0 < 0):
        raise DomainError(f"initial state must be non-negative, got {x0}")
    states, bad = _kernels.forward(x0, betas, float(dt), params.packed())
    if bad >= 0:
        if not np.all(np.isfinite(states[bad + 1])):
            raise IntegrationError("non-finite state", bad)
        raise IntegrationError("negative compartment", bad)
    return Trajectory(states=states, dt=float(dt))


def reproduction_number(beta: float, params: ModelParams) -> float:
    """Basic reproduction number ``beta / (lambda0 + gamma0 + delta0)``."""
    if beta < 0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    return beta / params.infectious_exit_rate


def effective_reproduction_number(beta, s, params: ModelParams):
    """``R0 * S / N``; vectorises over array inputs."""
    s_arr = np.asarray(s, dtype=np.float64)
    if np.any(s_arr < 0) or np.any(s_arr > params.n_pop * (1 + 1e-12)):
        raise DomainError("s must lie in [0, n_pop]")
    out = np.asarray(beta, dtype=np.float64) / params.infectious_exit_rate * s_arr / params.n_pop
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EigenReport:
    eigenvalues: tuple
    stable: bool


def jacobian(state: StateVector, beta: float, params: ModelParams) -> np.ndarray:
    """Jacobian of the vaccination-free drift with respect to (S, E, I, H, R, D)."""
    s, _, i, _, _, _ = _as_state_array(state)
    n = params.n_pop
    kappa = params.infectious_exit_rate
    a = params.alpha
    return np.array([
        [-beta * i / n, 0.0, -beta * s / n, 0.0, 0.0, 0.0],
        [beta * i / n, -a, beta * s / n, 0.0, 0.0, 0.0],
        [0.0, a, -kappa, 0.0, 0.0, 0.0],
        [0.0, 0.0, params.lambda0, -params.hospital_exit_rate, 0.0, 0.0],
        [0.0, 0.0, params.gamma0, params.gamma1, 0.0, 0.0],
        [0.0, 0.0, params.delta0, params.delta1, 0.0, 0.0],
    ])


def jacobian_eigenvalues(state: StateVector, beta: float, params: ModelParams) -> EigenReport:
    """Closed-form eigenvalues of the Jacobian at an equilibrium (E = I = H = 0).

    The characteristic polynomial factors as
    ``eps^3 (gamma1 + delta1 + eps) (eps^2 + (alpha + kappa) eps + alpha (kappa - beta S/N))``
    with ``kappa = lambda0 + gamma0 + delta0``.
    """
    x = _as_state_array(state)
    if x[1] + x[2] + x[3] > EQUILIBRIUM_TOL * params.n_pop:
        raise DomainError("jacobian_eigenvalues requires an equilibrium state (e = i = h = 0)")
    if beta < 0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    a = params.alpha
    kappa = params.infectious_exit_rate
    pressure = beta * x[0] / params.n_pop
    trace = a + kappa
    disc = complex(trace * trace - 4.0 * a * (kappa - pressure))
    root = np.sqrt(disc)
    quad = ((-trace + root) / 2.0, (-trace - root) / 2.0)
    eigs = (0j, 0j, 0j, complex(-params.hospital_exit_rate)) + quad
    # both quadratic roots have negative real part iff kappa > beta S / N
    stable = kappa > pressure and params.hospital_exit_rate > 0
    return EigenReport(eigenvalues=eigs, stable=bool(stable))
