"""Dynamic programming for the two-dimensional (S~, I~) stochastic chain.

States live on the triangular lattice ``S~ = a dk``, ``I~ = j dk`` with
``a + j <= M`` and ``M = N / dk``. Infections move ``(a, j) -> (a - 1, j + 1)``,
exits move ``(a, j) -> (a, j - 1)`` and vaccinations ``(a, j) -> (a - 1, j)``.
Every transition lowers ``a`` or ``j``, so one sweep over increasing ``a`` and,
within it, increasing ``j`` solves the Bellman equation exactly.

The value ``V`` is the negated expected cost to absorption at ``I~ = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .costs import CostParams, control_cost, hospitalization_cost
from .model import DomainError, ModelParams


class BellmanError(RuntimeError):
    def __init__(self, message: str, cell: tuple[int, int]):
        super().__init__(f"{message} at cell {cell}")
        self.cell = cell


@dataclass(frozen=True)
class SimplifiedParams:
    """Rates of the reduced chain.

    lambda_tilde: exit rate of I~ (per day)
    p_h: hospitalized persons per member of I~
    p_d: deaths per member of R~
    """

    lambda_tilde: float
    p_h: float
    p_d: float
    n_pop: float
    vacc_rate: float = 0.0
    cost: CostParams = field(default_factory=CostParams)

    def __post_init__(self):
        if not self.lambda_tilde > 0:
            raise DomainError(f"lambda_tilde must be positive, got {self.lambda_tilde}")
        if not (0 <= self.p_h <= 1 and 0 <= self.p_d <= 1):
            raise DomainError(f"p_h and p_d must lie in [0, 1], got {self.p_h}, {self.p_d}")
        if not self.n_pop > 0 or not self.vacc_rate >= 0:
            raise DomainError("n_pop must be positive and vacc_rate non-negative")

    def to_dict(self) -> dict:
        return {
            "lambda_tilde": self.lambda_tilde, "p_h": self.p_h, "p_d": self.p_d,
            "n_pop": self.n_pop, "vacc_rate": self.vacc_rate, "cost": self.cost.to_dict(),
        }


def reduce_parameters(full: ModelParams, cost: CostParams = CostParams()) -> SimplifiedParams:
    """Collapse E, I into I~ and H, R, D into R~ using quasi-equilibrium ratios."""
    gh = full.hospital_exit_rate
    lam = full.infectious_exit_rate
    if not gh > 0:
        raise DomainError("gamma1 + delta1 must be positive")
    return SimplifiedParams(
        lambda_tilde=lam,
        p_h=full.lambda0 / gh,
        p_d=(full.delta0 + full.lambda0 * full.delta1 / gh) / lam,
        n_pop=full.n_pop,
        vacc_rate=full.vacc_rate,
        cost=cost,
    )


_HARMONIC_SHIFT = 256


def harmonic_number(k):
    """``sum_{j=1}^{k} 1/j``, extended to real ``k >= 0``.

    Uses ``log k + gamma_e + 1/(2k) - 1/(12 k^2) + 1/(120 k^4)`` once ``k`` is
    large enough for it to be accurate to double precision, and the downward
    recurrence below that.
    """
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 0):
        raise DomainError("harmonic_number needs k >= 0")
    m = np.where(k < _HARMONIC_SHIFT, np.ceil(_HARMONIC_SHIFT - k), 0.0)
    big = k + m
    inv2 = 1.0 / (big * big)
    out = np.log(big) + np.euler_gamma + 0.5 / big - inv2 / 12.0 + inv2 * inv2 / 120.0
    for step in range(1, _HARMONIC_SHIFT + 1):
        out = out - np.where(step <= m, 1.0 / (big - step + 1.0), 0.0)
    out = np.where(k == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def harmonic_inflation(i_persons: float, dk: float) -> float:
    """Expected time for ``I~`` to fall by ``dk`` with no new infections, times lambda~."""
    return float(harmonic_number(i_persons) - harmonic_number(i_persons - dk))


def renormalized_exit_rate(i_index, dk: float, lambda_tilde: float):
    """Rate of one lattice step ``I~ -> I~ - dk`` with the exact mean passage time.

    With ``dk = 1`` this is ``lambda~ I~``.
    """
    i_index = np.asarray(i_index)
    if np.any(i_index < 1) or not dk >= 1:
        raise DomainError("i_index must be >= 1 and dk >= 1")
    i_persons = i_index * float(dk)
    if dk == 1:
        out = lambda_tilde * i_persons.astype(np.float64)
    else:
        out = lambda_tilde / (harmonic_number(i_persons) - harmonic_number(i_persons - dk))
    out = np.asarray(out, dtype=np.float64)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BetaMenu:
    values: tuple
    kind: str

    @classmethod
    def continuous(cls, b: float, increment: float = 0.01) -> "BetaMenu":
        n = int(math.floor(b / increment + 1e-9))
        vals = [round(increment * m, 10) for m in range(1, n + 1)]
        if not math.isclose(vals[-1], b, rel_tol=1e-12):
            vals.append(b)
        return cls(tuple(vals), "continuous")

    @classmethod
    def discrete(cls, b: float, r0_levels=(0.5, 1.0, 2.0, 4.0)) -> "BetaMenu":
        """Levels ``b R0 / R0(b)`` where ``b`` itself corresponds to the largest R0."""
        top = max(r0_levels)
        return cls(tuple(sorted(b * r / top for r in r0_levels)), "discrete")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def nearest(self, beta) -> np.ndarray:
        v = self.as_array()
        beta = np.asarray(beta, dtype=np.float64)
        return v[np.argmin(np.abs(beta[..., None] - v), axis=-1)]


@dataclass(frozen=True)
class GridConfig:
    """Lattice and solver settings.

    ``dk=None`` picks 1 for ``N <= 1000`` and ``N / 1000`` otherwise.
    ``vaccine_arrival`` is the rate at which the pre-vaccine layer jumps to the
    vaccinated layer. ``tol`` bounds the Bellman residual per person.
    """

    dk: Optional[float] = None
    cells: int = 1000
    renormalize: bool = True
    vaccine_arrival: float = 0.0
    tol: float = 1e-6
    max_sweeps: int = 50

    def increment(self, n_pop: float) -> float:
        if self.dk is not None:
            if not self.dk >= 1:
                raise DomainError(f"dk must be >= 1, got {self.dk}")
            return float(self.dk)
        return 1.0 if n_pop <= self.cells else n_pop / self.cells


@dataclass(frozen=True)
class ValueGrid:
    """``values[a, j]`` is V at ``S~ = a dk, I~ = j dk``; NaN outside ``a + j <= M``."""

    values: np.ndarray
    dk: float
    n_pop: float
    vaccinated_layer: Optional[np.ndarray] = None
    residual: float = 0.0
    sweeps: int = 1

    @property
    def m(self) -> int:
        return self.values.shape[0] - 1

    @property
    def valid(self) -> np.ndarray:
        a, j = np.indices(self.values.shape)
        return a + j <= self.m


@dataclass(frozen=True)
class FeedbackPolicy:
    """Optimal beta per lattice cell; the vaccinated layer is present when vaccination is on."""

    beta_of: np.ndarray
    menu: BetaMenu
    dk: float
    n_pop: float
    vaccinated_beta_of: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.beta_of.shape[0] - 1

    def cell(self, s: float, i: float) -> tuple[int, int]:
        """Nearest lattice cell; any positive I~ maps to ``j >= 1``."""
        return nearest_cell(s, i, self.dk, self.m)

    def lookup(self, s: float, i: float, vaccinated: bool = False) -> float:
        grid = self.vaccinated_beta_of if vaccinated and self.vaccinated_beta_of is not None else self.beta_of
        a, j = self.cell(s, i)
        return float(grid[a, j])


@njit(cache=True)
def nearest_cell(s, i, dk, m):
    """Lattice cell closest to ``(S~, I~)``, rounding halves up; positive I~ maps to ``j >= 1``."""
    j = int(np.floor(i / dk + 0.5))
    if i > 0 and j < 1:
        j = 1
    if j > m:
        j = m
    a = int(np.floor(s / dk + 0.5))
    if a > m - j:
        a = m - j
    if a < 0:
        a = 0
    return a, j


@njit(cache=True)
def _sweep(V, P, m, s_scale, menu, lmenu, exit_rate, hosp, q_vac, vac_credit, q_arr, V_arr):
    """One ordered pass; returns the first unresolved cell as a*(m+1)+j, or -1."""
    nb = menu.shape[0]
    for a in range(m + 1):
        for j in range(1, m - a + 1):
            qe = exit_rate[j]
            base = qe * V[a, j - 1] - hosp[j]
            qsum = qe
            if a > 0 and q_vac > 0.0:
                base += q_vac * (V[a - 1, j] + vac_credit)
                qsum += q_vac
            if q_arr > 0.0:
                base += q_arr * V_arr[a, j]
                qsum += q_arr
            best = -np.inf
            arg = -1
            if a > 0:
                up = V[a - 1, j + 1]
                coef = a * j * s_scale
                for k in range(nb):
                    qi = menu[k] * coef
                    val = (base + qi * up - lmenu[k]) / (qsum + qi)
                    if val > best:
                        best = val
                        arg = k
            else:
                # no susceptibles: beta only affects the control cost
                for k in range(nb):
                    val = (base - lmenu[k]) / qsum
                    if val > best:
                        best = val
                        arg = k
            if arg < 0 or not np.isfinite(best):
                return a * (m + 1) + j
            V[a, j] = best
            P[a, j] = menu[arg]
    return -1


@njit(cache=True)
def _residual(V, m, s_scale, menu, lmenu, exit_rate, hosp, q_vac, vac_credit, q_arr, V_arr):
    """Largest |max_beta (generator applied to V - running cost)| over interior cells."""
    worst = 0.0
    nb = menu.shape[0]
    for a in range(m + 1):
        for j in range(1, m - a + 1):
            v = V[a, j]
            base = exit_rate[j] * (V[a, j - 1] - v) - hosp[j]
            if a > 0 and q_vac > 0.0:
                base += q_vac * (V[a - 1, j] + vac_credit - v)
            if q_arr > 0.0:
                base += q_arr * (V_arr[a, j] - v)
            best = -np.inf
            for k in range(nb):
                g = base - lmenu[k]
                if a > 0:
                    g += menu[k] * a * j * s_scale * (V[a - 1, j + 1] - v)
                if g > best:
                    best = g
            r = abs(best)
            if r > worst:
                worst = r
    return worst


def _solve_layer(params, menu, dk, m, exit_rate, hosp, q_vac, q_arr, V_arr, grid):
    n = params.n_pop
    cost = params.cost
    mv = menu.as_array()
    lmenu = np.asarray(control_cost(mv, cost, n), dtype=np.float64)
    V = np.full((m + 1, m + 1), np.nan)
    P = np.full((m + 1, m + 1), np.nan)
    a = np.arange(m + 1)
    V[:, 0] = -cost.d * params.p_d * (n - a * dk)
    P[:, 0] = cost.b
    # infection jumps per unit beta: S~ I~ / (N dk) with S~ = a dk, I~ = j dk
    s_scale = dk / n
    vac_credit = cost.d * params.p_d * dk
    V_arr = V_arr if V_arr is not None else np.zeros((1, 1))
    residual = np.inf
    sweeps = 0
    while sweeps < grid.max_sweeps:
        bad = _sweep(V, P, m, s_scale, mv, lmenu, exit_rate, hosp, q_vac, vac_credit, q_arr, V_arr)
        sweeps += 1
        if bad >= 0:
            raise BellmanError("no finite Bellman update", divmod(int(bad), m + 1))
        residual = _residual(V, m, s_scale, mv, lmenu, exit_rate, hosp, q_vac, vac_credit, q_arr, V_arr) / n
        if residual <= grid.tol:
            break
    return V, P, residual, sweeps


def solve_bellman(params: SimplifiedParams, menu: BetaMenu,
                  grid: GridConfig = GridConfig()) -> tuple[ValueGrid, FeedbackPolicy]:
    """Value function and optimal feedback beta on the lattice.

    With ``params.vacc_rate > 0`` the vaccinated layer is solved first and the
    pre-vaccine layer second; the latter reaches the former at rate
    ``grid.vaccine_arrival`` (zero means the vaccine never arrives, so the
    pre-vaccine layer is the vaccine-free problem). A vaccination moves a person
    from S~ to R~ without making them a death, so each vaccination jump is
    credited with the death cost it would otherwise be charged at absorption.
    """
    n = params.n_pop
    dk = grid.increment(n)
    m = int(round(n / dk))
    if m < 1:
        raise DomainError("lattice needs at least one cell per axis")
    j = np.arange(m + 1)
    exit_rate = np.zeros(m + 1)
    if grid.renormalize:
        exit_rate[1:] = renormalized_exit_rate(j[1:], dk, params.lambda_tilde)
    else:
        exit_rate[1:] = params.lambda_tilde * j[1:]
    hosp = np.asarray(hospitalization_cost(params.p_h * j * dk, params.cost, n), dtype=np.float64)
    vac_layer = vac_policy = None
    resid = 0.0
    sweeps = 0
    if params.vacc_rate > 0:
        q_vac = params.vacc_rate * n / dk
        vac_layer, vac_policy, resid, sweeps = _solve_layer(
            params, menu, dk, m, exit_rate, hosp, q_vac, 0.0, None, grid)
    q_arr = grid.vaccine_arrival if vac_layer is not None else 0.0
    V, P, r0, s0 = _solve_layer(params, menu, dk, m, exit_rate, hosp, 0.0, q_arr, vac_layer, grid)
    resid = max(resid, r0)
    sweeps = max(sweeps, s0)
    if resid > grid.tol:
        warnings.warn(f"Bellman residual {resid:.3g} per person above tolerance {grid.tol}")
    values = ValueGrid(V, dk, n, vac_layer, residual=resid, sweeps=sweeps)
    policy = FeedbackPolicy(P, menu, dk, n, vac_policy)
    return values, policy


@dataclass(frozen=True)
class ThresholdCurve:
    """Optimal beta along one lattice axis with the other axis fixed.

    ``crossings`` lists ``(population, beta_before, beta_after)`` where the
    policy changes level, placed at the first cell of the new level.
    """

    fixed_axis: str
    fixed_value: float
    population: np.ndarray
    beta: np.ndarray
    crossings: list


def switching_thresholds(policy: FeedbackPolicy, fixed_axis: str, fixed_value: float,
                         vaccinated: bool = False) -> ThresholdCurve:
    """Slice of the policy with ``S~`` (``fixed_axis='s'``) or ``I~`` (``'i'``) held fixed.

    The free axis runs over ``I~ >= dk`` for an ``s`` slice and over all
    admissible ``S~`` for an ``i`` slice.
    """
    grid = policy.vaccinated_beta_of if vaccinated else policy.beta_of
    if grid is None:
        raise DomainError("policy has no vaccinated layer")
    m, dk = policy.m, policy.dk
    idx = fixed_value / dk
    snapped = int(round(idx))
    if fixed_axis == "i":
        snapped = max(snapped, 1)
    snapped = min(max(snapped, 0), m)
    if not math.isclose(snapped, idx, abs_tol=1e-9):
        warnings.warn(f"{fixed_value} is off the lattice; snapped to {snapped * dk}")
    if fixed_axis == "s":
        free = np.arange(1, m - snapped + 1)
        beta = grid[snapped, free]
    elif fixed_axis == "i":
        free = np.arange(0, m - snapped + 1)
        beta = grid[free, snapped]
    else:
        raise DomainError(f"fixed_axis must be 's' or 'i', got {fixed_axis!r}")
    population = free * dk
    change = np.flatnonzero(beta[1:] != beta[:-1]) + 1
    crossings = [(float(population[c]), float(beta[c - 1]), float(beta[c])) for c in change]
    return ThresholdCurve(fixed_axis, snapped * dk, population, beta.copy(), crossings)
