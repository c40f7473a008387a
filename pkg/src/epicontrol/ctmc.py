"""Exact stochastic simulation (Gillespie) of the SEIHRD and reduced chains.

Uniform variates come from a seeded ``numpy.random.Generator`` (PCG64) in
buffers; jump times use the inverse CDF ``-log(1 - u) / rate``. The compiled
loops return when a buffer runs dry and are resumed with a fresh one, so a run
is a deterministic function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numba import njit

from .costs import CostParams
from .dp import FeedbackPolicy, SimplifiedParams, nearest_cell
from .model import COMPARTMENTS, DomainError, ModelParams, StateVector

EVENT_KINDS = (
    "infection", "incubation", "recovery-I", "hospitalization",
    "death-I", "recovery-H", "death-H", "vaccination",
)
RNG_ALGORITHM = "PCG64 uniforms, inverse-CDF exponential jump times"

# compartment deltas per event kind, columns (S, E, I, H, R, D)
_DELTAS = np.array([
    [-1, 1, 0, 0, 0, 0],
    [0, -1, 1, 0, 0, 0],
    [0, 0, -1, 0, 1, 0],
    [0, 0, -1, 1, 0, 0],
    [0, 0, -1, 0, 0, 1],
    [0, 0, 0, -1, 1, 0],
    [0, 0, 0, -1, 0, 1],
    [-1, 0, 0, 0, 1, 0],
], dtype=np.int64)

_DONE, _NEED_UNIFORMS, _EVENTS_FULL, _SAMPLES_FULL, _TIME_LIMIT, _STUCK = range(6)
_CHUNK = 1 << 16


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class JumpEvent:
    time: float
    kind: str
    state_after: StateVector


@dataclass
class SimulationRun:
    """One realisation up to extinction of E + I + H.

    ``sample_times``/``sample_states``/``sample_cost`` hold the path on a
    uniform grid, with the cumulative cost ``int_0^t (L + F) ds + d D_t``; the
    last sample is at ``end_time``. The event log is kept only when requested.
    """

    realized_cost: float
    end_time: float
    seed: int
    n_events: int
    sample_times: np.ndarray
    sample_states: np.ndarray
    sample_cost: np.ndarray
    event_times: Optional[np.ndarray] = None
    event_kinds: Optional[np.ndarray] = None
    event_states: Optional[np.ndarray] = None
    event_beta: Optional[np.ndarray] = None
    event_cost: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def events(self) -> list[JumpEvent]:
        if self.event_times is None:
            raise ValueError("run was simulated without an event log")
        return [
            JumpEvent(float(t), EVENT_KINDS[k], StateVector.from_array(x))
            for t, k, x in zip(self.event_times, self.event_kinds, self.event_states)
        ]

    def cost_at(self, t) -> np.ndarray:
        """Cumulative cost at times ``t``; constant after the end time."""
        idx = np.searchsorted(self.sample_times, np.asarray(t, dtype=np.float64), side="right") - 1
        return self.sample_cost[np.clip(idx, 0, None)]


@njit(cache=True)
def _full_kernel(x, fs, ic, u, mp, cp, beta_const, pol, dk, m, use_policy,
                 record, ev_t, ev_k, ev_x, ev_b, ev_c, samp_dt, sp_t, sp_x, sp_c, t_max):
    """Advance the SEIHRD chain in place.

    ``fs = [t, running_cost]``, ``ic = [upos, n_events, n_logged, n_samples]``.
    """
    alpha, lam0, gam0, del0, gam1, del1, n, o = mp[0], mp[1], mp[2], mp[3], mp[4], mp[5], mp[6], mp[7]
    kk, b, c0, c1, d = cp[0], cp[1], cp[2], cp[3], cp[4]
    rates = np.empty(8)
    nu = u.shape[0]
    while True:
        s, e, i, h = x[0], x[1], x[2], x[3]
        t = fs[0]
        if e + i + h == 0:
            return _DONE
        if t >= t_max:
            return _TIME_LIMIT
        if ic[0] + 2 > nu:
            return _NEED_UNIFORMS
        if record and ic[2] >= ev_t.shape[0]:
            return _EVENTS_FULL
        if use_policy:
            a, j = nearest_cell(float(s), float(e + i), dk, m)
            beta = pol[a, j]
        else:
            beta = beta_const
        rates[0] = beta * s * i / n
        rates[1] = alpha * e
        rates[2] = gam0 * i
        rates[3] = lam0 * i
        rates[4] = del0 * i
        rates[5] = gam1 * h
        rates[6] = del1 * h
        rates[7] = o * n if s > 0 else 0.0
        total = 0.0
        for r in range(8):
            total += rates[r]
        if not total > 0.0:
            return _STUCK
        tau = -np.log(1.0 - u[ic[0]]) / total
        t_next = t + tau
        q = beta / b
        run_rate = n * kk * (-np.log(q) + q - 1.0) + c0 * h + c1 / n * h * h
        # grid samples that fall before this jump see the current state
        while sp_t[ic[3]] < t_next and sp_t[ic[3]] < t_max:
            k = ic[3]
            if k + 1 >= sp_t.shape[0]:
                return _SAMPLES_FULL
            sp_x[k, :] = x
            sp_c[k] = fs[1] + run_rate * (sp_t[k] - t) + d * x[5]
            ic[3] = k + 1
            sp_t[k + 1] = sp_t[k] + samp_dt
        target = u[ic[0] + 1] * total
        ic[0] += 2
        kind = 7
        acc = 0.0
        for r in range(8):
            acc += rates[r]
            if target < acc:
                kind = r
                break
        while rates[kind] == 0.0:
            kind -= 1
        for c in range(6):
            x[c] += _DELTAS[kind, c]
        fs[1] += run_rate * tau
        fs[0] = t_next
        ic[1] += 1
        if record:
            k = ic[2]
            ev_t[k] = t_next
            ev_k[k] = kind
            ev_x[k, :] = x
            ev_b[k] = beta
            ev_c[k] = fs[1] + d * x[5]
            ic[2] = k + 1


def _integer_state(initial, n_pop: float) -> np.ndarray:
    x = initial.as_array() if isinstance(initial, StateVector) else np.asarray(initial, dtype=np.float64)
    if x.shape != (6,):
        raise DomainError("initial state must have 6 components")
    if np.any(x < 0) or np.any(x != np.round(x)):
        raise DomainError(f"initial state must be non-negative integers, got {x}")
    if x.sum() != round(n_pop):
        raise DomainError(f"initial state sums to {x.sum()}, expected {n_pop}")
    return x.astype(np.int64)


def simulate(initial, policy: Union[float, FeedbackPolicy], params: ModelParams, seed: int,
             cost: CostParams = CostParams(), record_events: bool = True, sample_dt: float = 1.0,
             t_max: float = 1e6) -> SimulationRun:
    """Gillespie simulation of the full chain until ``E + I + H = 0``.

    ``policy`` is a constant infection rate or a :class:`FeedbackPolicy` looked up
    at the nearest lattice cell of ``(S, E + I)``; with vaccination on, the
    policy's vaccinated layer is used when present.
    """
    x = _integer_state(initial, params.n_pop)
    if isinstance(policy, FeedbackPolicy):
        grid = policy.vaccinated_beta_of if params.vacc_rate > 0 and policy.vaccinated_beta_of is not None \
            else policy.beta_of
        pol, dk, m, use_policy, beta_const = np.ascontiguousarray(grid), float(policy.dk), policy.m, True, cost.b
    else:
        beta_const = float(policy)
        if not 0 < beta_const:
            raise DomainError(f"constant beta must be positive, got {beta_const}")
        pol, dk, m, use_policy = np.zeros((1, 1)), 1.0, 0, False
    if not sample_dt > 0:
        raise DomainError("sample_dt must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    mp, cp = params.packed(), cost.packed()
    fs = np.zeros(2)
    ic = np.zeros(4, dtype=np.int64)
    u = rng.random(_CHUNK)
    cap_ev = _CHUNK if record_events else 0
    ev_t, ev_k = np.empty(cap_ev), np.empty(cap_ev, dtype=np.int64)
    ev_x, ev_b, ev_c = np.empty((cap_ev, 6), dtype=np.int64), np.empty(cap_ev), np.empty(cap_ev)
    cap_sp = 1024
    sp_t, sp_x, sp_c = np.zeros(cap_sp), np.empty((cap_sp, 6), dtype=np.int64), np.empty(cap_sp)
    while True:
        status = _full_kernel(x, fs, ic, u, mp, cp, beta_const, pol, dk, m, use_policy, record_events,
                              ev_t, ev_k, ev_x, ev_b, ev_c, float(sample_dt), sp_t, sp_x, sp_c, float(t_max))
        if status == _DONE:
            break
        if status == _NEED_UNIFORMS:
            u = np.concatenate([u[ic[0]:], rng.random(_CHUNK)])
            ic[0] = 0
        elif status == _EVENTS_FULL:
            grow = ev_t.shape[0]
            ev_t, ev_b, ev_c = (np.concatenate([a, np.empty(grow)]) for a in (ev_t, ev_b, ev_c))
            ev_k = np.concatenate([ev_k, np.empty(grow, dtype=np.int64)])
            ev_x = np.concatenate([ev_x, np.empty((grow, 6), dtype=np.int64)])
        elif status == _SAMPLES_FULL:
            grow = sp_t.shape[0]
            sp_t = np.concatenate([sp_t, np.zeros(grow)])
            sp_x = np.concatenate([sp_x, np.empty((grow, 6), dtype=np.int64)])
            sp_c = np.concatenate([sp_c, np.empty(grow)])
        elif status == _TIME_LIMIT:
            raise SimulationError(f"no extinction before t_max={t_max} (seed {seed})")
        else:
            raise SimulationError(f"zero total rate with E+I+H>0 at state {x} (seed {seed})")
    end_time = float(fs[0])
    realized = float(fs[1] + cost.d * x[5])
    k = int(ic[3])
    times = np.append(sp_t[:k], end_time)
    states = np.vstack([sp_x[:k], x[None, :]])
    cum = np.append(sp_c[:k], realized)
    nl = int(ic[2])
    return SimulationRun(
        realized_cost=realized, end_time=end_time, seed=int(seed), n_events=int(ic[1]),
        sample_times=times, sample_states=states, sample_cost=cum,
        event_times=ev_t[:nl].copy() if record_events else None,
        event_kinds=ev_k[:nl].copy() if record_events else None,
        event_states=ev_x[:nl].copy() if record_events else None,
        event_beta=ev_b[:nl].copy() if record_events else None,
        event_cost=ev_c[:nl].copy() if record_events else None,
        metadata={"rng": RNG_ALGORITHM, "sample_dt": sample_dt, "compartments": COMPARTMENTS},
    )


@njit(cache=True)
def _reduced_kernel(st, ic, u, out_cost, out_time, a0, j0, pol, dk, m, n, lam, p_h, q_vac, cp, p_d):
    """Roll out the reduced chain on integer persons.

    ``st = [S~, I~, vaccinated, t, cost]`` carries a rollout across calls and
    ``ic = [upos, finished, in_progress]``.
    """
    kk, b, c0, c1, d = cp[0], cp[1], cp[2], cp[3], cp[4]
    nu = u.shape[0]
    n_roll = out_cost.shape[0]
    while ic[1] < n_roll:
        if ic[2] == 0:
            st[0], st[1], st[2], st[3], st[4] = a0, j0, 0.0, 0.0, 0.0
            ic[2] = 1
        s, i = st[0], st[1]
        if i <= 0:
            out_cost[ic[1]] = st[4] + d * p_d * (n - s - st[2])
            out_time[ic[1]] = st[3]
            ic[1] += 1
            ic[2] = 0
            continue
        if ic[0] + 2 > nu:
            return _NEED_UNIFORMS
        a, j = nearest_cell(s, i, dk, m)
        beta = pol[a, j]
        r_inf = beta * s * i / n
        r_exit = lam * i
        r_vac = q_vac if s > 0 else 0.0
        total = r_inf + r_exit + r_vac
        tau = -np.log(1.0 - u[ic[0]]) / total
        target = u[ic[0] + 1] * total
        ic[0] += 2
        q = beta / b
        hh = p_h * i
        st[4] += (n * kk * (-np.log(q) + q - 1.0) + c0 * hh + c1 / n * hh * hh) * tau
        st[3] += tau
        if target < r_inf:
            st[0] = s - 1.0
            st[1] = i + 1.0
        elif target < r_inf + r_exit or r_vac == 0.0:
            st[1] = i - 1.0
        else:
            st[0] = s - 1.0
            st[2] += 1.0
    return _DONE


def simulate_reduced(params: SimplifiedParams, policy: FeedbackPolicy, s0: int, i0: int,
                     n_rollouts: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Realised costs and extinction times of the reduced chain from ``(s0, i0)``.

    Cost is ``int (L(beta) + F(p_h I~)) dt + d p_d (N - S~_T - vaccinated)``, the
    quantity whose negated mean the Bellman value estimates.
    """
    if s0 < 0 or i0 < 0 or s0 + i0 > params.n_pop:
        raise DomainError("initial (s0, i0) outside the population")
    vaccinated = params.vacc_rate > 0 and policy.vaccinated_beta_of is not None
    grid = policy.vaccinated_beta_of if vaccinated else policy.beta_of
    rng = np.random.Generator(np.random.PCG64(seed))
    st = np.zeros(5)
    ic = np.zeros(3, dtype=np.int64)
    costs, times = np.empty(n_rollouts), np.empty(n_rollouts)
    u = rng.random(_CHUNK)
    q_vac = params.vacc_rate * params.n_pop
    while True:
        status = _reduced_kernel(st, ic, u, costs, times, float(s0), float(i0), np.ascontiguousarray(grid),
                                 float(policy.dk), policy.m, params.n_pop, params.lambda_tilde, params.p_h,
                                 q_vac, params.cost.packed(), params.p_d)
        if status == _DONE:
            return costs, times
        u = np.concatenate([u[ic[0]:], rng.random(_CHUNK)])
        ic[0] = 0


@dataclass(frozen=True)
class EnsembleStats:
    n_runs: int
    cost_mean: float
    cost_std: float
    end_time_mean: float
    end_time_std: float
    end_time_se: float
    cost_quantiles: dict
    end_time_quantiles: dict

    def to_dict(self) -> dict:
        return {
            "n_runs": self.n_runs, "cost_mean": self.cost_mean, "cost_std": self.cost_std,
            "end_time_mean": self.end_time_mean, "end_time_std": self.end_time_std,
            "end_time_se": self.end_time_se,
            "cost_quantiles": {str(k): v for k, v in self.cost_quantiles.items()},
            "end_time_quantiles": {str(k): v for k, v in self.end_time_quantiles.items()},
        }


def nearest_rank(values, q: float) -> float:
    """Smallest sample with at least a fraction ``q`` of the samples at or below it."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("nearest_rank of an empty sample")
    if not 0 <= q <= 1:
        raise DomainError(f"quantile must lie in [0, 1], got {q}")
    rank = max(1, int(np.ceil(q * v.size)))
    return float(v[rank - 1])


def ensemble_stats(runs: Sequence[SimulationRun], quantiles=(0.05, 0.25, 0.5, 0.75, 0.95)) -> EnsembleStats:
    if len(runs) == 0:
        raise ValueError("ensemble_stats needs at least one run")
    cost = np.array([r.realized_cost for r in runs])
    end = np.array([r.end_time for r in runs])
    ddof = 1 if len(runs) > 1 else 0
    return EnsembleStats(
        n_runs=len(runs),
        cost_mean=float(cost.mean()), cost_std=float(cost.std(ddof=ddof)),
        end_time_mean=float(end.mean()), end_time_std=float(end.std(ddof=ddof)),
        end_time_se=float(end.std(ddof=ddof) / np.sqrt(len(runs))),
        cost_quantiles={q: nearest_rank(cost, q) for q in quantiles},
        end_time_quantiles={q: nearest_rank(end, q) for q in quantiles},
    )
