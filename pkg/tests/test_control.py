from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from epicontrol import _kernels
from epicontrol.control import (
    EXTINCTION_THRESHOLD, ControlPolicy, DescentConfig, OptimizationError, _make_result, adjoint_sweep,
    classify_strategy, hamiltonian, maximizing_beta, optimize, policy_gradient, seed_config, seed_policy,
    sigma_from_penalty, sup_hamiltonian, total_cost,
)
from epicontrol.costs import CostParams
from epicontrol.model import ModelParams, StateVector, integrate
from epicontrol.scenario import get_scenario

from conftest import optimized
from oracles import reference_cost


@st.composite
def instances(draw):
    n = draw(st.floats(100.0, 1e4))
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6)))
    w[2] += 0.05
    x0 = w / w.sum() * n
    horizon = draw(st.integers(1, 20))
    beta = np.array(draw(st.lists(st.floats(0.05, 0.87), min_size=horizon, max_size=horizon)))
    vacc = draw(st.sampled_from([0.0, 0.002, 0.01, 0.02]))
    mu = 10 ** draw(st.floats(-3.0, 0.0))
    dt = draw(st.sampled_from([1.0, 0.5]))
    return x0, beta, ModelParams(n_pop=n, vacc_rate=vacc), mu, dt


def _clamp_margin(traj, beta, model, dt):
    s, i = traj.states[:-1, 0], traj.states[:-1, 2]
    rest = s - dt * beta * s * i / model.n_pop
    vmax = model.vacc_rate * model.n_pop * dt
    return np.inf if vmax == 0 else np.min(np.abs(rest - vmax) / model.n_pop)


@given(instances())
def test_gradient_matches_finite_differences(inst):
    x0, beta, model, mu, dt = inst
    cost = CostParams()
    policy = ControlPolicy(beta, dt)
    traj = integrate(StateVector.from_array(x0), policy, model, dt)
    # stay away from the two kinks of the discrete cost
    assume(_clamp_margin(traj, beta, model, dt) > 1e-3)
    assume(abs(traj.final.active - EXTINCTION_THRESHOLD) > 1e-3)
    adj = adjoint_sweep(traj, policy, model, cost, sigma_from_penalty(traj, mu, model.n_pop))
    grad = policy_gradient(traj, adj, policy, model, cost)
    for k in range(beta.size):
        h = 1e-4 * beta[k]

        def j(eps):
            b = beta.copy()
            b[k] += eps
            return reference_cost(x0, b, model, cost, mu, dt)

        fd = float((8 * (j(h) - j(-h)) - (j(2 * h) - j(-2 * h))) / (12 * np.longdouble(h)))
        # rounding of the stencil grows with the size of the penalised cost
        noise = 100 * np.finfo(np.longdouble).eps * float(abs(j(0.0))) / h
        assert abs(grad[k] - fd) <= 1e-5 * abs(fd) + 1e-9 * model.n_pop * cost.k + noise


def test_reference_cost_agrees_with_total_cost(wa):
    beta = np.full(30, 0.3)
    policy = ControlPolicy(beta)
    traj = integrate(wa.initial, policy, wa.model)
    ours, _ = total_cost(traj, policy, wa.model, wa.cost, mu=0.01)
    assert ours == pytest.approx(float(reference_cost(wa.initial.as_array(), beta, wa.model, wa.cost, 0.01, 1.0)),
                                 rel=1e-12)


def test_adjoint_terminal_condition(wa):
    policy = ControlPolicy.constant(0.2, 40)
    traj = integrate(wa.initial, policy, wa.model)
    sigma = sigma_from_penalty(traj, 0.01, wa.model.n_pop)
    adj = adjoint_sweep(traj, policy, wa.model, wa.cost, sigma)
    assert sigma > 0 and adj.sigma == sigma
    np.testing.assert_array_equal(adj.p[-1], [0.0, -sigma, -sigma, -sigma, 0.0, -7e6])


def test_zero_infection_costates():
    model = ModelParams(n_pop=1e4)
    policy = ControlPolicy(np.linspace(0.1, 0.87, 10))
    traj = integrate(StateVector(6000, 0, 0, 0, 3000, 1000), policy, model)
    adj = adjoint_sweep(traj, policy, model, CostParams(), 0.0)
    assert np.all(adj.p[:, 0] == 0) and np.all(adj.p[:, 4] == 0)


@given(instances())
def test_recovered_costate_is_always_zero(inst):
    x0, beta, model, mu, dt = inst
    policy = ControlPolicy(beta, dt)
    traj = integrate(StateVector.from_array(x0), policy, model, dt)
    adj = adjoint_sweep(traj, policy, model, CostParams(), sigma_from_penalty(traj, mu, model.n_pop))
    assert np.all(adj.p[:, 4] == 0)


def test_gradient_vanishes_at_baseline_without_infection():
    model = ModelParams(n_pop=1e4)
    policy = ControlPolicy(np.full(5, 0.87))
    traj = integrate(StateVector(1e4, 0, 0, 0, 0, 0), policy, model)
    adj = adjoint_sweep(traj, policy, model, CostParams(), 0.0)
    assert np.all(policy_gradient(traj, adj, policy, model, CostParams()) == 0)


def test_hamiltonian_at_equilibrium():
    model = ModelParams(n_pop=1e4)
    x = StateVector(9000, 0, 0, 0, 1000, 0)
    assert hamiltonian(x, np.zeros(6), 0.87, model, CostParams()) == 0
    assert sup_hamiltonian(x, np.zeros(6), model, CostParams()) == (0.0, 0.87)


@given(st.floats(0.0, 1.0), st.floats(1e-4, 0.2), st.floats(-1e5, 1e5), st.floats(-1e5, 1e5))
def test_maximizing_beta_matches_grid_search(s_frac, i_frac, p_s, p_e):
    model, cost = ModelParams(n_pop=1e4), CostParams()
    x = np.array([s_frac * 8e3, 500.0, i_frac * 1e4, 100.0, 0.0, 0.0])
    p = np.array([p_s, p_e, 0.0, 0.0, 0.0, 0.0])
    grid = np.linspace(1e-4, cost.b, 200_001)
    values = np.array([hamiltonian(x, p, g, model, cost) for g in grid[::100]])
    coarse = grid[::100][np.argmax(values)]
    fine = grid[(grid >= coarse - 1e-3) & (grid <= coarse + 1e-3)]
    best = fine[np.argmax([hamiltonian(x, p, g, model, cost) for g in fine])]
    beta = maximizing_beta(x, p, model, cost, 1e-4)
    assert abs(beta - best) <= 1e-3
    assert hamiltonian(x, p, beta, model, cost) >= hamiltonian(x, p, best, model, cost) - 1e-9 * model.n_pop


def test_suppression_optimum_self_consistency():
    r = optimized("wa-2020-06", "suppression")
    model, cost, policy, traj = r.model, r.cost, r.policy, r.trajectory
    n = model.n_pop
    assert r.converged and r.label == "suppression"
    assert r.total_cost == pytest.approx(r.cost_breakdown.total, rel=1e-12)
    assert r.end_time == policy.horizon_steps * policy.dt
    assert np.all((policy.beta > 0) & (policy.beta <= cost.b))
    adj = adjoint_sweep(traj, policy, model, cost, r.sigma)
    grad = policy_gradient(traj, adj, policy, model, cost)
    lo = 1e-4 * cost.b
    free = ~(((policy.beta >= cost.b) & (grad < 0)) | ((policy.beta <= lo) & (grad > 0)))
    assert np.max(np.abs(grad[free])) <= 1e-3 * n * cost.k * policy.dt


def test_end_time_is_a_discrete_local_minimum():
    r = optimized("wa-2020-06", "suppression")
    model, cost, policy, traj = r.model, r.cost, r.policy, r.trajectory
    lo = 1e-4 * cost.b
    adj = adjoint_sweep(traj, policy, model, cost, r.sigma)
    h_end, beta_new = sup_hamiltonian(traj.states[-1], adj.p[-1], model, cost, lo)
    assert h_end == pytest.approx(r.hamiltonian_end)

    def j(beta):
        p = ControlPolicy(beta)
        return total_cost(integrate(traj[0], p, model), p, model, cost, r.mu)[0]

    longer = np.append(policy.beta, beta_new)
    # one more step changes the cost by -dt H plus the exact curvature of the quadratic penalty
    x_next = integrate(traj[0], ControlPolicy(longer), model).states[-1]
    step = x_next[1:4].sum() - traj.states[-1, 1:4].sum()
    curvature = model.n_pop / (2 * r.mu) * step ** 2
    assert j(longer) - r.total_cost == pytest.approx(-h_end + curvature, abs=1.0)
    assert j(longer) >= r.total_cost
    assert j(policy.beta[:-1]) >= r.total_cost


def test_descent_decreases_within_momentum_window(wa):
    m, c = wa.model, wa.cost
    beta = seed_policy("suppression", m, c).beta.copy()
    hist = np.empty(3000)
    _kernels.descend(wa.initial.as_array(), beta, np.zeros_like(beta), hist.size, 1e-6 / m.n_pop, 0.9,
                     1e-4 * c.b, c.b, 1.0, m.packed(), c.packed(), 100.0, EXTINCTION_THRESHOLD, hist)
    window = 20
    for i in range(hist.size - window):
        assert hist[i + 1:i + window + 1].min() <= hist[i] * (1 + 1e-9)
    assert hist[-1] < 0.8 * hist[0]


def test_multiplier_complementarity_on_halving_schedule():
    base = optimized("wa-2020-06", "suppression")
    sc = get_scenario("wa-2020-06")
    beta = base.policy.beta
    sigmas, excess = [], []
    for mu in [1e-4, 5e-5, 2.5e-5, 1.25e-5]:
        r = optimize(sc, ControlPolicy(beta), DescentConfig(mu=mu, step=1e-4 * mu, grad_tol=1e-6,
                                                            adjust_end_time=False, max_polish=2_000_000))
        beta = r.policy.beta
        sigmas.append(r.sigma)
        excess.append(r.trajectory.final.active - EXTINCTION_THRESHOLD)
    sigmas, excess = np.array(sigmas), np.array(excess)
    assert np.all(sigmas >= 0)
    assert np.all(np.diff(excess) < 0)
    assert np.all(np.diff(sigmas * excess) < 0)


def test_baseline_no_op():
    sc = get_scenario("wa-2020-06")
    free = replace(sc, cost=CostParams(c0=0, c1=0, d=0))
    r = optimize(free, ControlPolicy.constant(0.3, 120), DescentConfig(constrained=False, adjust_end_time=False))
    assert r.converged
    np.testing.assert_allclose(r.policy.beta, 0.87, atol=2e-3)
    assert r.cost_per_person < 0.01


def test_two_local_optima_differ():
    sup = optimized("wa-2020-06", "suppression")
    mit = optimized("wa-2020-06", "mitigation")
    assert sup.label == "suppression" and mit.label == "mitigation"
    assert mit.total_cost / sup.total_cost > 1.5


def test_constant_baseline_is_never_suppression(wa):
    policy = ControlPolicy.constant(0.87, 400)
    traj = integrate(wa.initial, policy, wa.model)
    total, parts = total_cost(traj, policy, wa.model, wa.cost, 0.01)
    r = _make_result(wa.initial.as_array(), policy.beta, 1.0, wa.model, wa.cost, DescentConfig(), converged=True)
    assert r.total_cost == total
    assert classify_strategy(r) in ("mitigation", "other")


def test_divergence_raises_with_last_stable_iterate():
    sc = get_scenario("wa-2020-06")
    with pytest.raises(OptimizationError) as err:
        optimize(sc, ControlPolicy(np.full(20, 0.5), dt=10.0))
    assert err.value.last_result is None or np.all(np.isfinite(err.value.last_result.policy.beta))


def test_iteration_budget_reports_non_convergence():
    sc = get_scenario("wa-2020-06")
    r = optimize(sc, seed_policy("suppression", sc.model, sc.cost), DescentConfig(max_outer=3, max_polish=20))
    assert not r.converged
    assert np.isfinite(r.total_cost)


def test_cycling_end_time_settles():
    # the end-time rule cycles over several neighbouring horizons here
    r = optimized("wa-2020-06", "suppression", 1 / 500)
    assert r.converged and r.label == "suppression"
    assert r.iterations < 100_000


def test_end_time_cap_is_reported():
    sc = get_scenario("wa-2020-06")
    r = optimize(sc, seed_policy("mitigation", sc.model, sc.cost),
                 seed_config("mitigation", end_time_cap=1600.0, max_outer=200, max_polish=200))
    assert r.capped and r.end_time <= 1600.0


def test_seed_config_and_validation():
    assert seed_config("suppression").step == 1e-6
    assert seed_config("mitigation").step == 1e-5
    assert seed_config("mitigation", step=3e-6).step == 3e-6
    with pytest.raises(ValueError):
        seed_config("other")
    with pytest.raises(ValueError):
        seed_policy("other", ModelParams(), CostParams())
