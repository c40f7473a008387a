import functools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import settings

from epicontrol.control import optimize, seed_config, seed_policy
from epicontrol.dp import BetaMenu, reduce_parameters, solve_bellman
from epicontrol.model import ModelParams
from epicontrol.scenario import get_scenario

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance and printed at the end of the run
ACCEPTANCE: dict = {}


@functools.lru_cache(maxsize=None)
def optimized(scenario: str, init: str, vacc_rate: float = 0.0, k: float = None, **config):
    sc = get_scenario(scenario)
    if vacc_rate:
        sc = sc.with_vaccination(vacc_rate)
    if k is not None:
        sc = replace(sc, cost=replace(sc.cost, k=k))
    return optimize(sc, seed_policy(init, sc.model, sc.cost, sc.dt, sc.initial), seed_config(init, **config))


@functools.lru_cache(maxsize=None)
def dp_solution(n_pop: float, menu: str = "continuous", vacc_rate: float = 0.0):
    params = reduce_parameters(ModelParams(n_pop=n_pop, vacc_rate=vacc_rate))
    m = BetaMenu.continuous(params.cost.b) if menu == "continuous" else BetaMenu.discrete(params.cost.b)
    values, policy = solve_bellman(params, m)
    return params, values, policy


@pytest.fixture
def wa():
    return get_scenario("wa-2020-06")


@pytest.fixture
def rng():
    return np.random.default_rng(20200601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
