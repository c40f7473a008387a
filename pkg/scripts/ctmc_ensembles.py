"""Stochastic simulations of the WA scenario under the Bellman feedback policy."""

import numpy as np

from epicontrol.ctmc import ensemble_stats, simulate
from epicontrol.dp import BetaMenu, reduce_parameters, solve_bellman
from epicontrol.io import emit
from epicontrol.model import StateVector
from epicontrol.scenario import get_scenario

from _common import parser, setup


def main():
    p = parser(__doc__)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--paths", type=int, default=5, help="runs whose daily paths are written out")
    p.add_argument("--vacc-rate", type=float, default=0.0)
    args = p.parse_args()
    out = setup(args)
    sc = get_scenario("wa-2020-06").with_vaccination(args.vacc_rate)
    _, policy = solve_bellman(reduce_parameters(sc.model, sc.cost), BetaMenu.continuous(sc.cost.b))
    x0 = StateVector.from_array(np.round(sc.initial.as_array()))
    runs = [simulate(x0, policy, sc.model, seed=s, cost=sc.cost, record_events=False) for s in range(args.runs)]
    for run in runs[:args.paths]:
        rows = [[t, *x, c] for t, x, c in zip(run.sample_times, run.sample_states.tolist(), run.sample_cost)]
        emit(run, "csv", out / f"ctmc_path_seed{run.seed}.csv",
             {"seed": run.seed, "end_time": run.end_time, "realized_cost": run.realized_cost, **run.metadata},
             ["t", "S", "E", "I", "H", "R", "D", "cumulative_cost"], rows)
    stats = ensemble_stats(runs)
    emit(stats, "json", out / "ctmc_ensemble.json", {"seed": 0, "runs": args.runs},
         document={"summary": stats.to_dict(), "end_times": [r.end_time for r in runs],
                   "costs": [r.realized_cost for r in runs]})
    n = sc.model.n_pop
    print(f"{args.runs} runs: end time {stats.end_time_mean:.1f} +/- {stats.end_time_std:.1f} days, "
          f"cost/person {stats.cost_mean / n:,.0f} +/- {stats.cost_std / n:,.0f}")


if __name__ == "__main__":
    main()
