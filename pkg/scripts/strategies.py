"""Locally optimal policies for the built-in scenarios, with and without vaccination.

Writes one per-step CSV per (scenario, vaccination rate, seed) and prints a summary table.
"""

from epicontrol.control import optimize, seed_config, seed_policy
from epicontrol.io import emit, result_header
from epicontrol.scenario import get_scenario

from _common import parser, setup

CASES = [
    ("wa-2020-06", 0.0),
    ("wa-2020-06", 1 / 300),
    ("wa-2020-06", 1 / 250),
    ("us-2021-01", 1 / 300),
]


def main():
    args = setup(parser(__doc__.splitlines()[0]).parse_args())
    print(f"{'scenario':<12}{'o':>8} {'seed':<12}{'label':<18}{'T':>7}{'cost/person':>14}{'sigma':>12}")
    for name, vacc in CASES:
        sc = get_scenario(name).with_vaccination(vacc)
        for tag in ("suppression", "mitigation"):
            res = optimize(sc, seed_policy(tag, sc.model, sc.cost, sc.dt, sc.initial), seed_config(tag))
            o = f"1/{round(1 / vacc)}" if vacc else "0"
            path = args / f"{name}_o{o.replace('/', '-')}_{tag}.csv"
            emit(res, "csv", path, result_header(res, sc.dt, sc.end_time_cap, None, scenario=name, init=tag))
            print(f"{name:<12}{o:>8} {tag:<12}{res.label:<18}{res.end_time:>7g}{res.cost_per_person:>14,.0f}"
                  f"{res.sigma:>12.3g}")


if __name__ == "__main__":
    main()
