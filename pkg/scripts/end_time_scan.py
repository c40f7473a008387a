"""Suppression cost of the WA scenario with the horizon held fixed at a range of end times.

Shows where the discrete cost is minimised and the sign of the maximised
Hamiltonian at each end time.
"""

import numpy as np

from epicontrol.control import ControlPolicy, optimize, seed_config, seed_policy
from epicontrol.scenario import get_scenario

from _common import parser, setup


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--horizons", default="78,80,82,83,84,86,88,91,94")
    args = p.parse_args()
    setup(args)
    sc = get_scenario("wa-2020-06")
    n = sc.model.n_pop
    base = optimize(sc, seed_policy("suppression", sc.model, sc.cost, sc.dt, sc.initial), seed_config("suppression"))
    print(f"free end time: T={base.end_time:g}, cost/person {base.cost_per_person:,.2f}")
    print(f"{'T':>5}{'cost/person':>14}{'sup H / N':>12}{'sigma':>12}")
    for T in (int(v) for v in args.horizons.split(",")):
        b = base.policy.beta
        b = np.concatenate([b, np.full(max(0, T - b.size), b[-1])])[:T]
        r = optimize(sc, ControlPolicy(b), seed_config("suppression", adjust_end_time=False, grad_tol=1e-5,
                                                        max_outer=100_000))
        print(f"{T:>5}{r.cost_per_person:>14,.2f}{r.hamiltonian_end / n:>12.2f}{r.sigma:>12.3g}")


if __name__ == "__main__":
    main()
