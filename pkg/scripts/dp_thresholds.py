"""Bellman solutions of the reduced chain and switching-threshold slices at U.S. scale."""

import numpy as np

from epicontrol.dp import BetaMenu, GridConfig, reduce_parameters, solve_bellman, switching_thresholds
from epicontrol.io import emit
from epicontrol.scenario import get_scenario

from _common import parser, setup


def main():
    p = parser(__doc__)
    p.add_argument("--scenario", default="us-2021-01")
    p.add_argument("--fix-s", type=float, default=294e6)
    p.add_argument("--fix-i", type=float, default=6.5e6)
    args = p.parse_args()
    out = setup(args)
    sc = get_scenario(args.scenario)
    for vacc in (0.0, 1 / 300):
        params = reduce_parameters(sc.with_vaccination(vacc).model, sc.cost)
        policies = {}
        for kind in ("continuous", "discrete"):
            menu = BetaMenu.continuous(sc.cost.b) if kind == "continuous" else BetaMenu.discrete(sc.cost.b)
            values, policy = solve_bellman(params, menu, GridConfig())
            policies[kind] = policy
            layer = vacc > 0
            for axis, value in (("s", args.fix_s), ("i", args.fix_i)):
                curve = switching_thresholds(policy, axis, value, vaccinated=layer)
                tag = f"{kind}_{'vacc' if layer else 'novacc'}_{axis}"
                emit(curve, "csv", out / f"thresholds_{tag}.csv",
                     {"fixed_axis": axis, "fixed_value": curve.fixed_value, "menu": kind, "seed": None,
                      "crossings": [list(c) for c in curve.crossings]},
                     ["population", "beta"], [[x, b] for x, b in zip(curve.population, curve.beta)])
                print(f"{tag}: {len(curve.crossings)} level changes, residual {values.residual:.2g}")
        cont, disc = policies["continuous"], policies["discrete"]
        grid = cont.vaccinated_beta_of if vacc else cont.beta_of
        dgrid = disc.vaccinated_beta_of if vacc else disc.beta_of
        cells = np.isfinite(grid)
        cells[:, 0] = False
        share = np.mean(disc.menu.nearest(grid[cells]) == dgrid[cells])
        print(f"o={vacc:.4g}: discrete policy equals rounded continuous policy at {share:.1%} of cells")


if __name__ == "__main__":
    main()
