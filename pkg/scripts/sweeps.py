"""One-parameter sweeps of the WA scenario: k, N, initial infections, infectious period, vaccination rate."""

from epicontrol.io import emit
from epicontrol.scenario import get_scenario
from epicontrol.sweep import AXIS_RULES, EXTRA_COLUMNS, SWEEP_COLUMNS, SweepSpec, log_fit_r2, run_sweep

from _common import parser, setup

DEFAULTS = {
    "k": ("50", "70", "80", "90", "100", "150", "200", "250"),
    "n_pop": ("1e6", "1e7", "1e8", "1e9", "7.8e9"),
    "i0_scale": ("0.25", "0.5", "1", "2", "4"),
    "mean_infectious_period": ("3", "4", "4.6", "6", "8"),
    "vacc_rate": ("1/200", "1/250", "1/300", "1/365", "1/500", "1/730"),
}


def main():
    p = parser(__doc__)
    p.add_argument("--axis", choices=sorted(AXIS_RULES), action="append",
                   help="axis to sweep (repeatable; default all)")
    args = p.parse_args()
    out = setup(args)
    base = get_scenario("wa-2020-06")
    columns = SWEEP_COLUMNS + EXTRA_COLUMNS
    for axis in args.axis or list(DEFAULTS):
        table = run_sweep(SweepSpec(axis, DEFAULTS[axis]), base,
                          progress=lambda r: print(f"  {r.axis:g} {r.init:<12}-> {r.strategy:<17}"
                                                   f" T={r.end_time:g} cost/person={r.cost_per_person:,.0f}"))
        rows = [[getattr(r, c) for c in columns] for r in table.rows]
        emit(table, "csv", out / f"sweep_{axis}.csv", {"axis": axis, "derived_rule": table.rule, "seed": None},
             columns, rows)
        print(f"{axis}: {len(table.rows)} runs, {len(table.failed)} failed")
        if axis == "n_pop":
            sup = [r for r in table.rows if r.init == "suppression" and not r.error]
            slope, r2 = log_fit_r2([r.axis for r in sup], [r.end_time for r in sup])
            print(f"  suppression end time vs log N: slope {slope:.2f} days, R^2 = {r2:.5f}")


if __name__ == "__main__":
    main()
