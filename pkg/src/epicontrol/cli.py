"""Command-line entry point: ``epicontrol <subcommand> [options]``.

Exit status is 0 on success, 1 when a run fails and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .control import OptimizationError, optimize, seed_config, seed_policy
from .ctmc import EVENT_KINDS, RNG_ALGORITHM, SimulationError, ensemble_stats, simulate
from .dp import BellmanError, BetaMenu, GridConfig, reduce_parameters, solve_bellman, switching_thresholds
from .io import OutputError, emit
from .model import DomainError, IntegrationError, StateVector, jacobian_eigenvalues
from .scenario import ConfigError, get_scenario
from .sweep import AXIS_RULES, EXTRA_COLUMNS, SWEEP_COLUMNS, SweepSpec, parse_number, run_sweep

log = logging.getLogger("epicontrol")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(2)


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common options")
    g.add_argument("--scenario", default="wa-2020-06", help="built-in name or JSON scenario file")
    g.add_argument("--out", default="-", help="output path ('-' for stdout)")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dt", type=float, default=None, help="time step in days (overrides the scenario)")
    g.add_argument("--mu", type=float, default=None, help="penalty parameter")
    g.add_argument("--cap", type=float, default=None, help="end-time cap in days (overrides the scenario)")
    g.add_argument("--vacc-rate", default=None, help="vaccination rate o, e.g. 1/300")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epicontrol", description="Optimal infection-rate control for the SEIHRD model.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("optimize", help="open-loop optimum from one initialization")
    _common(p)
    p.add_argument("--init", choices=("suppression", "mitigation"), default="suppression")
    p.add_argument("--step", type=float, default=None, help="descent step, multiplied by 1/N")
    p.add_argument("--k", type=float, default=None, help="control cost coefficient")

    p = sub.add_parser("sweep", help="optimizer runs over one parameter axis")
    _common(p)
    p.add_argument("--axis", required=True, choices=sorted(AXIS_RULES))
    p.add_argument("--values", required=True, help="comma-separated values; fractions allowed")
    p.add_argument("--seeds", default="suppression,mitigation")
    p.add_argument("--step", type=float, default=None, help="descent step for every seed, multiplied by 1/N")

    p = sub.add_parser("dp-solve", help="Bellman value function and feedback policy")
    _common(p)
    p.add_argument("--menu", choices=("continuous", "discrete"), default="continuous")
    p.add_argument("--dk", type=float, default=None)
    p.add_argument("--arrival", type=float, default=0.0, help="vaccine arrival rate for the pre-vaccine layer")

    p = sub.add_parser("simulate", help="Gillespie runs of the full chain")
    _common(p)
    p.add_argument("--policy", choices=("dp", "constant"), default="dp")
    p.add_argument("--beta", type=float, default=None, help="constant infection rate (default b)")
    p.add_argument("--menu", choices=("continuous", "discrete"), default="continuous")
    p.add_argument("--runs", type=int, default=1)

    p = sub.add_parser("thresholds", help="policy slice with S~ or I~ fixed")
    _common(p)
    p.add_argument("--menu", choices=("continuous", "discrete"), default="continuous")
    p.add_argument("--fix", choices=("s", "i"), required=True)
    p.add_argument("--value", type=float, required=True, help="persons on the fixed axis")
    p.add_argument("--vaccinated", action="store_true", help="slice the vaccinated layer")

    p = sub.add_parser("eigen", help="Jacobian eigenvalues at an equilibrium")
    _common(p)
    p.add_argument("--beta", type=float, default=None, help="infection rate (default b)")
    p.add_argument("--s", type=float, default=None, help="susceptibles at the equilibrium (default N)")
    return parser


def _scenario(args):
    sc = get_scenario(args.scenario)
    if args.dt is not None:
        if not args.dt > 0:
            raise ConfigError("--dt must be positive")
        sc = replace(sc, dt=args.dt)
    if args.cap is not None:
        if not args.cap > 0:
            raise ConfigError("--cap must be positive")
        sc = replace(sc, end_time_cap=args.cap)
    if args.vacc_rate is not None:
        sc = sc.with_vaccination(parse_number(args.vacc_rate))
    if getattr(args, "k", None) is not None:
        sc = replace(sc, cost=replace(sc.cost, k=args.k))
    return sc


def _base_header(args, sc) -> dict:
    return {
        "command": args.command,
        "scenario": sc.label,
        "dt": sc.dt,
        "mu": args.mu if args.mu is not None else 0.01,
        "end_time_cap": sc.end_time_cap,
        "seed": args.seed,
    }


def _config_overrides(args) -> dict:
    out = {}
    if args.mu is not None:
        if not args.mu > 0:
            raise ConfigError("--mu must be positive")
        out["mu"] = args.mu
    if getattr(args, "step", None) is not None:
        out["step"] = args.step
    return out


def cmd_optimize(args) -> int:
    sc = _scenario(args)
    config = seed_config(args.init, **_config_overrides(args))
    res = optimize(sc, seed_policy(args.init, sc.model, sc.cost, sc.dt, sc.initial), config)
    header = _base_header(args, sc)
    header.update(init=args.init, step=config.step, label=res.label, end_time=res.end_time,
                  total_cost=res.total_cost, cost_per_person=res.cost_per_person, sigma=res.sigma,
                  converged=res.converged, capped=res.capped)
    emit(res, args.format, args.out, header)
    log.info("%s: T=%g cost/person=%.2f converged=%s", res.label, res.end_time, res.cost_per_person, res.converged)
    return 0


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    seeds = tuple(s.strip() for s in args.seeds.split(",") if s.strip())
    spec = SweepSpec(args.axis, tuple(v for v in args.values.split(",") if v.strip()), seeds,
                     _config_overrides(args))
    table = run_sweep(spec, sc, progress=lambda r: log.info("%s", r))
    header = _base_header(args, sc)
    header.update(axis=args.axis, derived_rule=table.rule)
    columns = SWEEP_COLUMNS + EXTRA_COLUMNS
    rows = [[getattr(r, c) for c in columns] for r in table.rows]
    emit(table, args.format, args.out, header, columns, rows,
         document={"columns": list(columns), "rows": rows})
    return 1 if table.failed else 0


def _solve(args, sc):
    params = reduce_parameters(sc.model, sc.cost)
    menu = BetaMenu.continuous(sc.cost.b) if args.menu == "continuous" else BetaMenu.discrete(sc.cost.b)
    grid = GridConfig(dk=getattr(args, "dk", None), vaccine_arrival=getattr(args, "arrival", 0.0))
    values, policy = solve_bellman(params, menu, grid)
    return params, values, policy


def cmd_dp_solve(args) -> int:
    sc = _scenario(args)
    params, values, policy = _solve(args, sc)
    header = _base_header(args, sc)
    header.update(dk=values.dk, n_pop=values.n_pop, menu=args.menu, menu_values=list(policy.menu.values),
                  params=params.to_dict(), residual=values.residual, sweeps=values.sweeps)
    a, j = np.nonzero(values.valid)
    columns = ["s_index", "i_index", "V", "beta"]
    layers = [("", values.values, policy.beta_of)]
    if values.vaccinated_layer is not None:
        columns.append("layer")
        layers = [("unvaccinated", values.values, policy.beta_of),
                  ("vaccinated", values.vaccinated_layer, policy.vaccinated_beta_of)]
    rows = []
    for name, v, b in layers:
        for ai, ji in zip(a, j):
            row = [int(ai), int(ji), float(v[ai, ji]), float(b[ai, ji])]
            rows.append(row + [name] if name else row)
    document = {"values": values.values, "beta": policy.beta_of}
    if values.vaccinated_layer is not None:
        document.update(vaccinated_values=values.vaccinated_layer, vaccinated_beta=policy.vaccinated_beta_of)
    emit(values, args.format, args.out, header, columns, rows, document=document)
    return 0


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")
    if args.policy == "dp":
        _, _, policy = _solve(args, sc)
    else:
        policy = args.beta if args.beta is not None else sc.cost.b
    initial = StateVector.from_array(np.round(sc.initial.as_array()))
    if initial.total != round(sc.model.n_pop):
        raise ConfigError("simulation needs an integer initial state summing to N")
    header = _base_header(args, sc)
    header.update(policy=args.policy, rng=RNG_ALGORITHM, runs=args.runs)
    if args.runs == 1:
        run = simulate(initial, policy, sc.model, args.seed, sc.cost)
        header.update(end_time=run.end_time, realized_cost=run.realized_cost, n_events=run.n_events)
        columns = ["time", "kind", "S", "E", "I", "H", "R", "D", "beta", "cumulative_cost"]
        rows = [[t, EVENT_KINDS[k], *x, b, c] for t, k, x, b, c in
                zip(run.event_times, run.event_kinds, run.event_states.tolist(), run.event_beta, run.event_cost)]
        document = {"columns": columns, "rows": rows}
        emit(run, args.format, args.out, header, columns, rows, document=document)
        return 0
    runs = [simulate(initial, policy, sc.model, args.seed + r, sc.cost, record_events=False)
            for r in range(args.runs)]
    stats = ensemble_stats(runs)
    header.update(summary=stats.to_dict())
    columns = ["seed", "realized_cost", "end_time", "n_events"]
    rows = [[r.seed, r.realized_cost, r.end_time, r.n_events] for r in runs]
    emit(stats, args.format, args.out, header, columns, rows, document={"summary": stats.to_dict(), "runs": rows})
    return 0


def cmd_thresholds(args) -> int:
    sc = _scenario(args)
    _, _, policy = _solve(args, sc)
    if args.vaccinated and policy.vaccinated_beta_of is None:
        raise ConfigError("--vaccinated needs --vacc-rate > 0")
    curve = switching_thresholds(policy, args.fix, args.value, vaccinated=args.vaccinated)
    header = _base_header(args, sc)
    header.update(fixed_axis=curve.fixed_axis, fixed_value=curve.fixed_value, menu=args.menu,
                  crossings=[list(c) for c in curve.crossings])
    rows = [[p, b] for p, b in zip(curve.population, curve.beta)]
    emit(curve, args.format, args.out, header, ["population", "beta"], rows,
         document={"population": curve.population, "beta": curve.beta, "crossings": curve.crossings})
    return 0


def cmd_eigen(args) -> int:
    sc = _scenario(args)
    n = sc.model.n_pop
    s = args.s if args.s is not None else n
    if not 0 <= s <= n:
        raise ConfigError("--s must lie in [0, N]")
    beta = args.beta if args.beta is not None else sc.cost.b
    report = jacobian_eigenvalues(StateVector(s, 0, 0, 0, n - s, 0), beta, sc.model)
    header = _base_header(args, sc)
    header.update(beta=beta, s=s, stable=report.stable)
    rows = [[e.real, e.imag] for e in report.eigenvalues]
    emit(report, args.format, args.out, header, ["real", "imag"], rows,
         document={"eigenvalues": rows, "stable": report.stable})
    return 0


COMMANDS = {
    "optimize": cmd_optimize, "sweep": cmd_sweep, "dp-solve": cmd_dp_solve,
    "simulate": cmd_simulate, "thresholds": cmd_thresholds, "eigen": cmd_eigen,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"epicontrol: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OptimizationError, IntegrationError, SimulationError, BellmanError, OutputError,
            FloatingPointError) as exc:
        print(f"epicontrol: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
