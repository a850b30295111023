"""
Command-line front end.

    python -m src.cli.main plan scenarios/distribution_comparison.json --out out/plan
    python -m src.cli.main simulate scenarios/demand_change.json --out out/sim
    python -m src.cli.main compare scenarios/distribution_comparison.json --out out/compare
    python -m src.cli.main oracle scenarios/even_absorption.json --grid 25 --out out/oracle
    python -m src.cli.main history --limit 10

Exit codes: 0 ok, 1 input error, 2 infeasible, 3 oracle budget exceeded.
"""
import argparse
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import polars as pl

from src.constraints.constraints import check_feasibility_against, constraint_report
from src.db.client import DatabaseClient
from src.ingest.scenario_file import load_scenario, with_overrides
from src.oracle.oracle import GridSpec, PriceGrid, best, oracle_gap
from src.planner.base import PlannerState
from src.planner.policy import output_grid
from src.serve.export import constraints_report_text, write_csv, write_text
from src.serve.run_history import run_tracker
from src.simulator.scenario import PlannerKind, Scenario
from src.simulator.simulator import compare, distribution_report, replan, run
from src.utils.config import DEFAULT_CONFIG_PATH, config_value, load_config
from src.utils.errors import BudgetExceededError, DemandDomainError, PricingError, ScenarioFileError
from src.utils.logger import logger

log = logger.bind(step="cli")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3


class CommandExit(Exception):
    """A command finished with a non-zero exit code."""

    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def exit_code_for(err: PricingError) -> int:
    if isinstance(err, (ScenarioFileError, DemandDomainError)):
        return EXIT_INPUT
    if isinstance(err, BudgetExceededError):
        return EXIT_BUDGET
    return EXIT_INFEASIBLE


def _scenario(args: argparse.Namespace) -> Scenario:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioFileError as err:
        raise CommandExit(EXIT_INPUT, str(err)) from err
    return with_overrides(scenario, getattr(args, "planner", None), getattr(args, "distribution", None))


def _settings(args: argparse.Namespace) -> dict:
    config = args.config_data
    return {
        "n_points": config_value(config, "simulator", "output_points", 1000),
        "digits": config_value(config, "csv", "significant_digits", 9),
        "grid": config_value(config, "oracle", "grid", 25),
        "budget": config_value(config, "oracle", "budget", 1_000_000),
    }


@run_tracker("plan")
def cmd_plan(args: argparse.Namespace, db_client: Optional[DatabaseClient] = None) -> int:
    scenario = _scenario(args)
    settings = _settings(args)
    out = Path(args.out)
    try:
        result = replan(scenario, scenario.models, PlannerState.initial(len(scenario.groups)), settings["n_points"])
    except PricingError as err:
        write_text(constraints_report_text(None, error=str(err)), out / "constraints_report.txt")
        raise CommandExit(exit_code_for(err), str(err)) from err

    traj = result.trajectory
    violation = check_feasibility_against(scenario.schedule, traj)
    write_csv(result.policy.to_frame(traj.grid), out / "policy.csv", settings["digits"])
    write_csv(traj.to_frame(), out / "trajectory.csv", settings["digits"])
    write_text(
        constraints_report_text(constraint_report(scenario.schedule, traj), violation, digits=settings["digits"]),
        out / "constraints_report.txt",
    )
    print(f"revenue={traj.final_revenue:.{settings['digits']}g} steps={len(result.steps)}")
    if violation is not None:
        raise CommandExit(EXIT_INFEASIBLE, f"planned trajectory violates {violation}")
    log.success(f"Plan written to {out}")
    return EXIT_OK


@run_tracker("simulate")
def cmd_simulate(args: argparse.Namespace, db_client: Optional[DatabaseClient] = None) -> int:
    scenario = _scenario(args)
    settings = _settings(args)
    out = Path(args.out)
    try:
        result = run(scenario, settings["n_points"])
    except PricingError as err:
        write_text(constraints_report_text(None, error=str(err)), out / "constraints_report.txt")
        raise CommandExit(exit_code_for(err), str(err)) from err

    digits = settings["digits"]
    write_csv(result.policy.to_frame(result.trajectory.grid), out / "policy.csv", digits)
    write_csv(result.trajectory.to_frame(), out / "trajectory.csv", digits)
    write_csv(result.replans_frame(), out / "replans.csv", digits)
    write_csv(distribution_report(result), out / "distribution_report.csv", digits)
    write_text(
        constraints_report_text(result.report, result.violation, "; ".join(result.infeasible) or None, digits),
        out / "constraints_report.txt",
    )
    print(f"revenue={result.final_revenue:.{digits}g} replans={len({r.t for r in result.replans})}")
    if not result.feasible:
        raise CommandExit(
            EXIT_INFEASIBLE, "; ".join(result.infeasible) or f"simulated trajectory violates {result.violation}"
        )
    log.success(f"Simulation written to {out}")
    return EXIT_OK


@run_tracker("compare")
def cmd_compare(args: argparse.Namespace, db_client: Optional[DatabaseClient] = None) -> int:
    scenario = _scenario(args)
    settings = _settings(args)
    out = Path(args.out)
    digits = settings["digits"]
    try:
        comparison = compare(scenario, n_points=settings["n_points"])
    except PricingError as err:
        raise CommandExit(exit_code_for(err), str(err)) from err

    grid = output_grid(0.0, scenario.horizon, scenario.output_points(settings["n_points"]), scenario.schedule.times)
    names = [m.value for m in comparison.methods]
    results = [comparison.results[m] for m in comparison.methods]
    n_groups = len(scenario.groups)

    prices = pl.DataFrame({
        "t": np.repeat(grid, n_groups),
        "group": np.tile(np.arange(1, n_groups + 1), len(grid)),
        **{
            f"price_{name}": [res.policy.price_at(i, t) for t in grid for i in range(n_groups)]
            for name, res in zip(names, results)
        },
    })
    sales = pl.DataFrame({
        "t": grid,
        **{
            f"sales_{i + 1}_{name}": np.interp(grid, res.trajectory.grid, res.trajectory.sales[i])
            for i in range(n_groups) for name, res in zip(names, results)
        },
    })
    revenue = pl.DataFrame({
        "t": grid,
        **{f"revenue_{name}": np.interp(grid, res.trajectory.grid, res.trajectory.aggregate)
           for name, res in zip(names, results)},
    })
    write_csv(prices, out / "compare_prices.csv", digits)
    write_csv(sales, out / "compare_sales.csv", digits)
    write_csv(revenue, out / "compare_revenue.csv", digits)
    first, second = comparison.revenues
    summary = f"{names[0]}={first:.{digits}g} {names[1]}={second:.{digits}g} delta_pct={comparison.delta_pct:.{digits}g}"
    write_text(summary, out / "summary.txt")
    print(summary)
    infeasible = [name for name, res in zip(names, results) if not res.feasible]
    if infeasible:
        raise CommandExit(EXIT_INFEASIBLE, f"infeasible under {', '.join(infeasible)}")
    return EXIT_OK


def oracle_grid(scenario: Scenario, n: int, budget: int) -> GridSpec:
    """Per group: the admissible price range, capped at the highest choke price when unbounded."""
    grids = []
    for model in scenario.models:
        laws = [params for _, params in model.segments]
        lo = min(p.price_lo for p in laws)
        hi = max(p.price_hi for p in laws)
        if math.isinf(hi):
            hi = max(p.choke_price for p in laws)
        grids.append(PriceGrid(lo, hi, n))
    return GridSpec(tuple(grids), budget)


@run_tracker("oracle")
def cmd_oracle(args: argparse.Namespace, db_client: Optional[DatabaseClient] = None) -> int:
    scenario = _scenario(args)
    settings = _settings(args)
    out = Path(args.out)
    digits = settings["digits"]
    grid = oracle_grid(scenario, args.grid or settings["grid"], args.budget or settings["budget"])
    time_value = scenario.time_value if scenario.planner is PlannerKind.TVM else None
    try:
        result = best(scenario.schedule, scenario.models, grid, time_value)
    except BudgetExceededError as err:
        write_text(f"oracle: refused, needs {err.required} combinations (budget {err.budget})", out / "gap_report.txt")
        raise CommandExit(EXIT_BUDGET, str(err)) from err

    lines = [f"planner={scenario.planner.value} distribution={scenario.distribution.value}"]
    plan_revenue = None
    try:
        planned = replan(scenario, scenario.models, PlannerState.initial(len(scenario.groups)), settings["n_points"])
        plan_revenue = planned.final_revenue
        lines.append(f"planner_revenue={plan_revenue:.{digits}g}")
    except PricingError as err:
        lines.append(f"planner_revenue=infeasible ({err})")

    if result.feasible:
        rows = [
            (j + 1, seg.start, seg.end, i + 1, seg.price)
            for i, group in enumerate(result.policy.segments)
            for j, seg in enumerate(group)
        ]
        frame = pl.DataFrame(
            rows,
            schema={"segment": pl.Int64, "t_start": pl.Float64, "t_end": pl.Float64,
                    "group": pl.Int64, "price": pl.Float64},
            orient="row",
        ).sort(["segment", "group"])
        write_csv(frame, out / "oracle_best.csv", digits)
        lines.append(f"oracle_revenue={result.revenue:.{digits}g}")
        if plan_revenue is not None:
            lines.append(f"gap={oracle_gap(plan_revenue, result.revenue):.{digits}g}")
    else:
        lines.append("oracle_revenue=infeasible")
    lines.append(f"grid={','.join(str(g.n) for g in grid.grids)} evaluated={result.evaluated} "
                 f"feasible={result.feasible_count}")
    lines.append("delta_s=" + ",".join(f"{d:.{digits}g}" for d in result.delta_s))
    report = "\n".join(lines)
    write_text(report, out / "gap_report.txt")
    print(report)
    if not result.feasible or plan_revenue is None:
        raise CommandExit(EXIT_INFEASIBLE, "no feasible policy" if not result.feasible else "planner infeasible")
    return EXIT_OK


def cmd_history(args: argparse.Namespace, db_client: Optional[DatabaseClient] = None) -> int:
    if db_client is None:
        raise CommandExit(EXIT_INPUT, "run history is disabled")
    with pl.Config(tbl_rows=args.limit, tbl_cols=-1):
        print(db_client.recent_runs(args.limit))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pricing", description="Constrained dynamic pricing engine")
    parser.add_argument("--config", default=str(DEFAULT_CONFIG_PATH), help="path to config.json")
    parser.add_argument("--no-history", action="store_true", help="do not record this run")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, func, help_text: str, distribution: bool = True):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("scenario", help="scenario file (JSON)")
        cmd.add_argument("--planner", choices=[k.value for k in PlannerKind])
        if distribution:
            cmd.add_argument("--distribution", choices=["headroom", "revshare"])
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.set_defaults(func=func)
        return cmd

    scenario_command("plan", cmd_plan, "plan prices from t=0")
    scenario_command("simulate", cmd_simulate, "simulate with demand-change events and replanning")
    scenario_command("compare", cmd_compare, "compare headroom and revenue-share distribution", distribution=False)
    oracle = scenario_command("oracle", cmd_oracle, "brute-force grid optimum and planner gap")
    oracle.add_argument("--grid", type=int, help="grid points per group")
    oracle.add_argument("--budget", type=int, help="max policies to enumerate")

    history = sub.add_parser("history", help="show recent runs")
    history.add_argument("--limit", type=int, default=20)
    history.set_defaults(func=cmd_history)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.config_data = load_config(args.config)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT

    db_client = None
    if config_value(args.config_data, "db", "enabled", False) and not args.no_history:
        db_client = DatabaseClient(db_path=config_value(args.config_data, "db", "path", "data/runs.db"))
        db_client.init_db()

    try:
        return args.func(args, db_client=db_client)
    except CommandExit as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
