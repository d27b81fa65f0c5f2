"""Command-line surface: validate, solve, pareto, sweep, simulate, gantt.

Exit codes are a stable contract: 0 on success, 1 when the problem is
infeasible or a solve timed out, 2 on input errors.  Logs go to stderr,
data artifacts to files in the --out directory only.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import instance as instance_mod
from . import pareto as pareto_mod
from . import queueing, schedule, vikor
from .instance import ParseError, ProjectInstance, ValidationError
from .schedule import _fmt
from .solver import InfeasibleProblemError, SolveLimits, SubproblemSpec, lexicographic_outcome, solve

logger = logging.getLogger("msrcpspr")

EXIT_OK = 0
EXIT_UNSOLVED = 1
EXIT_INPUT = 2

DEFAULT_HORIZON = 1e6


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs beyond the instance itself."""

    instance_path: Path
    extension_path: Path | None
    out_dir: Path
    grid_count: int = pareto_mod.DEFAULT_GRID_COUNT
    eps: float = pareto_mod.DEFAULT_EPS
    weights: tuple[float, float] = (0.5, 0.5)
    v: float = 0.5
    seed: int = 0
    time_limit: float = 300.0
    bypass: bool = True
    parallel: bool = False
    include_timing: bool = True
    horizon: float = DEFAULT_HORIZON

    def limits(self) -> SolveLimits:
        return SolveLimits(time_limit=self.time_limit)


@dataclass(frozen=True)
class SweepRow:
    grid_point: int
    multiplier: float
    makespan: float | None
    cost: float | None
    makespan_change_pct: float | None
    cost_change_pct: float | None
    flagged: bool


def load_problem(config: RunConfig) -> ProjectInstance:
    if config.extension_path is None:
        raise ValidationError("extension required: supply --extension with the skill sidecar")
    return instance_mod.instance_from_files(config.instance_path, config.extension_path)


def _write(out_dir: Path, name: str, content: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(content, encoding="utf-8", newline="\n")
    logger.info("wrote %s", path)
    return path


def cmd_validate(config: RunConfig) -> int:
    problem = load_problem(config)
    violations = instance_mod.validate(problem)
    warnings = instance_mod.skill_coverage_issues(problem)
    for issue in warnings:
        print(f"warning: {issue}")
    if violations:
        for violation in violations:
            print(f"violation: {violation}")
        print(f"INVALID: {len(violations)} violation(s)")
        return EXIT_INPUT
    print(
        f"OK: {problem.n_nodes} activities ({len(list(problem.executable_ids))} executable), "
        f"{len(problem.resources)} resources, {problem.skill_count} skills"
    )
    return EXIT_OK


def cmd_solve(config: RunConfig, primary: str, budget: float | None, eps: float) -> int:
    problem = load_problem(config)
    objective_range = None
    if eps:
        if budget is None:
            raise ValidationError("--eps needs --budget to produce slack")
        secondary = "cost" if primary == "makespan" else "makespan"
        lex = lexicographic_outcome(problem, (primary, secondary), config.limits())
        objective_range = abs(getattr(lex.objectives, secondary) - budget) or 1.0
    spec = SubproblemSpec(primary=primary, budget=budget, eps=eps, objective_range=objective_range)
    result = solve(problem, spec, config.limits())
    print(f"status: {result.status}")
    print(f"nodes explored: {result.nodes_explored}")
    if result.objectives is not None:
        print(f"makespan: {_fmt(result.objectives.makespan)}")
        print(f"cost: {_fmt(result.objectives.cost)}")
        if result.slack is not None:
            print(f"budget slack: {_fmt(result.slack)}")
        rows = schedule.to_gantt(problem, result.solution)
        _write(config.out_dir, "solution_gantt.csv", schedule.gantt_csv(rows))
        _write(config.out_dir, "solution_gantt.svg", schedule.gantt_svg(rows))
    return EXIT_OK if result.status == "optimal" else EXIT_UNSOLVED


def cmd_pareto(config: RunConfig) -> int:
    problem = load_problem(config)
    front = pareto_mod.enumerate_front(
        problem,
        config.grid_count,
        config.eps,
        bypass=config.bypass,
        parallel=config.parallel,
        limits=config.limits(),
    )
    if front.diagnosis:
        logger.warning("%s", front.diagnosis)
    _write(config.out_dir, "front.csv", pareto_mod.front_csv(front, config.include_timing))
    if not front.points:
        print("no Pareto points found")
        return EXIT_UNSOLVED

    ranking = vikor.rank(front, config.weights, config.v)
    _write(config.out_dir, "ranking.csv", vikor.ranking_csv(ranking))

    print("point  makespan      cost")
    for idx, point in enumerate(front.points, start=1):
        print(f"{idx:5d}  {point.makespan:>8.4g}  {point.cost:>12.6g}")
    for rank_pos, j in enumerate(ranking.order, start=1):
        if j not in ranking.compromise:
            continue
        point = front.points[j]
        if point.solution is None:
            continue
        rows = schedule.to_gantt(problem, point.solution)
        _write(config.out_dir, f"gantt_rank{rank_pos}.svg", schedule.gantt_svg(rows))
    statuses = {rec.status for rec in front.grid_log}
    if statuses & {"timeout"}:
        return EXIT_UNSOLVED
    return EXIT_OK


def run_sweep(
    problem: ProjectInstance,
    parameter: str,
    multipliers: list[float],
    grid_count: int,
    eps: float,
    limits: SolveLimits,
    bypass: bool = True,
) -> tuple[list[SweepRow], dict[float, pareto_mod.ParetoFront]]:
    """Re-enumerate the front per scaled reliability parameter.

    Rows align fronts position by position (both are sorted by ascending
    makespan); a position missing from a scaled front is flagged, as is
    any front whose enumeration failed outright.
    """
    if any(m <= 0 for m in multipliers):
        raise ValidationError("multipliers must be > 0")
    baseline = pareto_mod.enumerate_front(problem, grid_count, eps, bypass=bypass, limits=limits)
    fronts: dict[float, pareto_mod.ParetoFront] = {}
    rows: list[SweepRow] = []
    for multiplier in multipliers:
        if multiplier == 1.0:
            front = baseline
        else:
            scaled = instance_mod.scale_reliability(problem, parameter, multiplier)
            front = pareto_mod.enumerate_front(scaled, grid_count, eps, bypass=bypass, limits=limits)
        fronts[multiplier] = front
        for idx in range(max(len(baseline.points), len(front.points))):
            base_point = baseline.points[idx] if idx < len(baseline.points) else None
            point = front.points[idx] if idx < len(front.points) else None
            if base_point is None or point is None:
                rows.append(
                    SweepRow(idx + 1, multiplier, point.makespan if point else None,
                             point.cost if point else None, None, None, True)
                )
                continue
            m_pct = (
                (point.makespan - base_point.makespan) / base_point.makespan * 100.0
                if base_point.makespan else None
            )
            c_pct = (
                (point.cost - base_point.cost) / base_point.cost * 100.0
                if base_point.cost else None
            )
            rows.append(
                SweepRow(idx + 1, multiplier, point.makespan, point.cost, m_pct, c_pct,
                         m_pct is None or c_pct is None)
            )
    return rows, fronts


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = ["grid_point,multiplier,makespan,cost,makespan_change_pct,cost_change_pct,flagged"]
    for row in rows:
        lines.append(
            ",".join(
                (
                    str(row.grid_point),
                    _fmt(row.multiplier),
                    _fmt(row.makespan) if row.makespan is not None else "",
                    _fmt(row.cost) if row.cost is not None else "",
                    _fmt(round(row.makespan_change_pct, 9)) if row.makespan_change_pct is not None else "",
                    _fmt(round(row.cost_change_pct, 9)) if row.cost_change_pct is not None else "",
                    "1" if row.flagged else "0",
                )
            )
        )
    return "\n".join(lines) + "\n"


def cmd_sweep(config: RunConfig, parameter: str, multipliers: list[float]) -> int:
    problem = load_problem(config)
    rows, fronts = run_sweep(
        problem, parameter, multipliers, config.grid_count, config.eps, config.limits(),
        bypass=config.bypass,
    )
    _write(config.out_dir, f"sweep_{parameter}.csv", sweep_csv(rows))
    flagged = sum(1 for row in rows if row.flagged)
    print(f"sweep over {parameter}: {len(rows)} rows, {flagged} flagged")
    for multiplier, front in fronts.items():
        pis = front.payoff.makespan_pis if front.payoff else math.nan
        print(f"  x{multiplier:g}: {len(front.points)} points, makespan PIS {pis:g}")
    return EXIT_OK if not flagged else EXIT_UNSOLVED


def simulation_rows(
    problem: ProjectInstance, horizon: float, seed: int
) -> list[tuple[float, float, float, float, float, queueing.SimEstimate]]:
    """One row per resource and integer arrival count inside the stable region."""
    total_demand = int(problem.requirement_matrix.sum())
    rows = []
    index = 0
    for res in problem.resources:
        critical = queueing.critical_arrival_rate(res.reliability)
        top = min(total_demand, math.ceil(critical) - 1)
        for lam in range(1, top + 1):
            point = queueing.QueueOperatingPoint(float(lam), res.reliability)
            analytic = queueing.waiting_time(point)
            estimate = queueing.simulate_queue(point, horizon, seed + 7919 * index)
            rows.append(
                (
                    float(lam),
                    res.reliability.service_rate,
                    res.reliability.disruption_rate,
                    res.reliability.retrieval_rate,
                    analytic,
                    estimate,
                )
            )
            index += 1
    return rows


def simulation_csv(rows) -> str:
    lines = ["lambda,mu,upsilon,r,analytic_W,sim_W,ci_half_width"]
    for lam, mu, upsilon, r, analytic, estimate in rows:
        lines.append(
            ",".join(
                (
                    _fmt(lam),
                    _fmt(mu),
                    _fmt(upsilon),
                    _fmt(r),
                    _fmt(round(analytic, 9)),
                    _fmt(round(estimate.mean_wait, 9)),
                    _fmt(round(estimate.half_width, 9)),
                )
            )
        )
    return "\n".join(lines) + "\n"


def cmd_simulate(config: RunConfig) -> int:
    problem = load_problem(config)
    rows = simulation_rows(problem, config.horizon, config.seed)
    _write(config.out_dir, "simulate.csv", simulation_csv(rows))
    worst_gap = 0.0
    for lam, mu, upsilon, r, analytic, estimate in rows:
        gap = abs(estimate.mean_wait - analytic) / analytic
        worst_gap = max(worst_gap, gap)
        if gap > 0.05:
            logger.warning(
                "analytic/simulated gap %.1f%% at lambda=%g mu=%g upsilon=%g r=%g "
                "(analytic %.4f, simulated %.4f +/- %.4f)",
                gap * 100, lam, mu, upsilon, r, analytic, estimate.mean_wait, estimate.half_width,
            )
    print(f"{len(rows)} operating points simulated, worst relative gap {worst_gap * 100:.2f}%")
    return EXIT_OK


def cmd_gantt(config: RunConfig) -> int:
    problem = load_problem(config)
    outcome = lexicographic_outcome(problem, ("makespan", "cost"), config.limits())
    if outcome.result.solution is None:
        print("no feasible solution to render")
        return EXIT_UNSOLVED
    rows = schedule.to_gantt(problem, outcome.result.solution)
    _write(config.out_dir, "gantt.csv", schedule.gantt_csv(rows))
    _write(config.out_dir, "gantt.svg", schedule.gantt_svg(rows))
    print(
        f"rendered {len(rows)} activities, makespan {_fmt(outcome.objectives.makespan)}, "
        f"cost {_fmt(outcome.objectives.cost)}"
    )
    return EXIT_OK


def _parse_weights(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("weights must be two comma-separated numbers, e.g. 0.5,0.5")
    return float(parts[0]), float(parts[1])


def _parse_multipliers(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msrcpspr",
        description="Bi-objective multi-skill project scheduling with unreliable resources",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--instance", required=True, type=Path, help="PSPLIB .sm file")
        p.add_argument("--extension", type=Path, help="skill/reliability sidecar JSON")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--time-limit", type=float, default=300.0, help="seconds per subproblem")
        p.add_argument("--no-timing", action="store_true", help="omit wall times from CSV output")

    p = sub.add_parser("validate", help="check instance and sidecar")
    common(p)

    p = sub.add_parser("solve", help="single-objective exact solve")
    common(p)
    p.add_argument("--primary", choices=("makespan", "cost"), default="makespan")
    p.add_argument("--budget", type=float, help="bound on the other objective")
    p.add_argument("--eps", type=float, default=0.0, help="slack reward coefficient")

    p = sub.add_parser("pareto", help="enumerate the Pareto front and rank it")
    common(p)
    p.add_argument("--grid", type=int, default=pareto_mod.DEFAULT_GRID_COUNT, metavar="N")
    p.add_argument("--eps", type=float, default=pareto_mod.DEFAULT_EPS)
    p.add_argument("--weights", type=_parse_weights, default=(0.5, 0.5), metavar="a,b")
    p.add_argument("--v", type=float, default=0.5, help="VIKOR strategy weight")
    p.add_argument("--no-bypass", action="store_true", help="solve every grid point")
    p.add_argument("--parallel", action="store_true", help="parallel grid (implies --no-bypass)")

    p = sub.add_parser("sweep", help="sensitivity of the front to reliability scaling")
    common(p)
    p.add_argument("--parameter", choices=("retrieval", "disruption"), required=True)
    p.add_argument("--multipliers", type=_parse_multipliers, default=[1.0, 1.4])
    p.add_argument("--grid", type=int, default=pareto_mod.DEFAULT_GRID_COUNT, metavar="N")
    p.add_argument("--eps", type=float, default=pareto_mod.DEFAULT_EPS)
    p.add_argument("--no-bypass", action="store_true")

    p = sub.add_parser("simulate", help="validate waiting times against simulation")
    common(p)
    p.add_argument("--horizon", type=float, default=DEFAULT_HORIZON, help="simulated time units")

    p = sub.add_parser("gantt", help="render the makespan-optimal schedule")
    common(p)
    return parser


def _config_from(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        instance_path=args.instance,
        extension_path=args.extension,
        out_dir=args.out,
        grid_count=getattr(args, "grid", pareto_mod.DEFAULT_GRID_COUNT),
        eps=getattr(args, "eps", pareto_mod.DEFAULT_EPS),
        weights=getattr(args, "weights", (0.5, 0.5)),
        v=getattr(args, "v", 0.5),
        seed=args.seed,
        time_limit=args.time_limit,
        bypass=not getattr(args, "no_bypass", False),
        parallel=getattr(args, "parallel", False),
        include_timing=not args.no_timing,
        horizon=getattr(args, "horizon", DEFAULT_HORIZON),
    )


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=os.environ.get("MSRCPSPR_LOG", "INFO"))
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _config_from(args)
    try:
        if args.command == "validate":
            return cmd_validate(config)
        if args.command == "solve":
            return cmd_solve(config, args.primary, args.budget, args.eps)
        if args.command == "pareto":
            return cmd_pareto(config)
        if args.command == "sweep":
            return cmd_sweep(config, args.parameter, args.multipliers)
        if args.command == "simulate":
            return cmd_simulate(config)
        if args.command == "gantt":
            return cmd_gantt(config)
        parser.error(f"unknown command {args.command!r}")
    except (ParseError, ValidationError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, InfeasibleProblemError):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_UNSOLVED
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
