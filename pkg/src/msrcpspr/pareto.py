"""Pareto front enumeration with the augmented epsilon-constraint grid.

The cost range between the two lexicographic optima is divided into
``grid_count`` steps; each grid level asks for the minimum makespan with
cost at most that level, rewarding budget slack through the augmented
objective.  Integer slack jumps let the sequential sweep bypass grid
levels that would repeat the previous solution; with the bypass off the
levels are independent and may be solved in parallel.  Both modes yield
the same filtered front.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .instance import ProjectInstance
from .schedule import ScheduleSolution, _fmt
from .solver import (
    InfeasibleProblemError,
    SolveLimits,
    SubproblemSpec,
    lexicographic_outcome,
    solve,
)

DEFAULT_GRID_COUNT = 10
DEFAULT_EPS = 1e-4
_RANGE_TOL = 1e-9
THREADS_ENV_VAR = "MSRCPSPR_THREADS"


@dataclass(frozen=True)
class ParetoPoint:
    makespan: float
    cost: float
    grid_index: int | None = None
    solution: ScheduleSolution | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PayoffTable:
    """Best and worst attainable value of each objective (lexicographic)."""

    makespan_pis: float
    makespan_nis: float
    cost_pis: float
    cost_nis: float


@dataclass(frozen=True)
class GridRecord:
    """Outcome at one grid level, for reporting and CSV export."""

    grid_point: int
    epsilon: float
    status: str  # "optimal" | "bypassed" | "infeasible" | "timeout"
    makespan: float | None
    cost: float | None
    slack: float | None
    wall_time: float


@dataclass(frozen=True)
class ParetoFront:
    points: tuple[ParetoPoint, ...]
    payoff: PayoffTable | None
    grid_count: int
    grid_log: tuple[GridRecord, ...] = ()
    diagnosis: str | None = None

    def pairs(self) -> list[tuple[float, float]]:
        return [(p.makespan, p.cost) for p in self.points]


def dominance_filter(points):
    """Points not weakly dominated by any other, makespan ascending.

    Works on anything exposing ``makespan``/``cost`` or indexable pairs;
    duplicates collapse to their first occurrence.
    """

    def key(p):
        if hasattr(p, "makespan"):
            return p.makespan, p.cost
        return p[0], p[1]

    kept = []
    best_cost = math.inf
    for p in sorted(points, key=key):
        _, cost = key(p)
        if cost < best_cost:
            kept.append(p)
            best_cost = cost
    return kept


def _grid_spec(level: float, eps: float, objective_range: float) -> SubproblemSpec:
    return SubproblemSpec(
        primary="makespan",
        budget=level,
        eps=eps,
        objective_range=objective_range if eps else None,
    )


def _solve_grid_level(args) -> tuple[int, object]:
    instance, level, eps, objective_range, limits = args
    return solve(instance, _grid_spec(level, eps, objective_range), limits)


def enumerate_front(
    instance: ProjectInstance,
    grid_count: int = DEFAULT_GRID_COUNT,
    eps: float = DEFAULT_EPS,
    *,
    bypass: bool = True,
    parallel: bool = False,
    max_workers: int | None = None,
    limits: SolveLimits | None = None,
) -> ParetoFront:
    """Enumerate the nondominated (makespan, cost) points.

    Builds the payoff table from the two lexicographic optima, grids the
    cost range into ``grid_count`` steps (levels p = 0..N), and minimizes
    makespan at every level with the augmented slack reward.  Parallel
    mode dispatches the levels to worker processes and therefore forces
    the bypass off; the filtered front is identical either way.
    """
    if grid_count < 2:
        raise ValueError(f"grid_count must be >= 2, got {grid_count}")
    try:
        lex_makespan = lexicographic_outcome(instance, ("makespan", "cost"), limits)
        lex_cost = lexicographic_outcome(instance, ("cost", "makespan"), limits)
    except InfeasibleProblemError as exc:
        return ParetoFront(points=(), payoff=None, grid_count=grid_count, diagnosis=str(exc))

    payoff = PayoffTable(
        makespan_pis=lex_makespan.objectives.makespan,
        makespan_nis=lex_cost.objectives.makespan,
        cost_pis=lex_cost.objectives.cost,
        cost_nis=lex_makespan.objectives.cost,
    )
    diagnosis = None
    statuses = set(lex_makespan.statuses) | set(lex_cost.statuses)
    if statuses - {"optimal"}:
        diagnosis = f"payoff table built from non-optimal solves: {sorted(statuses)}"

    objective_range = payoff.cost_nis - payoff.cost_pis
    if objective_range <= _RANGE_TOL:
        point = ParetoPoint(
            makespan=lex_makespan.objectives.makespan,
            cost=lex_makespan.objectives.cost,
            grid_index=0,
            solution=lex_makespan.result.solution,
        )
        record = GridRecord(
            grid_point=0,
            epsilon=payoff.cost_nis,
            status=lex_makespan.result.status,
            makespan=point.makespan,
            cost=point.cost,
            slack=0.0,
            wall_time=lex_makespan.result.wall_time,
        )
        return ParetoFront(
            points=(point,),
            payoff=payoff,
            grid_count=grid_count,
            grid_log=(record,),
            diagnosis=diagnosis,
        )

    step = objective_range / grid_count
    levels = [payoff.cost_nis - p * step for p in range(grid_count + 1)]
    records: list[GridRecord] = []
    found: list[ParetoPoint] = []

    if parallel:
        bypass = False
        workers = max_workers or _default_workers()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _solve_grid_level,
                    [(instance, level, eps, objective_range, limits) for level in levels],
                )
            )
        for p, result in enumerate(results):
            records.append(_record_for(p, levels[p], result))
            if result.solution is not None and result.status == "optimal":
                found.append(_point_for(p, result))
    else:
        p = 0
        while p <= grid_count:
            result = solve(instance, _grid_spec(levels[p], eps, objective_range), limits)
            records.append(_record_for(p, levels[p], result))
            skip = 0
            if result.solution is not None and result.status == "optimal":
                found.append(_point_for(p, result))
                if bypass and result.slack is not None and step > 0:
                    skip = math.floor(result.slack / step + 1e-12)
            for bypassed in range(p + 1, min(p + skip, grid_count) + 1):
                records.append(
                    GridRecord(
                        grid_point=bypassed,
                        epsilon=levels[bypassed],
                        status="bypassed",
                        makespan=None,
                        cost=None,
                        slack=None,
                        wall_time=0.0,
                    )
                )
            p += 1 + skip

    points = tuple(dominance_filter(found))
    return ParetoFront(
        points=points,
        payoff=payoff,
        grid_count=grid_count,
        grid_log=tuple(records),
        diagnosis=diagnosis,
    )


def plain_epsilon_front(
    instance: ProjectInstance,
    grid_count: int = DEFAULT_GRID_COUNT,
    *,
    limits: SolveLimits | None = None,
) -> ParetoFront:
    """Classic epsilon-constraint sweep: no slack reward, no bypass.

    Shares the payoff table and grid with :func:`enumerate_front` so the
    two methods are comparable at equal ``grid_count``.
    """
    return enumerate_front(instance, grid_count, eps=0.0, bypass=False, limits=limits)


def _record_for(p: int, level: float, result) -> GridRecord:
    return GridRecord(
        grid_point=p,
        epsilon=level,
        status=result.status,
        makespan=result.objectives.makespan if result.objectives else None,
        cost=result.objectives.cost if result.objectives else None,
        slack=result.slack,
        wall_time=result.wall_time,
    )


def _point_for(p: int, result) -> ParetoPoint:
    return ParetoPoint(
        makespan=result.objectives.makespan,
        cost=result.objectives.cost,
        grid_index=p,
        solution=result.solution,
    )


def _default_workers() -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def front_csv(front: ParetoFront, include_timing: bool = True) -> str:
    """Grid-level log as CSV: grid_point,makespan,cost,slack,solve_status,wall_time."""
    lines = ["grid_point,makespan,cost,slack,solve_status,wall_time"]
    for rec in front.grid_log:
        wall = _fmt(round(rec.wall_time, 6)) if include_timing else ""
        lines.append(
            ",".join(
                (
                    str(rec.grid_point),
                    _fmt(rec.makespan) if rec.makespan is not None else "",
                    _fmt(rec.cost) if rec.cost is not None else "",
                    _fmt(rec.slack) if rec.slack is not None else "",
                    rec.status,
                    wall,
                )
            )
        )
    return "\n".join(lines) + "\n"
