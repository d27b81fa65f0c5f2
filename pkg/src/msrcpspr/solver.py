"""Exact optimization of one objective under a budget on the other.

The search branches on (a) the skill-to-resource assignment of every
activity and (b) the orientation of every pair of activities that share
a resource.  Because arrival rates are integer assignment counts, each
resource has finitely many possible waits; they are tabulated up front,
which keeps the whole problem combinatorial.  Node bounds combine a
critical-path relaxation (precedence only, waits of assigned activities
at their current counts) with a per-resource load bound, plus the exact
remaining-cost minimum.  ``brute_force_front`` is the independent
exhaustive oracle for small instances.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .instance import ProjectInstance
from .queueing import InstabilityError, QueueOperatingPoint, waiting_time
from .schedule import (
    CycleError,
    ObjectiveValues,
    ScheduleSolution,
    evaluate,
    tighten_starts,
)

if TYPE_CHECKING:  # pragma: no cover
    from .pareto import ParetoFront

EPS_RANGE = (1e-6, 1e-3)
_PRUNE_TOL = 1e-12
_BUDGET_TOL = 1e-9

GUARD_MAX_ACTIVITIES = 6
GUARD_MAX_RESOURCES = 4
GUARD_MAX_SKILLS = 3


class GuardRailError(ValueError):
    """The brute-force oracle refuses instances beyond its guard rails."""


@dataclass(frozen=True)
class SubproblemSpec:
    """One single-objective subproblem, optionally budgeted and augmented."""

    primary: str  # "makespan" or "cost"
    budget: float | None = None
    eps: float = 0.0
    objective_range: float | None = None

    def __post_init__(self):
        if self.primary not in ("makespan", "cost"):
            raise ValueError(f"primary must be 'makespan' or 'cost', got {self.primary!r}")
        if self.budget is not None and self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget!r}")
        if self.eps != 0.0:
            if not EPS_RANGE[0] <= self.eps <= EPS_RANGE[1]:
                raise ValueError(f"eps must be 0 or within {EPS_RANGE}, got {self.eps!r}")
            if self.budget is None:
                raise ValueError("augmentation needs a budget to produce slack")
            if not self.objective_range or self.objective_range <= 0:
                raise ValueError("augmentation needs a positive objective_range")


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float = 300.0
    node_limit: int | None = None


@dataclass(frozen=True)
class SolveResult:
    status: str  # "optimal" | "infeasible" | "timeout"
    solution: ScheduleSolution | None
    objectives: ObjectiveValues | None
    slack: float | None
    nodes_explored: int
    wall_time: float


def enumerate_assignments(
    instance: ProjectInstance, activity_id: int
) -> list[tuple[tuple[int, int], ...]]:
    """All assignments of one activity meeting its skill requirements.

    Every returned tuple lists (skill, resource) pairs (1-based) such
    that each required skill gets exactly its required count of distinct
    mastering resources and no resource appears twice.
    """
    act = instance.activities[activity_id - 1]
    needed = [(skill, count) for skill, count in act.skill_requirements if count > 0]
    if not needed:
        return [()]
    mastery = instance.mastery_matrix
    per_skill: list[list[tuple[int, ...]]] = []
    for skill, count in needed:
        masters = [k + 1 for k in range(len(instance.resources)) if mastery[skill - 1, k]]
        combos = list(itertools.combinations(masters, count))
        if not combos:
            return []
        per_skill.append(combos)
    results: list[tuple[tuple[int, int], ...]] = []
    for choice in itertools.product(*per_skill):
        used: set[int] = set()
        ok = True
        for resources in choice:
            for res in resources:
                if res in used:
                    ok = False
                    break
                used.add(res)
            if not ok:
                break
        if ok:
            pairs = tuple(
                sorted(
                    (skill, res)
                    for (skill, _), resources in zip(needed, choice)
                    for res in resources
                )
            )
            results.append(pairs)
    return results


def _deterministic_topo_order(n: int, succ: list[list[int]]) -> list[int]:
    """Kahn order taking the smallest available node first (0-based)."""
    indeg = [0] * n
    for u in range(n):
        for v in succ[u]:
            indeg[v] += 1
    heap = [u for u in range(n) if indeg[u] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) != n:
        raise CycleError("instance precedence graph is cyclic")
    return order


class _Context:
    """Precomputed search data shared by every node of one solve call."""

    def __init__(self, instance: ProjectInstance):
        self.instance = instance
        n = instance.n_nodes
        self.n = n
        self.sink = n - 1
        self.durations = [float(x) for x in instance.duration_array]
        self.prec_succ: list[list[int]] = [
            list(np.flatnonzero(instance.precedence[u])) for u in range(n)
        ]
        topo = _deterministic_topo_order(n, self.prec_succ)
        self.acts = [u for u in topo if 0 < u < n - 1]

        # Reachability bitmask over precedence arcs: bit v of reach[u] means
        # u has a path to v.
        reach = [0] * n
        for u in reversed(topo):
            mask = 0
            for v in self.prec_succ[u]:
                mask |= (1 << v) | reach[v]
            reach[u] = mask
        self.prec_reach = reach

        # Candidate assignments per activity, cheapest first.
        self.candidates: list[list[tuple[tuple[int, int], ...]]] = []
        self.cand_resources: list[list[tuple[int, ...]]] = []
        self.cand_costs: list[list[float]] = []
        cost_rate = instance.cost_rate_matrix
        for u in self.acts:
            raw = enumerate_assignments(instance, u + 1)
            duration = self.durations[u]
            entries = []
            for pairs in raw:
                cost = duration * sum(cost_rate[l - 1, k - 1] for l, k in pairs)
                entries.append((cost, pairs))
            entries.sort(key=lambda e: (e[0], e[1]))
            self.candidates.append([pairs for _, pairs in entries])
            self.cand_resources.append(
                [tuple(sorted(k - 1 for _, k in pairs)) for _, pairs in entries]
            )
            self.cand_costs.append([cost for cost, _ in entries])

        self.suffix_min_cost = [0.0] * (len(self.acts) + 1)
        for idx in range(len(self.acts) - 1, -1, -1):
            best = min(self.cand_costs[idx]) if self.cand_costs[idx] else math.inf
            self.suffix_min_cost[idx] = self.suffix_min_cost[idx + 1] + best

        # Wait per resource as a function of its integer assignment count.
        max_count = len(self.acts)
        self.wait_table: list[list[float | None]] = []
        self.max_stable: list[int] = []
        for res in instance.resources:
            table: list[float | None] = []
            stable = -1
            for m in range(max_count + 1):
                try:
                    table.append(waiting_time(QueueOperatingPoint(float(m), res.reliability)))
                    stable = m
                except (InstabilityError, ValueError):
                    table.append(None)
            self.wait_table.append(table)
            self.max_stable.append(stable)

    def sink_start(self, succ: list[list[int]], weights: list[float]) -> float:
        """Longest-path start of the sink; raises CycleError on a cycle."""
        n = self.n
        indeg = [0] * n
        for u in range(n):
            for v in succ[u]:
                indeg[v] += 1
        starts = [0.0] * n
        stack = [u for u in range(n) if indeg[u] == 0]
        seen = 0
        while stack:
            u = stack.pop()
            seen += 1
            release = starts[u] + weights[u]
            for v in succ[u]:
                if release > starts[v]:
                    starts[v] = release
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        if seen != n:
            raise CycleError("sequencing created a cycle")
        return starts[self.sink]


class _SequencingSearch:
    """Minimum-makespan orientation of the resource-sharing pairs.

    All durations and waits are fixed when this runs, so each node's
    bound is just the longest path in the partially oriented graph.
    """

    def __init__(self, ctx: _Context, weights: list[float]):
        self.ctx = ctx
        self.weights = weights
        self.succ = [list(arcs) for arcs in ctx.prec_succ]
        self.reach = list(ctx.prec_reach)
        self.nodes = 0

    def _add_arc(self, u: int, v: int) -> list[tuple[int, int]] | None:
        """Insert u->v; returns the undo log, or None when it closes a cycle."""
        if (self.reach[v] >> u) & 1:
            return None
        gain = self.reach[v] | (1 << v)
        undo: list[tuple[int, int]] = []
        bit_u = 1 << u
        for x in range(self.ctx.n):
            mask = self.reach[x]
            if x == u or mask & bit_u:
                new = mask | gain
                if new != mask:
                    undo.append((x, mask))
                    self.reach[x] = new
        self.succ[u].append(v)
        return undo

    def _remove_arc(self, u: int, undo: list[tuple[int, int]]) -> None:
        self.succ[u].pop()
        for x, old in undo:
            self.reach[x] = old

    def run(
        self, decisions: list[tuple[int, int]], upper: float
    ) -> tuple[float, list[tuple[int, int]]] | None:
        """Best makespan strictly below ``upper`` with its chosen arcs."""
        self.best: float = upper
        self.best_dirs: list[tuple[int, int]] | None = None
        self.chosen: list[tuple[int, int]] = []
        self._dfs(decisions, 0)
        if self.best_dirs is None:
            return None
        return self.best, self.best_dirs

    def _dfs(self, decisions: list[tuple[int, int]], idx: int) -> None:
        self.nodes += 1
        bound = self.ctx.sink_start(self.succ, self.weights)
        if bound >= self.best:
            return
        if idx == len(decisions):
            self.best = bound
            self.best_dirs = list(self.chosen)
            return
        i, j = decisions[idx]
        options = []
        for u, v in ((i, j), (j, i)):
            undo = self._add_arc(u, v)
            if undo is None:
                continue
            child_bound = self.ctx.sink_start(self.succ, self.weights)
            self._remove_arc(u, undo)
            options.append((child_bound, u, v))
        options.sort(key=lambda opt: (opt[0], opt[1]))
        for _, u, v in options:
            undo = self._add_arc(u, v)
            if undo is None:
                continue
            self.chosen.append((u, v))
            self._dfs(decisions, idx + 1)
            self.chosen.pop()
            self._remove_arc(u, undo)


class _BranchAndBound:
    def __init__(self, ctx: _Context, spec: SubproblemSpec, limits: SolveLimits):
        self.ctx = ctx
        self.spec = spec
        self.limits = limits
        self.deadline = time.perf_counter() + limits.time_limit
        self.nodes = 0
        self.timed_out = False
        self.best_f = math.inf
        self.best: dict | None = None

        n_res = len(ctx.instance.resources)
        self.lam = [0] * n_res
        self.load_duration = [0.0] * n_res
        self.chosen: list[int] = []
        self.cost_so_far = 0.0

    # -- bounds -------------------------------------------------------

    def _makespan_lb(self) -> float:
        """Admissible makespan bound: precedence critical path with the
        waits implied by the current partial counts, versus the heaviest
        single-resource load (its activities are necessarily serialized)."""
        ctx = self.ctx
        waits = []
        for k, count in enumerate(self.lam):
            w = ctx.wait_table[k][count]
            waits.append(w if w is not None else math.inf)
        weights = list(ctx.durations)
        for idx, cand_idx in enumerate(self.chosen):
            u = ctx.acts[idx]
            resources = ctx.cand_resources[idx][cand_idx]
            if resources:
                weights[u] += max(waits[k] for k in resources)
        path_bound = ctx.sink_start(ctx.prec_succ, weights)
        load_bound = 0.0
        for k, count in enumerate(self.lam):
            if count:
                load = self.load_duration[k] + count * waits[k]
                if load > load_bound:
                    load_bound = load
        return max(path_bound, load_bound)

    def _cost_lb(self) -> float:
        return self.cost_so_far + self.ctx.suffix_min_cost[len(self.chosen)]

    def _prunable(self) -> bool:
        spec = self.spec
        primary_lb = self._makespan_lb() if spec.primary == "makespan" else self._cost_lb()
        if spec.budget is None:
            return primary_lb >= self.best_f - _PRUNE_TOL
        secondary_lb = self._cost_lb() if spec.primary == "makespan" else self._makespan_lb()
        if secondary_lb > spec.budget + _BUDGET_TOL:
            return True
        f_lb = primary_lb
        if spec.eps:
            f_lb -= spec.eps * max(0.0, spec.budget - secondary_lb) / spec.objective_range
        return f_lb >= self.best_f - _PRUNE_TOL

    # -- search -------------------------------------------------------

    def run(self) -> None:
        self._dfs()

    def _out_of_budget(self) -> bool:
        if self.timed_out:
            return True
        if time.perf_counter() > self.deadline:
            self.timed_out = True
            return True
        if self.limits.node_limit is not None and self.nodes > self.limits.node_limit:
            self.timed_out = True
            return True
        return False

    def _dfs(self) -> None:
        if self._out_of_budget():
            return
        self.nodes += 1
        idx = len(self.chosen)
        if self._prunable():
            return
        if idx == len(self.ctx.acts):
            self._leaf()
            return
        ctx = self.ctx
        for cand_idx in range(len(ctx.candidates[idx])):
            resources = ctx.cand_resources[idx][cand_idx]
            if any(self.lam[k] + 1 > ctx.max_stable[k] for k in resources):
                continue
            u = ctx.acts[idx]
            for k in resources:
                self.lam[k] += 1
                self.load_duration[k] += ctx.durations[u]
            self.cost_so_far += ctx.cand_costs[idx][cand_idx]
            self.chosen.append(cand_idx)
            self._dfs()
            self.chosen.pop()
            self.cost_so_far -= ctx.cand_costs[idx][cand_idx]
            for k in resources:
                self.lam[k] -= 1
                self.load_duration[k] -= ctx.durations[u]
            if self.timed_out:
                return

    def _sharing_pairs(self) -> tuple[list[tuple[int, int]], list[float]]:
        """Pairs of activities sharing a resource, plus final node weights."""
        ctx = self.ctx
        users: dict[int, list[int]] = {}
        weights = list(ctx.durations)
        for idx, cand_idx in enumerate(self.chosen):
            u = ctx.acts[idx]
            resources = ctx.cand_resources[idx][cand_idx]
            if resources:
                weights[u] += max(ctx.wait_table[k][self.lam[k]] for k in resources)
            for k in resources:
                users.setdefault(k, []).append(u)
        pairs = {
            (min(a, b), max(a, b))
            for nodes in users.values()
            for a, b in itertools.combinations(nodes, 2)
        }
        return sorted(pairs), weights

    def _leaf(self) -> None:
        spec = self.spec
        cost = self.cost_so_far
        pairs, weights = self._sharing_pairs()

        fixed: list[tuple[int, int]] = []
        decisions: list[tuple[int, int]] = []
        reach = self.ctx.prec_reach
        for i, j in pairs:
            if (reach[i] >> j) & 1:
                fixed.append((i, j))
            elif (reach[j] >> i) & 1:
                fixed.append((j, i))
            else:
                decisions.append((i, j))

        if spec.primary == "makespan":
            slack = 0.0
            bonus = 0.0
            if spec.budget is not None:
                if cost > spec.budget + _BUDGET_TOL:
                    return
                slack = max(0.0, spec.budget - cost)
                if spec.eps:
                    bonus = spec.eps * slack / spec.objective_range
            upper = self.best_f - _PRUNE_TOL + bonus
        else:
            if cost >= self.best_f - _PRUNE_TOL and not spec.eps:
                return
            upper = math.inf
            if spec.budget is not None:
                upper = spec.budget + _BUDGET_TOL
                if spec.eps:
                    upper = min(
                        upper,
                        (self.best_f - cost) * spec.objective_range / spec.eps + spec.budget,
                    )

        search = _SequencingSearch(self.ctx, weights)
        outcome = search.run(decisions, upper)
        self.nodes += search.nodes
        if outcome is None:
            return
        makespan, dirs = outcome

        if spec.primary == "makespan":
            f = makespan - bonus
            achieved_slack = slack if spec.budget is not None else None
        else:
            f = cost
            achieved_slack = None
            if spec.budget is not None:
                if makespan > spec.budget + _BUDGET_TOL:
                    return
                achieved_slack = max(0.0, spec.budget - makespan)
                if spec.eps:
                    f = cost - spec.eps * achieved_slack / spec.objective_range
        if f < self.best_f - 0.0:
            self.best_f = f
            self.best = {
                "chosen": list(self.chosen),
                "arcs": fixed + dirs,
                "makespan": makespan,
                "cost": cost,
                "slack": achieved_slack,
            }

    # -- materialization ---------------------------------------------

    def materialize(self) -> tuple[ScheduleSolution, ObjectiveValues]:
        assert self.best is not None
        ctx = self.ctx
        instance = ctx.instance
        n = ctx.n
        X = np.zeros((n, instance.skill_count, len(instance.resources)), dtype=np.int8)
        for idx, cand_idx in enumerate(self.best["chosen"]):
            u = ctx.acts[idx]
            for skill, res in ctx.candidates[idx][cand_idx]:
                X[u, skill - 1, res - 1] = 1
        Z = np.zeros((n, n), dtype=np.int8)
        for u, v in self.best["arcs"]:
            Z[u, v] = 1
        solution = tighten_starts(instance, X, Z)
        return solution, evaluate(instance, solution)


def solve(
    instance: ProjectInstance, spec: SubproblemSpec, limits: SolveLimits | None = None
) -> SolveResult:
    """Prove the optimum of ``spec`` by depth-first branch and bound.

    With a budget ``e`` on the secondary objective and a nonzero ``eps``,
    the optimized quantity is primary - eps * slack / objective_range
    with slack = e - secondary, i.e. ties in the primary objective are
    broken toward larger budget slack.  Returns a timeout status with
    the incumbent when a limit is hit.
    """
    limits = limits or SolveLimits()
    started = time.perf_counter()
    ctx = _Context(instance)
    bb = _BranchAndBound(ctx, spec, limits)
    if all(ctx.candidates[idx] for idx in range(len(ctx.acts))):
        bb.run()
    wall = time.perf_counter() - started
    if bb.best is None:
        status = "timeout" if bb.timed_out else "infeasible"
        return SolveResult(status, None, None, None, bb.nodes, wall)
    solution, objectives = bb.materialize()
    status = "timeout" if bb.timed_out else "optimal"
    return SolveResult(
        status=status,
        solution=solution,
        objectives=objectives,
        slack=bb.best["slack"],
        nodes_explored=bb.nodes,
        wall_time=time.perf_counter() - started,
    )


class InfeasibleProblemError(ValueError):
    """The instance admits no assignment meeting its requirements."""


@dataclass(frozen=True)
class LexOutcome:
    """One payoff-table row with the solve that produced it."""

    objectives: ObjectiveValues
    result: SolveResult
    statuses: tuple[str, str]


def lexicographic_outcome(
    instance: ProjectInstance,
    order: tuple[str, str] = ("makespan", "cost"),
    limits: SolveLimits | None = None,
) -> LexOutcome:
    """Optimize ``order[0]``, then ``order[1]`` with the first held at its optimum."""
    first, second = order
    if {first, second} != {"makespan", "cost"}:
        raise ValueError(f"order must name makespan and cost, got {order!r}")
    stage1 = solve(instance, SubproblemSpec(primary=first), limits)
    if stage1.objectives is None:
        raise InfeasibleProblemError(
            f"no feasible solution while optimizing {first} (status {stage1.status})"
        )
    first_value = getattr(stage1.objectives, first)
    stage2 = solve(instance, SubproblemSpec(primary=second, budget=first_value), limits)
    if stage2.objectives is None:
        # The stage-1 incumbent remains a witness under the stage-2 budget.
        stage2 = stage1
    return LexOutcome(
        objectives=stage2.objectives,
        result=stage2,
        statuses=(stage1.status, stage2.status),
    )


def lexicographic_optimum(
    instance: ProjectInstance,
    order: tuple[str, str] = ("makespan", "cost"),
    limits: SolveLimits | None = None,
) -> ObjectiveValues:
    return lexicographic_outcome(instance, order, limits).objectives


def brute_force_front(instance: ProjectInstance) -> "ParetoFront":
    """Exhaustive bi-objective front for guard-rail instances.

    Enumerates every assignment satisfying the skill requirements, every
    orientation of every resource-sharing pair, completes start times
    through :func:`~msrcpspr.schedule.tighten_starts`, and keeps the
    nondominated (makespan, cost) pairs.  Refuses instances beyond
    6 executable activities, 4 resources or 3 skills.
    """
    from .pareto import ParetoFront, ParetoPoint, PayoffTable, dominance_filter

    executables = list(instance.executable_ids)
    if len(executables) > GUARD_MAX_ACTIVITIES:
        raise GuardRailError(f"{len(executables)} executable activities > {GUARD_MAX_ACTIVITIES}")
    if len(instance.resources) > GUARD_MAX_RESOURCES:
        raise GuardRailError(f"{len(instance.resources)} resources > {GUARD_MAX_RESOURCES}")
    if instance.skill_count > GUARD_MAX_SKILLS:
        raise GuardRailError(f"{instance.skill_count} skills > {GUARD_MAX_SKILLS}")

    n = instance.n_nodes
    per_activity = [enumerate_assignments(instance, i) for i in executables]
    if any(not options for options in per_activity):
        return ParetoFront(
            points=(),
            payoff=None,
            grid_count=0,
            diagnosis="some activity has no feasible assignment",
        )

    points: list[ParetoPoint] = []
    for combo in itertools.product(*per_activity):
        X = np.zeros((n, instance.skill_count, len(instance.resources)), dtype=np.int8)
        users: dict[int, list[int]] = {}
        for act_id, pairs in zip(executables, combo):
            for skill, res in pairs:
                X[act_id - 1, skill - 1, res - 1] = 1
                users.setdefault(res, []).append(act_id - 1)
        sharing = sorted(
            {
                (min(a, b), max(a, b))
                for nodes in users.values()
                for a, b in itertools.combinations(nodes, 2)
            }
        )
        for orientation in itertools.product((0, 1), repeat=len(sharing)):
            Z = np.zeros((n, n), dtype=np.int8)
            for (i, j), flip in zip(sharing, orientation):
                if flip:
                    Z[j, i] = 1
                else:
                    Z[i, j] = 1
            try:
                solution = tighten_starts(instance, X, Z)
            except (CycleError, InstabilityError):
                continue
            objectives = evaluate(instance, solution)
            points.append(
                ParetoPoint(
                    makespan=objectives.makespan,
                    cost=objectives.cost,
                    grid_index=None,
                    solution=solution,
                )
            )
    front_points = dominance_filter(points)
    if not front_points:
        return ParetoFront(
            points=(), payoff=None, grid_count=0, diagnosis="no feasible solution"
        )
    payoff = PayoffTable(
        makespan_pis=front_points[0].makespan,
        makespan_nis=front_points[-1].makespan,
        cost_pis=front_points[-1].cost,
        cost_nis=front_points[0].cost,
    )
    return ParetoFront(points=tuple(front_points), payoff=payoff, grid_count=0)
