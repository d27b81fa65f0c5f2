"""Bi-objective multi-skill project scheduling with unreliable resources.

Exact makespan/cost optimization where every resource is an M/M/1
station subject to breakdowns, Pareto enumeration through the augmented
epsilon-constraint grid, and VIKOR compromise ranking of the front.
"""

from .instance import (
    Activity,
    ParseError,
    PartialInstance,
    ProjectInstance,
    ResourceProfile,
    ValidationError,
    default_extension,
    instance_from_files,
    load_extension,
    parse_psplib,
    read_psplib,
    scale_reliability,
    serialize_psplib,
    skill_coverage_issues,
    validate,
)
from .pareto import (
    GridRecord,
    ParetoFront,
    ParetoPoint,
    PayoffTable,
    dominance_filter,
    enumerate_front,
    front_csv,
    plain_epsilon_front,
)
from .queueing import (
    InstabilityError,
    QueueOperatingPoint,
    ReliabilityParams,
    SimEstimate,
    critical_arrival_rate,
    simulate_queue,
    waiting_time,
)
from .schedule import (
    CycleError,
    GanttRow,
    ObjectiveValues,
    ScheduleSolution,
    Violation,
    check_feasibility,
    evaluate,
    gantt_csv,
    gantt_svg,
    tighten_starts,
    to_gantt,
)
from .solver import (
    GuardRailError,
    InfeasibleProblemError,
    SolveLimits,
    SolveResult,
    SubproblemSpec,
    brute_force_front,
    enumerate_assignments,
    lexicographic_optimum,
    lexicographic_outcome,
    solve,
)
from .vikor import VikorRanking, rank, ranking_csv, select_compromise

__version__ = "0.1.0"

__all__ = [
    "Activity",
    "CycleError",
    "GanttRow",
    "GridRecord",
    "GuardRailError",
    "InfeasibleProblemError",
    "InstabilityError",
    "ObjectiveValues",
    "ParetoFront",
    "ParetoPoint",
    "ParseError",
    "PartialInstance",
    "PayoffTable",
    "ProjectInstance",
    "QueueOperatingPoint",
    "ReliabilityParams",
    "ResourceProfile",
    "ScheduleSolution",
    "SimEstimate",
    "SolveLimits",
    "SolveResult",
    "SubproblemSpec",
    "ValidationError",
    "VikorRanking",
    "Violation",
    "brute_force_front",
    "check_feasibility",
    "critical_arrival_rate",
    "default_extension",
    "dominance_filter",
    "enumerate_assignments",
    "enumerate_front",
    "evaluate",
    "front_csv",
    "gantt_csv",
    "gantt_svg",
    "instance_from_files",
    "lexicographic_optimum",
    "lexicographic_outcome",
    "load_extension",
    "parse_psplib",
    "plain_epsilon_front",
    "rank",
    "ranking_csv",
    "read_psplib",
    "scale_reliability",
    "select_compromise",
    "serialize_psplib",
    "simulate_queue",
    "skill_coverage_issues",
    "solve",
    "tighten_starts",
    "to_gantt",
    "validate",
    "waiting_time",
]
