"""Waiting times of a single server subject to random breakdowns.

Every renewable resource is modelled as an M/M/1 station whose server
breaks down at rate ``disruption_rate`` in any state (busy or idle), is
repaired at rate ``retrieval_rate``, and serves at rate ``service_rate``
while operational.  Repairs are work-conserving: an interrupted job
resumes where it stopped.  The closed-form mean time in system is
evaluated by :func:`waiting_time`; :func:`simulate_queue` runs an exact
event-driven simulation of the same dynamics and acts as the independent
cross-check for the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

_WARMUP_FRACTION = 0.1
_BATCH_COUNT = 30
_CHUNK = 1 << 14


@dataclass(frozen=True)
class ReliabilityParams:
    """Breakdown/repair/service rates of one resource, all per time unit."""

    disruption_rate: float
    retrieval_rate: float
    service_rate: float


@dataclass(frozen=True)
class QueueOperatingPoint:
    """A resource together with the arrival rate it currently sees."""

    arrival_rate: float
    params: ReliabilityParams

    def is_stable(self) -> bool:
        return self.arrival_rate < critical_arrival_rate(self.params)


@dataclass(frozen=True)
class SimEstimate:
    """Batch-means estimate of the mean time in system."""

    mean_wait: float
    half_width: float
    samples: int


class InstabilityError(ValueError):
    """Raised when an operating point sits at or above the critical rate."""

    def __init__(self, arrival_rate: float, critical_rate: float, resource: int | None = None):
        self.arrival_rate = arrival_rate
        self.critical_rate = critical_rate
        self.resource = resource
        where = f" at resource {resource}" if resource is not None else ""
        super().__init__(
            f"unstable operating point{where}: arrival rate {arrival_rate:g} "
            f">= critical rate {critical_rate:g}"
        )


def critical_arrival_rate(params: ReliabilityParams) -> float:
    """Largest arrival rate with a finite mean wait (exclusive bound)."""
    r, v, mu = params.retrieval_rate, params.disruption_rate, params.service_rate
    return r * mu / (r + v)


def waiting_time(point: QueueOperatingPoint) -> float:
    """Mean time in system at a stable operating point.

    With the disruption rate at zero this reduces to the classic M/M/1
    sojourn time ``1 / (service_rate - arrival_rate)``.  Strictly
    increasing in the arrival and disruption rates, strictly decreasing
    in the retrieval and service rates, and divergent as the arrival
    rate approaches the critical rate.
    """
    lam = point.arrival_rate
    if lam < 0:
        raise ValueError(f"arrival rate must be >= 0, got {lam!r}")
    r = point.params.retrieval_rate
    v = point.params.disruption_rate
    mu = point.params.service_rate
    denominator = (r + v) * (r * mu - r * lam - lam * v)
    if denominator <= 0.0:
        raise InstabilityError(lam, critical_arrival_rate(point.params))
    return ((r + v) ** 2 + mu * v) / denominator


def _cumulative_exponentials(rng: np.random.Generator, rate: float, target: float) -> np.ndarray:
    """Strictly increasing exponential(rate) epochs whose last entry exceeds target."""
    blocks: list[np.ndarray] = []
    total = 0.0
    while total <= target:
        block = rng.exponential(1.0 / rate, _CHUNK)
        blocks.append(block)
        total += float(block.sum())
    return np.cumsum(np.concatenate(blocks))


def _environment(
    rng: np.random.Generator, disruption: float, retrieval: float, operational_needed: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Alternating up/down trajectory covering ``operational_needed`` up-time.

    Returns (up_starts, up_lengths, op_offsets): the i-th up period spans
    real time [up_starts[i], up_starts[i] + up_lengths[i]) and begins at
    cumulative operational time op_offsets[i].  The server starts up at 0.
    """
    ups: list[np.ndarray] = []
    downs: list[np.ndarray] = []
    up_total = 0.0
    while up_total <= operational_needed:
        up_block = rng.exponential(1.0 / disruption, _CHUNK)
        down_block = rng.exponential(1.0 / retrieval, _CHUNK)
        ups.append(up_block)
        downs.append(down_block)
        up_total += float(up_block.sum())
    up_lengths = np.concatenate(ups)
    down_lengths = np.concatenate(downs)
    cycle = up_lengths + down_lengths
    up_starts = np.concatenate(([0.0], np.cumsum(cycle)[:-1]))
    op_offsets = np.concatenate(([0.0], np.cumsum(up_lengths)[:-1]))
    return up_starts, up_lengths, op_offsets


def _departure_times(
    arrivals: np.ndarray,
    services: np.ndarray,
    up_starts: np.ndarray,
    up_lengths: np.ndarray,
    op_offsets: np.ndarray,
) -> np.ndarray:
    """Exact FIFO departure instants for given arrivals/services/breakdowns.

    Works on the operational clock (cumulative server up-time): mapping
    arrivals onto that clock turns the halted-server system into an
    ordinary single-server queue, whose departure epochs follow the
    Lindley recursion; mapping back yields real departure times.
    """
    idx = np.searchsorted(up_starts, arrivals, side="right") - 1
    op_arrivals = op_offsets[idx] + np.minimum(arrivals - up_starts[idx], up_lengths[idx])

    # delta_n = max(alpha_n, delta_{n-1}) + s_n, unrolled to a running max.
    service_cum = np.cumsum(services)
    op_departures = service_cum + np.maximum.accumulate(op_arrivals - (service_cum - services))

    op_ends = op_offsets + up_lengths
    j = np.searchsorted(op_ends, op_departures, side="left")
    return up_starts[j] + (op_departures - op_offsets[j])


def simulate_queue(point: QueueOperatingPoint, horizon: float, seed: int) -> SimEstimate:
    """Simulate the breakdown queue and estimate the mean time in system.

    Poisson arrivals, exponential services, breakdowns arriving at the
    disruption rate in every server state, exponential repairs, service
    halted while down and resumed afterwards.  The estimate uses
    non-overlapping batch means (30 batches, 95% confidence) after
    discarding the first 10% of customers.  Deterministic for a fixed
    seed.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon!r}")
    if not point.is_stable():
        raise InstabilityError(point.arrival_rate, critical_arrival_rate(point.params))
    lam = point.arrival_rate
    if lam <= 0:
        raise ValueError("simulation needs a positive arrival rate")
    params = point.params

    rng = np.random.default_rng(seed)
    epochs = _cumulative_exponentials(rng, lam, horizon)
    arrivals = epochs[epochs <= horizon]
    if arrivals.size == 0:
        raise ValueError("no arrivals within the horizon; increase it")
    services = rng.exponential(1.0 / params.service_rate, arrivals.size)

    operational_needed = horizon + float(services.sum()) + 1.0
    up_starts, up_lengths, op_offsets = _environment(
        rng, params.disruption_rate, params.retrieval_rate, operational_needed
    )
    departures = _departure_times(arrivals, services, up_starts, up_lengths, op_offsets)
    sojourns = departures - arrivals

    warmup = int(_WARMUP_FRACTION * sojourns.size)
    kept = sojourns[warmup:]
    if kept.size < _BATCH_COUNT:
        raise ValueError(
            f"horizon too short: {kept.size} post-warmup samples, need >= {_BATCH_COUNT}"
        )
    batch_size = kept.size // _BATCH_COUNT
    used = kept[: _BATCH_COUNT * batch_size].reshape(_BATCH_COUNT, batch_size)
    batch_means = used.mean(axis=1)
    quantile = stats.t.ppf(0.975, _BATCH_COUNT - 1)
    half_width = float(quantile * batch_means.std(ddof=1) / math.sqrt(_BATCH_COUNT))
    return SimEstimate(
        mean_wait=float(batch_means.mean()),
        half_width=half_width,
        samples=_BATCH_COUNT * batch_size,
    )
