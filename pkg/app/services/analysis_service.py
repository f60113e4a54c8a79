"""Conflict graphs, degree schedules, baseline formulas and run statistics"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from app.models.network import NetworkConfig
from app.models.report import AggregateStats, MetricSummary, RunStats
from app.services.slot_engine import deltas, groups_of
from app.utils.exceptions import DomainError
from app.utils.validators import validate_power_of_two

logger = logging.getLogger(__name__)

DEFAULT_C_EPS = 4.0


@dataclass(frozen=True)
class ConflictGraph:
    """
    Bipartite multigraph: one edge per pending packet, from its source group
    to the temporary destination group of its destination
    """

    cfg: NetworkConfig
    edges: np.ndarray  # rows (packet id, source group, temporary destination group)
    left_degrees: np.ndarray
    right_degrees: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def max_left_degree(self) -> int:
        return int(self.left_degrees.max(initial=0))

    @property
    def max_right_degree(self) -> int:
        return int(self.right_degrees.max(initial=0))

    @property
    def max_degree(self) -> int:
        return max(self.max_left_degree, self.max_right_degree)


def build_conflict_graph(pending: np.ndarray, perm: np.ndarray, cfg: NetworkConfig) -> ConflictGraph:
    """
    Build the conflict graph of the pending packets

    Args:
        pending: Ids of the packets still to be routed (packet i sits at processor i)
        perm: Destination of every packet
        cfg: Network configuration

    Returns:
        ConflictGraph with its degree vectors
    """
    ids = np.asarray(pending, dtype=np.int64)
    src = groups_of(ids, cfg)
    tmp = deltas(np.asarray(perm, dtype=np.int64)[ids], cfg)
    return ConflictGraph(
        cfg=cfg,
        edges=np.stack([ids, src, tmp], axis=1) if ids.size else np.empty((0, 3), dtype=np.int64),
        left_degrees=np.bincount(src, minlength=cfg.g),
        right_degrees=np.bincount(tmp, minlength=cfg.g),
    )


def phase1_steps(cfg: NetworkConfig, c_eps: float = DEFAULT_C_EPS) -> int:
    """Number of thinned steps, ceil(c_eps * (d/g - 1)); zero when d <= g"""
    if cfg.d <= cfg.g:
        return 0
    return math.ceil(c_eps * (cfg.d / cfg.g - 1))


def schedule_degree_bound(s: int, cfg: NetworkConfig, c_eps: float = DEFAULT_C_EPS) -> float:
    """
    Bound on the conflict-graph degree at the start of step s: d - g(s-1)/c_eps

    Raises:
        DomainError: If s < 1
    """
    if s < 1:
        raise DomainError(f"Step index must be >= 1, got {s}")
    return cfg.d - cfg.g * (s - 1) / c_eps


def baseline_ds_slots(cfg: NetworkConfig) -> int:
    """
    Slot count of the deterministic sorting-based router used as baseline:
    4(d/g)log^2 g + 2(d/g)log g + 21 d/g + 3 log g + 7

    Returns:
        The formula value, rounded up when d/g makes it fractional

    Raises:
        DomainError: If g is not a power of two
    """
    log_g = validate_power_of_two("g", cfg.g)
    ratio = Fraction(cfg.d, cfg.g)
    value = 4 * ratio * log_g**2 + 2 * ratio * log_g + 21 * ratio + 3 * log_g + 7
    return math.ceil(value)


def summarize(values: Iterable[float]) -> MetricSummary:
    """
    Mean, population standard deviation and maximum

    Raises:
        DomainError: If values is empty
    """
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise DomainError("Cannot summarize an empty sequence of runs")
    return MetricSummary(mean=float(arr.mean()), sigma=float(arr.std()), max=float(arr.max()))


def aggregate_stats(runs: Sequence[RunStats]) -> AggregateStats:
    """
    Cross-run statistics of iterations and slots

    Raises:
        DomainError: If runs is empty
    """
    if not runs:
        raise DomainError("aggregate_stats needs at least one run")
    extra = {}
    first_steps = [r.per_step[0] for r in runs if r.per_step]
    if first_steps:
        extra["first_step_deliveries"] = summarize(m.deliveries for m in first_steps)
    return AggregateStats(
        runs=len(runs),
        iterations=summarize(r.iterations for r in runs),
        slots=summarize(r.slots for r in runs),
        extra=extra,
    )


def degree_bound_exceedance(runs: Sequence[RunStats], cfg: NetworkConfig, c_eps: float = DEFAULT_C_EPS) -> float:
    """
    Fraction of runs in which some thinned step started with an observed
    conflict-graph degree above schedule_degree_bound(s)
    """
    if not runs:
        raise DomainError("degree_bound_exceedance needs at least one run")
    last = phase1_steps(cfg, c_eps) + 1
    exceeded = 0
    for run in runs:
        for m in run.per_step:
            if m.step > last:
                break
            if max(m.max_left_degree, m.max_right_degree) > schedule_degree_bound(m.step, cfg, c_eps):
                exceeded += 1
                break
    fraction = exceeded / len(runs)
    logger.debug(f"Degree bound exceeded in {exceeded}/{len(runs)} runs on {cfg}")
    return fraction
