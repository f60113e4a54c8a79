"""Comparator networks simulated on POPS

A comparator stage [i1:j1] ... [ik:jk] with disjoint endpoints is the
involution i_r <-> j_r (identity elsewhere); routing it offline lets both
endpoints see each other's record, after which min(i, j) keeps the smaller
key and max(i, j) the larger. Batcher's odd-even merge sort supplies the
stages.
"""

import functools
import logging
from dataclasses import dataclass
from typing import Any, List, NamedTuple, Sequence, Tuple

import numpy as np

from app.models.network import NetworkConfig
from app.models.report import RunStats
from app.services.offline_router import build_offline_schedule, compile_schedule, execute_compiled
from app.utils.exceptions import DomainError, InvariantViolation, PlanContractError, UnsupportedConfigError
from app.utils.validators import validate_permutation, validate_power_of_two

logger = logging.getLogger(__name__)


class Comparator(NamedTuple):
    """[i:j] puts the smaller of positions i, j at min(i, j)"""

    i: int
    j: int


ComparatorStage = Tuple[Comparator, ...]


class KeyedRecord(NamedTuple):
    key: int
    payload: Any = None


@dataclass(frozen=True)
class ComparatorNetwork:
    """Ordered sequence of comparator stages on n wires"""

    n: int
    stages: Tuple[ComparatorStage, ...]

    def __post_init__(self):
        for stage in self.stages:
            check_stage(stage, self.n)

    @property
    def depth(self) -> int:
        return len(self.stages)

    @property
    def size(self) -> int:
        return sum(len(stage) for stage in self.stages)

    def to_lists(self) -> List[List[List[int]]]:
        """JSON-friendly stage lists"""
        return [[[c.i, c.j] for c in stage] for stage in self.stages]


def check_stage(stage: Sequence[Comparator], n: int) -> None:
    """
    Raises:
        PlanContractError: If comparators overlap, are degenerate or out of range
    """
    seen = set()
    for c in stage:
        if c.i == c.j or not (0 <= c.i < n and 0 <= c.j < n):
            raise PlanContractError(f"Illegal comparator [{c.i}:{c.j}] on {n} wires")
        if c.i in seen or c.j in seen:
            raise PlanContractError(f"Comparators of a stage overlap at [{c.i}:{c.j}]")
        seen.update((c.i, c.j))


def batcher_network(n: int) -> ComparatorNetwork:
    """
    Batcher's odd-even merge sort on n = 2^k wires, one stage per (p, k) pass

    Returns:
        Network with log n (log n + 1) / 2 stages

    Raises:
        DomainError: If n is not a power of two >= 2
    """
    validate_power_of_two("n", n, minimum=2)
    stages = []
    p = 1
    while p < n:
        k = p
        while k >= 1:
            stage = []
            for j in range(k % p, n - k, 2 * k):
                for i in range(min(k - 1, n - j - k - 1) + 1):
                    if (i + j) // (2 * p) == (i + j + k) // (2 * p):
                        stage.append(Comparator(i + j, i + j + k))
            stages.append(tuple(stage))
            k //= 2
        p *= 2
    return ComparatorNetwork(n=n, stages=tuple(stages))


def apply_network(network: ComparatorNetwork, values: np.ndarray) -> np.ndarray:
    """In-memory comparator evaluation along the last axis (test oracle)"""
    out = np.array(values, copy=True)
    for stage in network.stages:
        if not stage:
            continue
        lo = np.array([min(c) for c in stage])
        hi = np.array([max(c) for c in stage])
        a, b = out[..., lo], out[..., hi]
        out[..., lo] = np.minimum(a, b)
        out[..., hi] = np.maximum(a, b)
    return out


def sorts_all_zero_one(network: ComparatorNetwork) -> bool:
    """Exhaustive zero-one check; only practical for small n"""
    if network.n > 20:
        raise DomainError(f"Zero-one exhaustive check is limited to 20 wires, got {network.n}")
    inputs = (np.arange(1 << network.n)[:, None] >> np.arange(network.n)) & 1
    result = apply_network(network, inputs)
    return bool(np.all(np.diff(result, axis=1) >= 0))


def _involution(stage: ComparatorStage, n: int) -> np.ndarray:
    perm = np.arange(n, dtype=np.int64)
    for c in stage:
        perm[c.i], perm[c.j] = c.j, c.i
    return perm


class StageProgram:
    """A comparator stage compiled into offline-routing slot plans"""

    def __init__(self, stage: ComparatorStage, cfg: NetworkConfig):
        check_stage(stage, cfg.n)
        self.cfg = cfg
        self.stage = stage
        self.lo = np.array([min(c) for c in stage], dtype=np.int64)
        self.hi = np.array([max(c) for c in stage], dtype=np.int64)
        self.plans = compile_schedule(build_offline_schedule(_involution(stage, cfg.n), cfg)) if stage else []

    @property
    def slots(self) -> int:
        return len(self.plans)

    def run(self, order: np.ndarray, keys: np.ndarray) -> np.ndarray:
        """
        Exchange records over the network and apply the comparators

        Args:
            order: order[pos] = index of the record held by processor pos
            keys: Key of every record

        Returns:
            The new order array
        """
        if not self.stage:
            return order
        holder, _ = execute_compiled(self.cfg, self.plans)
        incoming = np.empty_like(order)
        incoming[holder] = order
        lo_own, hi_own = order[self.lo], order[self.hi]
        lo_seen, hi_seen = incoming[self.lo], incoming[self.hi]
        if np.any(lo_seen != hi_own) or np.any(hi_seen != lo_own):
            raise InvariantViolation("Comparator endpoints did not exchange their records")
        swap = keys[lo_own] > keys[lo_seen]
        new = order.copy()
        new[self.lo] = np.where(swap, lo_seen, lo_own)
        new[self.hi] = np.where(swap, hi_seen, hi_own)
        return new


def simulate_stage(stage: Sequence[Comparator], records: Sequence[KeyedRecord], cfg: NetworkConfig) -> Tuple[List[KeyedRecord], int]:
    """
    Simulate one comparator stage on POPS(d, g)

    Args:
        stage: Comparators with disjoint endpoints
        records: One record per processor
        cfg: Network configuration

    Returns:
        (records after the stage, slots consumed): 0 for an empty stage,
        1 when d = 1, 2 * ceil(d / g) otherwise

    Raises:
        PlanContractError: If comparators overlap
    """
    if len(records) != cfg.n:
        raise DomainError(f"Expected {cfg.n} records, got {len(records)}")
    program = StageProgram(tuple(Comparator(*c) for c in stage), cfg)
    keys = np.array([r.key for r in records], dtype=np.int64)
    order = program.run(np.arange(cfg.n, dtype=np.int64), keys)
    return [records[k] for k in order.tolist()], program.slots


class PopsSorter:
    """A comparator network compiled for one POPS configuration"""

    def __init__(self, network: ComparatorNetwork, cfg: NetworkConfig):
        if network.n != cfg.n:
            raise DomainError(f"Network has {network.n} wires but {cfg} has {cfg.n} processors")
        self.network = network
        self.cfg = cfg
        self.programs = [StageProgram(stage, cfg) for stage in network.stages]
        logger.info(f"Compiled {network.depth}-stage network for {cfg}")

    @property
    def slots(self) -> int:
        return sum(p.slots for p in self.programs)

    def sort_keys(self, keys: np.ndarray) -> Tuple[np.ndarray, int]:
        """Sort; returns order (order[pos] = input index) and slots used"""
        order = np.arange(self.cfg.n, dtype=np.int64)
        for program in self.programs:
            order = program.run(order, keys)
        return order, self.slots


def _check_sorting_config(cfg: NetworkConfig) -> None:
    if cfg.d != cfg.g:
        raise UnsupportedConfigError(f"Sorting on POPS needs d == g, got {cfg}")
    validate_power_of_two("g", cfg.g, minimum=2)


@functools.lru_cache(maxsize=16)
def get_sorter(cfg: NetworkConfig) -> PopsSorter:
    """Batcher sorter for POPS(g, g), compiled once per configuration"""
    _check_sorting_config(cfg)
    return PopsSorter(batcher_network(cfg.n), cfg)


def sort_on_pops(records: Sequence[KeyedRecord], cfg: NetworkConfig) -> Tuple[List[KeyedRecord], int]:
    """
    Sort g*g records on POPS(g, g) with Batcher's network

    Returns:
        (records in nondecreasing key order by processor index, slot count)

    Raises:
        UnsupportedConfigError: If d != g
        DomainError: If g is not a power of two or the record count is not n
    """
    _check_sorting_config(cfg)
    if len(records) != cfg.n:
        raise DomainError(f"Expected {cfg.n} records, got {len(records)}")
    keys = np.array([r.key for r in records], dtype=np.int64)
    order, slots = get_sorter(cfg).sort_keys(keys)
    return [records[k] for k in order.tolist()], slots


def route_by_sorting(perm, cfg: NetworkConfig) -> RunStats:
    """
    Route perm by sorting packets on their destination

    Raises:
        UnsupportedConfigError: If d != g
        PermutationValidationError: If perm is not a bijection
        InvariantViolation: If a packet ends away from its destination
    """
    _check_sorting_config(cfg)
    perm = validate_permutation(perm, cfg.n)
    sorter = get_sorter(cfg)
    order, slots = sorter.sort_keys(perm)
    # processor j must now hold the packet whose destination is j
    if not np.array_equal(perm[order], np.arange(cfg.n)):
        raise InvariantViolation(f"Route by sorting misplaced packets on {cfg}")
    logger.info(f"Routed {cfg.n} packets by sorting on {cfg} in {slots} slots")
    return RunStats(
        router="sorting",
        n=cfg.n,
        d=cfg.d,
        g=cfg.g,
        iterations=sorter.network.depth,
        slots=slots,
        delivered=cfg.n,
    )


def sorting_slot_count(cfg: NetworkConfig) -> int:
    """4 log^2 g + 2 log g, the slot count of sort_on_pops on POPS(g, g)"""
    _check_sorting_config(cfg)
    log_g = cfg.g.bit_length() - 1
    return 4 * log_g * log_g + 2 * log_g

