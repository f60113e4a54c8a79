"""Experiment runs, sweeps and verification suites"""

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Tuple

from app.models.experiment import ExperimentSpec, LossPolicy, PermSource, Protocol
from app.models.network import NetworkConfig
from app.models.report import ExperimentReport, ReportRow, RunStats, VerifyCheck, VerifyReport
from app.services.analysis_service import aggregate_stats
from app.services.offline_router import route_offline
from app.services.permutation_service import generate_permutation
from app.services.randomized_router import ParticipationSchedule, route_randomized
from app.services.rng_service import derive_run_seed, random_keys
from app.services.sorting_service import (
    KeyedRecord,
    batcher_network,
    route_by_sorting,
    sort_on_pops,
    sorting_slot_count,
    sorts_all_zero_one,
)
from app.utils.exceptions import InvariantViolation, PopsError, UnknownSuiteError

logger = logging.getLogger(__name__)

# POPS(1, n) offline routing is checked on every permutation up to this n
EXHAUSTIVE_MAX_N = 8


def _conflict_columns(protocol: Protocol, slot_conflicts: List[int]) -> Tuple[int, int, int, int]:
    """(slot 1, slot 2, ack slots, delivery slot) conflict totals"""
    c = slot_conflicts + [0] * (protocol.slots_per_step - len(slot_conflicts))
    if protocol is Protocol.PAPER5:
        return c[0], c[1], c[2] + c[3], c[4]
    return c[0], c[1], c[3] + c[4] + c[5], c[2]


def run_single(spec: ExperimentSpec, index: int) -> Tuple[RunStats, ReportRow]:
    """Run the index-th seeded run of an experiment"""
    cfg = NetworkConfig(spec.d, spec.g)
    run_seed = derive_run_seed(spec.seed, index)
    perm = generate_permutation(spec.perm_source, cfg, seed=run_seed, path=spec.perm_path)
    sched = ParticipationSchedule.for_config(cfg, spec.c_eps, spec.schedule)

    start = time.perf_counter()
    stats = route_randomized(
        perm,
        cfg,
        spec.protocol,
        sched,
        run_seed,
        loss_policy=spec.loss_policy,
        immediate_exit=spec.immediate_exit,
        max_steps=spec.max_steps,
    )
    wall_ms = (time.perf_counter() - start) * 1000

    s1, s2, ack, delivery = _conflict_columns(spec.protocol, stats.slot_conflicts)
    row = ReportRow(
        n=cfg.n,
        d=cfg.d,
        g=cfg.g,
        protocol=spec.protocol.value,
        seed_index=index,
        iterations=stats.iterations,
        slots=stats.slots,
        conflicts_s1=s1,
        conflicts_s2=s2,
        conflicts_ack=ack,
        conflicts_delivery=delivery,
        wall_ms=round(wall_ms, 3),
    )
    return stats, row


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """
    Execute spec.runs seeded runs and aggregate them

    Rows are ordered by seed index whatever order the workers finish in.
    """
    logger.info(
        f"Experiment on POPS({spec.d},{spec.g}): {spec.runs} runs, {spec.protocol.value}, "
        f"{spec.perm_source.value} permutations, seed {spec.seed}"
    )
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers, thread_name_prefix="run_worker") as pool:
            results = list(pool.map(lambda i: run_single(spec, i), range(spec.runs)))
    else:
        results = [run_single(spec, i) for i in range(spec.runs)]

    runs = [stats for stats, _ in results]
    rows = [row for _, row in results]
    aggregate = aggregate_stats(runs)
    logger.info(
        f"POPS({spec.d},{spec.g}) iterations mean {aggregate.iterations.mean:.2f}, "
        f"sigma {aggregate.iterations.sigma:.2f}, max {aggregate.iterations.max:.0f}"
    )
    return ExperimentReport(rows=rows, aggregate=aggregate, losses=sum(r.losses for r in runs))


def run_sweep(cells: List[Tuple[int, int]], base: ExperimentSpec) -> List[Tuple[ExperimentSpec, ExperimentReport]]:
    """Run the same experiment on every (d, g) cell"""
    results = []
    for d, g in cells:
        spec = base.model_copy(update={"d": d, "g": g})
        results.append((spec, run_experiment(spec)))
    return results


def engine_self_check() -> bool:
    """
    Route the reversal permutation on POPS(2,2) with all three routers

    Returns:
        True when every router delivers all packets without an invariant violation
    """
    cfg = NetworkConfig(2, 2)
    perm = generate_permutation(PermSource.REVERSAL, cfg)
    try:
        results = [
            route_randomized(perm, cfg, Protocol.REVERSAL6, ParticipationSchedule.for_config(cfg), 0),
            route_offline(perm, cfg)[1],
            route_by_sorting(perm, cfg),
        ]
    except PopsError as e:
        logger.error(f"Engine self-check failed: {e}")
        return False
    return all(r.delivered == cfg.n for r in results)


class _SuiteRecorder:
    def __init__(self, suite: str):
        self.report = VerifyReport(suite=suite, passed=True)

    def check(self, name: str, passed: bool, detail: str = "") -> None:
        self.report.checks.append(VerifyCheck(name=name, passed=passed, detail=detail))
        if not passed:
            self.report.violations += 1
            self.report.passed = False
            logger.warning(f"[verify {self.report.suite}] {name} failed: {detail}")

    def guard(self, name: str, action: Callable[[], Tuple[bool, str]]) -> None:
        try:
            passed, detail = action()
        except InvariantViolation as e:
            passed, detail = False, f"{e.code}: {e}"
        self.check(name, passed, detail)


def _suite_prop1(budget: int) -> VerifyReport:
    rec = _SuiteRecorder("prop1")
    for g in (2, 4, 8, 16, 32):
        cfg = NetworkConfig(g, g)

        def trials(cfg=cfg):
            bad = []
            for k in range(budget):
                seed = derive_run_seed(0x9001 + cfg.g, k)
                perm = generate_permutation(PermSource.UNIFORM, cfg, seed=seed)
                stats = route_randomized(perm, cfg, Protocol.PAPER5, seed=seed, loss_policy=LossPolicy.ABORT)
                for m in stats.per_step:
                    if any(m.conflicts[2:5]) or m.ack_mismatches:
                        bad.append((k, m.step))
            return not bad, f"{budget} runs, violations at {bad[:5]}"

        rec.guard(f"{cfg}: slots 3-5 conflict-free, delete iff delivered", trials)
    return rec.report


def _suite_offline(budget: int) -> VerifyReport:
    rec = _SuiteRecorder("offline")

    def expect(cfg: NetworkConfig, perm) -> bool:
        _, stats = route_offline(perm, cfg)
        expected = 1 if cfg.d == 1 else 2 * -(-cfg.d // cfg.g)
        return stats.slots == expected and not any(stats.slot_conflicts)

    for cfg in [NetworkConfig(2, 2)] + [NetworkConfig(1, n) for n in range(1, EXHAUSTIVE_MAX_N + 1)]:
        rec.guard(
            f"{cfg}: every permutation",
            lambda cfg=cfg: (all(expect(cfg, p) for p in itertools.permutations(range(cfg.n))), "exhaustive"),
        )
    for cfg in (NetworkConfig(4, 4), NetworkConfig(8, 2), NetworkConfig(2, 8)):
        rec.guard(
            f"{cfg}: random permutations",
            lambda cfg=cfg: (
                all(
                    expect(cfg, generate_permutation(PermSource.UNIFORM, cfg, seed=derive_run_seed(0x0FF, k)))
                    for k in range(budget)
                ),
                f"{budget} permutations",
            ),
        )
    return rec.report


def _suite_sorting(budget: int) -> VerifyReport:
    rec = _SuiteRecorder("sorting")
    for n in (2, 4, 8, 16):
        rec.check(f"batcher({n}) sorts every 0-1 input", sorts_all_zero_one(batcher_network(n)))

    cfg2 = NetworkConfig(2, 2)

    def zero_one_on_pops():
        for bits in itertools.product((0, 1), repeat=4):
            out, _ = sort_on_pops([KeyedRecord(b) for b in bits], cfg2)
            if [r.key for r in out] != sorted(bits):
                return False, f"input {bits}"
        return True, "16 inputs"

    rec.guard("POPS(2,2) sorts every 0-1 input", zero_one_on_pops)

    routes = max(1, budget // 10)

    for g in (4, 8):
        cfg = NetworkConfig(g, g)

        def random_vectors(cfg=cfg):
            for k in range(budget):
                keys = random_keys(derive_run_seed(0x5027 + cfg.g, k), cfg.n, bound=2000) - 1000
                out, slots = sort_on_pops([KeyedRecord(int(key)) for key in keys], cfg)
                if [r.key for r in out] != sorted(keys.tolist()) or slots != sorting_slot_count(cfg):
                    return False, f"slots {slots}"
            return True, f"{budget} vectors, {sorting_slot_count(cfg)} slots"

        def routing(cfg=cfg):
            for k in range(routes):
                perm = generate_permutation(PermSource.UNIFORM, cfg, seed=derive_run_seed(0x50F7, k))
                if route_by_sorting(perm, cfg).slots != sorting_slot_count(cfg):
                    return False, "slot count"
            return True, f"{routes} permutations"

        rec.guard(f"{cfg}: random vectors match reference sort", random_vectors)
        rec.guard(f"{cfg}: route by sorting", routing)
    return rec.report


def _suite_buffers(budget: int) -> VerifyReport:
    rec = _SuiteRecorder("buffers")
    for cfg, protocol in ((NetworkConfig(8, 8), Protocol.PAPER5), (NetworkConfig(16, 4), Protocol.REVERSAL6)):
        for immediate_exit, limit in ((False, 3), (True, 2)):

            def trials(cfg=cfg, protocol=protocol, immediate_exit=immediate_exit, limit=limit):
                peak = 0
                for k in range(budget):
                    seed = derive_run_seed(0xB0F, k)
                    perm = generate_permutation(PermSource.UNIFORM, cfg, seed=seed)
                    stats = route_randomized(perm, cfg, protocol, seed=seed, immediate_exit=immediate_exit)
                    peak = max(peak, max(m.max_buffer for m in stats.per_step))
                return peak <= limit, f"peak occupancy {peak}, bound {limit}"

            rec.guard(f"{cfg} {protocol.value} immediate_exit={immediate_exit}", trials)
    return rec.report


def _suite_exactly_once(budget: int) -> VerifyReport:
    rec = _SuiteRecorder("exactly-once")
    for g in (4, 16):
        cfg = NetworkConfig(4 * g, g)
        perm = generate_permutation(PermSource.STRESS, cfg)

        def reversal(cfg=cfg, perm=perm):
            for k in range(budget):
                stats = route_randomized(perm, cfg, Protocol.REVERSAL6, seed=k, loss_policy=LossPolicy.ABORT)
                if stats.duplicates or stats.delivered != cfg.n or stats.losses:
                    return False, f"seed {k}"
            return True, f"{budget} seeds"

        rec.guard(f"{cfg} reversal6 on stress input", reversal)

        losses = 0
        for k in range(budget):
            losses += route_randomized(perm, cfg, Protocol.PAPER5, seed=k, loss_policy=LossPolicy.REPAIR).losses
        rec.check(f"{cfg} paper5 reports LOSS_DETECTED", losses > 0, f"LOSS_DETECTED {losses} times over {budget} seeds")
    return rec.report


SUITES: Dict[str, Callable[[int], VerifyReport]] = {
    "prop1": _suite_prop1,
    "offline": _suite_offline,
    "sorting": _suite_sorting,
    "buffers": _suite_buffers,
    "exactly-once": _suite_exactly_once,
}

DEFAULT_BUDGETS: Dict[str, int] = {
    "prop1": 2000,
    "offline": 1000,
    "sorting": 10000,
    "buffers": 200,
    "exactly-once": 100,
}


def verify_suite(name: str, budget: Optional[int] = None) -> VerifyReport:
    """
    Run a named invariant suite

    Args:
        name: prop1, offline, sorting, buffers or exactly-once
        budget: Trials per configuration, DEFAULT_BUDGETS[name] when omitted

    Raises:
        UnknownSuiteError: If the suite does not exist
    """
    if name not in SUITES:
        raise UnknownSuiteError(f"Unknown verification suite {name!r}; choose from {', '.join(SUITES)}")
    budget = budget or DEFAULT_BUDGETS[name]
    logger.info(f"Running verification suite {name} with budget {budget}")
    try:
        report = SUITES[name](budget)
    except PopsError as e:
        report = VerifyReport(suite=name, passed=False, violations=1, note=f"{e.code}: {e}")
    logger.info(f"Suite {name}: {'passed' if report.passed else 'FAILED'} ({report.violations} violations)")
    return report
