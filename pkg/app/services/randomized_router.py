"""Randomized online permutation routing

Every pending packet is copied to a random intermediate group, then to its
temporary destination group dest mod g, then to its destination. Two step
protocols are offered:

    paper5     1 copy src -> intermediate      4 ack intermediate -> src (src deletes)
               2 copy intermediate -> temp     5 copy temp -> destination
               3 ack temp -> intermediate
    reversal6  1, 2 as above, 3 copy temp -> destination, then 4, 5, 6 walk the
               acknowledgement back over the reversed couplers; src deletes at 6

paper5 only guarantees exactly-once delivery for d == g. With d > g two
copies bound for the same (group, temporary group) pair can collide in slot 5
after both originals were deleted; this is reported as LOSS_DETECTED.

With d > g up to ceil(d/g) pending packets share one delivery coupler
c(group(dest), dest mod g), and two of them taking part in the same step never
both arrive. Once the schedule saturates at p = 1 such a pair would collide
forever, so a packet that fails a saturated step backs off: it takes part with
probability max(2^-f, 1/ceil(d/g)) after f such failures. For d == g the
floor is 1 and nothing changes.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.models.experiment import LossPolicy, Protocol, ScheduleMode
from app.models.network import MessageKind, NetworkConfig
from app.models.report import RunStats, StepMetrics
from app.services.analysis_service import DEFAULT_C_EPS, build_conflict_graph, phase1_steps
from app.services.rng_service import bernoulli_draws, uniform_groups
from app.services.slot_engine import NO_LISTEN, SlotOutcome, SlotPlan, execute_slot
from app.utils.exceptions import (
    InvariantViolation,
    PacketLossDetected,
    UnsupportedConfigError,
)
from app.utils.validators import validate_permutation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParticipationSchedule:
    """Coin bias law for the thinned first phase when d > g"""

    c_eps: float = DEFAULT_C_EPS
    phase1_steps: int = 0
    mode: ScheduleMode = ScheduleMode.FIXED

    @classmethod
    def for_config(
        cls,
        cfg: NetworkConfig,
        c_eps: float = DEFAULT_C_EPS,
        mode: ScheduleMode = ScheduleMode.FIXED,
    ) -> "ParticipationSchedule":
        return cls(c_eps=c_eps, phase1_steps=phase1_steps(cfg, c_eps), mode=mode)


def participation_probability(s: int, cfg: NetworkConfig, sched: ParticipationSchedule) -> float:
    """
    Probability that a pending packet takes part in step s

    Returns:
        min(1, g / (d - g(s-1)/c_eps)) during the first phase1_steps steps, else 1
    """
    if s < 1 or s > sched.phase1_steps:
        return 1.0
    remaining = cfg.d - cfg.g * (s - 1) / sched.c_eps
    if remaining <= cfg.g:
        return 1.0
    return cfg.g / remaining


@dataclass(frozen=True)
class Packet:
    """Read-only view of one packet of a routing instance"""

    id: int
    source: int
    dest: int
    temp_dest_group: int
    delivered: bool


class RoutingState:
    """
    Processor-local buffers of a routing instance, held as arrays

    Packet i starts at processor i and its original stays there until the
    source receives the final acknowledgement. resident[j] marks a delivered
    packet sitting in processor j.
    failures[i] counts the saturated steps packet i joined without being delivered.
    """

    def __init__(self, perm: np.ndarray, cfg: NetworkConfig, pending: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.perm = validate_permutation(perm, cfg.n)
        self.pending = np.ones(cfg.n, dtype=bool) if pending is None else pending.astype(bool).copy()
        self.deliveries = np.zeros(cfg.n, dtype=np.int64)
        self.resident = np.zeros(cfg.n, dtype=bool)
        self.failures = np.zeros(cfg.n, dtype=np.int64)
        self.step = 0
        self.slot = 0

    @classmethod
    def from_pending(cls, perm, cfg: NetworkConfig, pending_ids) -> "RoutingState":
        """State where only pending_ids still have to be routed"""
        mask = np.zeros(cfg.n, dtype=bool)
        mask[np.asarray(pending_ids, dtype=np.int64)] = True
        return cls(np.asarray(perm), cfg, pending=mask)

    @property
    def pending_count(self) -> int:
        return int(np.count_nonzero(self.pending))

    @property
    def done(self) -> bool:
        return not self.pending.any()

    def packet(self, i: int) -> Packet:
        self.cfg.check_processor(i)
        dest = int(self.perm[i])
        return Packet(
            id=i,
            source=i,
            dest=dest,
            temp_dest_group=dest % self.cfg.g,
            delivered=bool(self.deliveries[i] > 0),
        )


@dataclass
class StepReport:
    """What happened during one step"""

    metrics: StepMetrics
    outcomes: List[SlotOutcome] = field(default_factory=list, repr=False)
    participants: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    delivered: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    lost: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def _relay_listen(cfg: NetworkConfig) -> np.ndarray:
    """Processor x*d + a listens to c(x, a) for a < g; the rest stay silent"""
    within = np.arange(cfg.n, dtype=np.int64) % cfg.d
    return np.where(within < cfg.g, within, NO_LISTEN)


def _delivery_listen(cfg: NetworkConfig) -> np.ndarray:
    """Processor j listens to c(group(j), j mod g)"""
    return np.arange(cfg.n, dtype=np.int64) % cfg.g


def _listen_at(cfg: NetworkConfig, processors: np.ndarray, src_groups: np.ndarray) -> np.ndarray:
    listen = np.full(cfg.n, NO_LISTEN, dtype=np.int64)
    listen[processors] = src_groups
    return listen


def _received(outcome: SlotOutcome, processors: np.ndarray, packets: np.ndarray) -> np.ndarray:
    return outcome.received_packet[processors] == packets


def _occupancy(cfg: NetworkConfig, originals: np.ndarray, copies: np.ndarray, resident: np.ndarray) -> int:
    occupancy = originals.astype(np.int64) + resident.astype(np.int64)
    if copies.size:
        occupancy += np.bincount(copies, minlength=cfg.n)
    return int(occupancy.max(initial=0))


def run_step(
    state: RoutingState,
    protocol: Protocol,
    p: float | np.ndarray,
    seed: int,
    cfg: Optional[NetworkConfig] = None,
    *,
    loss_policy: LossPolicy = LossPolicy.REPAIR,
    immediate_exit: bool = False,
    intermediate: Optional[np.ndarray] = None,
) -> StepReport:
    """
    Execute one step of the randomized router

    Args:
        state: Routing state, updated in place
        protocol: paper5 or reversal6
        p: Participation probability, scalar or one value per processor
        seed: Run seed
        cfg: Optional configuration; defaults to state.cfg
        loss_policy: abort raises PacketLossDetected, repair requeues the lost packets
        immediate_exit: Delivered packets leave their destination after one slot
        intermediate: Optional forced intermediate group per packet id (scripted draws)

    Returns:
        StepReport with metrics, slot outcomes, delivered and lost packet ids

    Raises:
        PacketLossDetected: paper5 loss under the abort policy
        InvariantViolation: Buffer occupancy above its bound
    """
    cfg = cfg or state.cfg
    if cfg.d < cfg.g:
        raise UnsupportedConfigError(f"Randomized routing needs d >= g, got {cfg}")
    s = state.step + 1
    perm = state.perm

    pending_ids = np.flatnonzero(state.pending)
    graph = build_conflict_graph(pending_ids, perm, cfg)

    p_arr = np.asarray(p, dtype=np.float64)
    if p_arr.ndim == 0:
        p_pending = np.full(pending_ids.size, float(p_arr))
    else:
        p_pending = p_arr[pending_ids]
    if np.all(p_pending >= 1.0):
        part = pending_ids
    else:
        part = pending_ids[bernoulli_draws(seed, pending_ids, s, p_pending)]

    if intermediate is not None:
        r = np.asarray(intermediate, dtype=np.int64)[part]
    else:
        r = uniform_groups(seed, part, s, cfg.g)
    a = part // cfg.d
    dest = perm[part]
    t = dest % cfg.g
    headers = np.stack([part, dest, r, t], axis=1) if part.size else np.empty((0, 4), dtype=np.int64)
    relay = r * cfg.d + a
    holder = t * cfg.d + r

    relay_listen = _relay_listen(cfg)
    delivery_listen = _delivery_listen(cfg)
    outcomes: List[SlotOutcome] = []

    def slot(senders, dest_groups, kind, packets, hdr, listen) -> SlotOutcome:
        outcome = execute_slot(SlotPlan.from_arrays(cfg, senders, dest_groups, kind, packets, hdr, listen))
        outcomes.append(outcome)
        return outcome

    originals_before = state.pending.copy()
    resident_before = np.zeros(cfg.n, dtype=bool) if immediate_exit else state.resident.copy()

    # slot 1: source -> intermediate group
    out = slot(part, r, MessageKind.COPY, part, headers, relay_listen)
    s1 = _received(out, relay, part)
    buffer_peak = _occupancy(cfg, originals_before, relay[s1], resident_before)

    # slot 2: intermediate -> temporary destination group
    out = slot(relay[s1], t[s1], MessageKind.COPY, part[s1], headers[s1], relay_listen)
    s2_local = _received(out, holder[s1], part[s1])
    s2 = np.flatnonzero(s1)[s2_local]
    buffer_peak = max(buffer_peak, _occupancy(cfg, originals_before, holder[s2], resident_before))

    def ack(senders, dest_groups, idx, listeners, heard_from) -> np.ndarray:
        out = slot(
            senders,
            dest_groups,
            MessageKind.ACK,
            part[idx],
            headers[idx],
            _listen_at(cfg, listeners, heard_from),
        )
        return idx[_received(out, listeners, part[idx])]

    if protocol is Protocol.PAPER5:
        acked = ack(holder[s2], r[s2], s2, relay[s2], t[s2])
        deleted = ack(relay[acked], a[acked], acked, part[acked], r[acked])
        state.pending[part[deleted]] = False
        out = slot(holder[s2], dest[s2] // cfg.d, MessageKind.COPY, part[s2], headers[s2], delivery_listen)
        delivered = s2[_received(out, dest[s2], part[s2])]
    else:
        out = slot(holder[s2], dest[s2] // cfg.d, MessageKind.COPY, part[s2], headers[s2], delivery_listen)
        delivered = s2[_received(out, dest[s2], part[s2])]
        back = ack(dest[delivered], t[delivered], delivered, holder[delivered], dest[delivered] // cfg.d)
        back = ack(holder[back], r[back], back, relay[back], t[back])
        deleted = ack(relay[back], a[back], back, part[back], r[back])
        state.pending[part[deleted]] = False

    delivered_ids = part[delivered]
    deleted_ids = part[deleted]
    state.deliveries[delivered_ids] += 1
    arrived = np.zeros(cfg.n, dtype=bool)
    arrived[dest[delivered]] = True
    if immediate_exit:
        resident_after = arrived
    else:
        state.resident |= arrived
        resident_after = state.resident
    originals_at_delivery = state.pending if protocol is Protocol.PAPER5 else originals_before
    buffer_peak = max(buffer_peak, _occupancy(cfg, originals_at_delivery, np.empty(0, dtype=np.int64), resident_after))

    buffer_limit = 2 if immediate_exit else 3
    if buffer_peak > buffer_limit:
        raise InvariantViolation(f"Buffer occupancy {buffer_peak} exceeds {buffer_limit} in step {s} on {cfg}")

    lost_ids = np.setdiff1d(deleted_ids, delivered_ids)
    mismatches = int(np.setxor1d(deleted_ids, delivered_ids).size)
    if lost_ids.size:
        message = f"LOSS_DETECTED: {lost_ids.size} acknowledged copies lost in step {s} on {cfg}"
        if loss_policy is LossPolicy.ABORT:
            raise PacketLossDetected(message, lost_ids.tolist())
        logger.warning(f"[seed={seed}] {message}; requeueing")
        state.pending[lost_ids] = True

    state.step = s
    state.slot += protocol.slots_per_step

    metrics = StepMetrics(
        step=s,
        probability=float(p_pending.max(initial=0.0)) if p_pending.size else 1.0,
        pending=int(pending_ids.size),
        participants=int(part.size),
        slot1_survivors=int(np.count_nonzero(s1)),
        deliveries=int(delivered_ids.size),
        max_left_degree=graph.max_left_degree,
        max_right_degree=graph.max_right_degree,
        lam=graph.max_degree / cfg.g,
        conflicts=[o.conflict_count for o in outcomes],
        losses=int(lost_ids.size),
        ack_mismatches=mismatches,
        max_buffer=buffer_peak,
    )
    logger.debug(f"[seed={seed}] step {s}: {metrics.model_dump()}")
    return StepReport(metrics=metrics, outcomes=outcomes, participants=part, delivered=delivered_ids, lost=lost_ids)


def scheduled_probability(state: RoutingState, sched: ParticipationSchedule) -> float | np.ndarray:
    """Participation probability the schedule gives the next step, per processor in adaptive mode"""
    cfg = state.cfg
    s = state.step + 1
    if sched.mode is ScheduleMode.ADAPTIVE:
        per_group = np.bincount(np.flatnonzero(state.pending) // cfg.d, minlength=cfg.g)
        p_group = np.minimum(1.0, cfg.g / np.maximum(per_group, 1))
        return p_group[np.arange(cfg.n) // cfg.d]
    return participation_probability(s, cfg, sched)


def contention_cap(state: RoutingState) -> np.ndarray:
    """max(2^-f, 1/ceil(d/g)) per processor, f its failed saturated steps"""
    cfg = state.cfg
    floor = 1.0 / -(-cfg.d // cfg.g)
    return np.maximum(np.exp2(-state.failures.astype(np.float64)), floor)


def record_failures(state: RoutingState, participants: np.ndarray, scheduled: float | np.ndarray) -> None:
    """Count a failure for every participant of a saturated step that is still pending"""
    p = np.broadcast_to(np.asarray(scheduled, dtype=np.float64), (state.cfg.n,))
    saturated = participants[p[participants] >= 1.0]
    state.failures[saturated[state.pending[saturated]]] += 1


def step_probability(state: RoutingState, sched: ParticipationSchedule) -> float | np.ndarray:
    """Participation probability of the next step after contention backoff"""
    p = scheduled_probability(state, sched)
    if state.cfg.d == state.cfg.g or not state.failures.any():
        return p
    return np.minimum(p, contention_cap(state))


def route_randomized(
    perm,
    cfg: NetworkConfig,
    protocol: Protocol = Protocol.REVERSAL6,
    sched: Optional[ParticipationSchedule] = None,
    seed: int = 0,
    *,
    loss_policy: LossPolicy = LossPolicy.REPAIR,
    immediate_exit: bool = False,
    max_steps: int = 10000,
) -> RunStats:
    """
    Route a full permutation with the randomized router until every packet
    is delivered

    Args:
        perm: Destination of every packet
        cfg: Network configuration, d >= g
        protocol: Step protocol
        sched: Participation schedule, derived from cfg when omitted
        seed: Run seed
        loss_policy: Reaction to LOSS_DETECTED
        immediate_exit: Delivered packets leave the network after one slot
        max_steps: Safety cap

    Returns:
        RunStats with iterations, slots = slots_per_step * iterations and the per-step trace

    Raises:
        PermutationValidationError: If perm is not a bijection
        UnsupportedConfigError: If d < g
        InvariantViolation: If the run does not finish within max_steps or a packet is duplicated
    """
    if cfg.d < cfg.g:
        raise UnsupportedConfigError(f"Randomized routing needs d >= g, got {cfg}")
    state = RoutingState(np.asarray(perm), cfg)
    sched = sched or ParticipationSchedule.for_config(cfg)
    logger.info(f"[seed={seed}] Routing on {cfg} with {protocol.value}, {state.pending_count} packets")

    per_step: List[StepMetrics] = []
    slot_conflicts = [0] * protocol.slots_per_step
    while not state.done:
        if state.step >= max_steps:
            raise InvariantViolation(f"Routing on {cfg} did not finish within {max_steps} steps")
        scheduled = scheduled_probability(state, sched)
        report = run_step(
            state,
            protocol,
            step_probability(state, sched),
            seed,
            loss_policy=loss_policy,
            immediate_exit=immediate_exit,
        )
        record_failures(state, report.participants, scheduled)
        per_step.append(report.metrics)
        slot_conflicts = [x + y for x, y in zip(slot_conflicts, report.metrics.conflicts)]

    duplicates = int(np.maximum(state.deliveries - 1, 0).sum())
    if duplicates:
        raise InvariantViolation(f"{duplicates} duplicate deliveries on {cfg}")
    undelivered = int(np.count_nonzero(state.deliveries == 0))
    if undelivered:
        raise InvariantViolation(f"{undelivered} packets never reached their destination on {cfg}")

    logger.info(f"[seed={seed}] Routed {cfg.n} packets in {state.step} steps ({state.slot} slots)")
    return RunStats(
        router="randomized",
        protocol=protocol.value,
        n=cfg.n,
        d=cfg.d,
        g=cfg.g,
        seed=seed,
        iterations=state.step,
        slots=state.slot,
        delivered=int(np.count_nonzero(state.deliveries)),
        duplicates=duplicates,
        per_step=per_step,
        slot_conflicts=slot_conflicts,
    )


def first_step_delivered_fraction(perm, cfg: NetworkConfig, seed: int = 0) -> float:
    """Fraction of packets delivered by a single saturated (p = 1) paper5 step"""
    state = RoutingState(np.asarray(perm), cfg)
    report = run_step(state, Protocol.PAPER5, 1.0, seed)
    return report.metrics.deliveries / cfg.n
