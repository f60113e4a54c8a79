"""Slot-synchronous message engine for POPS(d, g) networks

A slot is evaluated in three phases: every processor declares what it sends
(one message, possibly multicast to several couplers of its own group) and
which coupler it listens to; couplers resolve conflicts; listeners pick up
whatever their coupler delivered. The engine is stateless between slots.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from app.models.network import (
    CouplerId,
    CouplerReading,
    CouplerState,
    Message,
    MessageHeader,
    MessageKind,
    NetworkConfig,
)
from app.utils.exceptions import PlanContractError

logger = logging.getLogger(__name__)

NO_LISTEN = -1
NOTHING = -1


def group_of(i: int, cfg: NetworkConfig) -> int:
    """
    Group that processor i belongs to

    Args:
        i: Processor id in [0, n)
        cfg: Network configuration

    Returns:
        floor(i / d)

    Raises:
        DomainError: If i is out of range
    """
    cfg.check_processor(i)
    return i // cfg.d


def delta(x: int, cfg: NetworkConfig) -> int:
    """
    Temporary destination group of a packet whose destination is x

    Raises:
        DomainError: If x is out of range
    """
    cfg.check_processor(x)
    return x % cfg.g


def groups_of(ids: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """Vectorized group_of without range checks"""
    return ids // cfg.d


def deltas(ids: np.ndarray, cfg: NetworkConfig) -> np.ndarray:
    """Vectorized delta without range checks"""
    return ids % cfg.g


@dataclass(frozen=True)
class SlotPlan:
    """
    Send and listen declarations of every processor for one slot

    Row k of the send arrays says that processor senders[k] puts message
    (kinds[k], packet_ids[k], headers[k]) on coupler c(dest_groups[k], group(senders[k])).
    A processor may own several rows (multicast) as long as they carry the same
    message. listen[i] is the source group of the coupler c(group(i), listen[i])
    that processor i listens to, or NO_LISTEN.
    """

    cfg: NetworkConfig
    senders: np.ndarray
    dest_groups: np.ndarray
    kinds: np.ndarray
    packet_ids: np.ndarray
    headers: np.ndarray
    listen: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        cfg: NetworkConfig,
        senders: np.ndarray,
        dest_groups: np.ndarray,
        kind: MessageKind | np.ndarray,
        packet_ids: np.ndarray,
        headers: np.ndarray,
        listen: Optional[np.ndarray] = None,
    ) -> "SlotPlan":
        senders = np.asarray(senders, dtype=np.int64)
        rows = senders.shape[0]
        kinds = np.broadcast_to(np.asarray(kind, dtype=np.int8), (rows,)).copy()
        if listen is None:
            listen = np.full(cfg.n, NO_LISTEN, dtype=np.int64)
        return cls(
            cfg=cfg,
            senders=senders,
            dest_groups=np.asarray(dest_groups, dtype=np.int64),
            kinds=kinds,
            packet_ids=np.asarray(packet_ids, dtype=np.int64),
            headers=np.asarray(headers, dtype=np.int64).reshape(rows, 4),
            listen=np.asarray(listen, dtype=np.int64),
        )

    @property
    def rows(self) -> int:
        return int(self.senders.shape[0])

    def message(self, row: int) -> Message:
        return Message(
            kind=MessageKind(int(self.kinds[row])),
            packet_id=int(self.packet_ids[row]),
            header=MessageHeader(*(int(v) for v in self.headers[row])),
        )


class SlotPlanBuilder:
    """Incremental, per-processor way of writing a SlotPlan"""

    def __init__(self, cfg: NetworkConfig):
        self._cfg = cfg
        self._senders: list[int] = []
        self._dest_groups: list[int] = []
        self._kinds: list[int] = []
        self._packet_ids: list[int] = []
        self._headers: list[tuple[int, int, int, int]] = []
        self._listen = np.full(cfg.n, NO_LISTEN, dtype=np.int64)

    def send(self, processor: int, dest_groups: Iterable[int], message: Message) -> "SlotPlanBuilder":
        """Put message on c(b, group(processor)) for every b in dest_groups"""
        for b in dest_groups:
            self._senders.append(processor)
            self._dest_groups.append(b)
            self._kinds.append(int(message.kind))
            self._packet_ids.append(message.packet_id)
            self._headers.append(tuple(message.header))
        return self

    def listen(self, processor: int, src_group: int) -> "SlotPlanBuilder":
        """Listen to c(group(processor), src_group)"""
        if self._listen[processor] != NO_LISTEN:
            raise PlanContractError(f"Processor {processor} already listens to a coupler this slot")
        self._listen[processor] = src_group
        return self

    def build(self) -> SlotPlan:
        return SlotPlan.from_arrays(
            self._cfg,
            np.array(self._senders, dtype=np.int64),
            np.array(self._dest_groups, dtype=np.int64),
            np.array(self._kinds, dtype=np.int8),
            np.array(self._packet_ids, dtype=np.int64),
            np.array(self._headers, dtype=np.int64).reshape(len(self._senders), 4),
            self._listen.copy(),
        )


@dataclass(frozen=True)
class SlotOutcome:
    """
    Conflict-resolved result of one slot

    sender_counts[c] is the number of distinct processors that sent on flat
    coupler c; coupler_row[c] is the plan row delivered by c (or NOTHING);
    received_row[i] is the plan row received by processor i (or NOTHING).
    """

    plan: SlotPlan
    sender_counts: np.ndarray
    coupler_row: np.ndarray
    received_row: np.ndarray
    _received_packet: np.ndarray = field(repr=False)

    @property
    def cfg(self) -> NetworkConfig:
        return self.plan.cfg

    @property
    def states(self) -> np.ndarray:
        states = np.full(self.sender_counts.shape, CouplerState.IDLE, dtype=np.int8)
        states[self.sender_counts == 1] = CouplerState.DELIVERED
        states[self.sender_counts >= 2] = CouplerState.CONFLICT
        return states

    @property
    def conflict_count(self) -> int:
        return int(np.count_nonzero(self.sender_counts >= 2))

    @property
    def delivered_count(self) -> int:
        return int(np.count_nonzero(self.sender_counts == 1))

    @property
    def received_packet(self) -> np.ndarray:
        """Packet id received by every processor, NOTHING where nothing arrived"""
        return self._received_packet

    def reading(self, dest_group: int, src_group: int) -> CouplerReading:
        coupler = CouplerId(dest_group, src_group)
        flat = coupler.index(self.cfg)
        count = int(self.sender_counts[flat])
        row = int(self.coupler_row[flat])
        return CouplerReading(
            coupler=coupler,
            state=CouplerState(int(self.states[flat])),
            sender_count=count,
            message=self.plan.message(row) if row != NOTHING else None,
        )

    def message_at(self, processor: int) -> Optional[Message]:
        self.cfg.check_processor(processor)
        row = int(self.received_row[processor])
        return self.plan.message(row) if row != NOTHING else None


def _check_plan(plan: SlotPlan) -> None:
    cfg = plan.cfg
    if plan.listen.shape != (cfg.n,):
        raise PlanContractError(f"listen must have one entry per processor ({cfg.n})")
    if np.any((plan.listen < NO_LISTEN) | (plan.listen >= cfg.g)):
        raise PlanContractError("listen entries must be NO_LISTEN or a group id")
    if plan.rows == 0:
        return
    if np.any((plan.senders < 0) | (plan.senders >= cfg.n)):
        raise PlanContractError("sender id out of range")
    if np.any((plan.dest_groups < 0) | (plan.dest_groups >= cfg.g)):
        raise PlanContractError("coupler destination group out of range")
    if np.any((plan.packet_ids < 0) | (plan.packet_ids >= cfg.n)):
        raise PlanContractError("packet id out of range")
    h = plan.headers
    if np.any((h[:, :2] < 0) | (h[:, :2] >= cfg.n)) or np.any((h[:, 2:] < 0) | (h[:, 2:] >= cfg.g)):
        raise PlanContractError("message header holds an illegal id")

    # one message per processor: every row of a sender must agree with the value stored for it
    stored_packet = np.full(cfg.n, NOTHING, dtype=np.int64)
    stored_kind = np.full(cfg.n, NOTHING, dtype=np.int64)
    stored_packet[plan.senders] = plan.packet_ids
    stored_kind[plan.senders] = plan.kinds
    if np.any(stored_packet[plan.senders] != plan.packet_ids) or np.any(
        stored_kind[plan.senders] != plan.kinds
    ):
        raise PlanContractError("a processor sends more than one distinct message in a slot")


def execute_slot(plan: SlotPlan, cfg: Optional[NetworkConfig] = None) -> SlotOutcome:
    """
    Resolve one slot: a coupler with one sender delivers to all its
    listeners, a coupler with two or more senders delivers nothing

    Args:
        plan: Send/listen declarations
        cfg: Optional configuration; must match plan.cfg when given

    Returns:
        SlotOutcome, a pure function of the plan

    Raises:
        PlanContractError: If the plan breaks the one-message-per-processor
            rule or holds illegal ids
    """
    if cfg is not None and cfg != plan.cfg:
        raise PlanContractError(f"Plan was built for {plan.cfg}, not {cfg}")
    cfg = plan.cfg
    _check_plan(plan)

    couplers = cfg.coupler_count
    coupler_row = np.full(couplers, NOTHING, dtype=np.int64)
    received_row = np.full(cfg.n, NOTHING, dtype=np.int64)

    if plan.rows:
        # a repeated (sender, coupler) pair is the same transmission
        pair_key = plan.senders * cfg.g + plan.dest_groups
        _, rows = np.unique(pair_key, return_index=True)
        flat = plan.dest_groups[rows] * cfg.g + plan.senders[rows] // cfg.d
        sender_counts = np.bincount(flat, minlength=couplers).astype(np.int64)
        lone = sender_counts[flat] == 1
        coupler_row[flat[lone]] = rows[lone]
    else:
        sender_counts = np.zeros(couplers, dtype=np.int64)

    listeners = np.flatnonzero(plan.listen != NO_LISTEN)
    if listeners.size:
        heard = (listeners // cfg.d) * cfg.g + plan.listen[listeners]
        received_row[listeners] = coupler_row[heard]

    received_packet = np.full(cfg.n, NOTHING, dtype=np.int64)
    got = received_row != NOTHING
    received_packet[got] = plan.packet_ids[received_row[got]]

    return SlotOutcome(
        plan=plan,
        sender_counts=sender_counts,
        coupler_row=coupler_row,
        received_row=received_row,
        _received_packet=received_packet,
    )
