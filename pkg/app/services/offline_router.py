"""Deterministic offline permutation routing by bipartite edge coloring

Each packet is an edge (group(i), group(perm[i])) of a d-regular bipartite
multigraph on the groups. A proper d-edge-coloring splits the edges into
perfect matchings; colors are sent in batches of at most g, color k*g + j of
batch k travelling through intermediate group j:

    slot A  i -> c(j, group(i))            relay j*d + rank of group(i) among senders to j
    slot B  relay -> c(group(perm[i]), j)  destination listens to c(group(perm[i]), j)

For d == 1 every packet goes straight to c(group(perm[i]), group(i)) in one slot.
For 1 < d < g the d colors are redistributed into g classes of exactly d
edges so no intermediate group receives more packets than it has processors.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from app.models.network import MessageKind, NetworkConfig
from app.models.report import RunStats
from app.services.slot_engine import NO_LISTEN, SlotOutcome, SlotPlan, execute_slot
from app.utils.exceptions import InvariantViolation
from app.utils.validators import validate_permutation

logger = logging.getLogger(__name__)

FREE = -1


@dataclass(frozen=True)
class GroupMultigraph:
    """Bipartite multigraph, left = source groups, right = destination groups"""

    left_count: int
    right_count: int
    edges: np.ndarray  # rows (left node, right node)
    labels: np.ndarray  # packet id of every edge

    @classmethod
    def from_permutation(cls, perm: np.ndarray, cfg: NetworkConfig) -> "GroupMultigraph":
        ids = np.arange(cfg.n, dtype=np.int64)
        edges = np.stack([ids // cfg.d, np.asarray(perm, dtype=np.int64) // cfg.d], axis=1)
        return cls(left_count=cfg.g, right_count=cfg.g, edges=edges, labels=ids)

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def max_degree(self) -> int:
        if self.edge_count == 0:
            return 0
        left = np.bincount(self.edges[:, 0], minlength=self.left_count)
        right = np.bincount(self.edges[:, 1], minlength=self.right_count)
        return int(max(left.max(), right.max()))


@dataclass(frozen=True)
class EdgeColoring:
    """Color of every edge, colors in [0, num_colors)"""

    colors: np.ndarray
    num_colors: int

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.colors, minlength=self.num_colors)


class _ColorTable:
    """Which edge holds each color at each node"""

    def __init__(self, mg: GroupMultigraph, num_colors: int, colors: Optional[np.ndarray] = None):
        self.mg = mg
        self.left = np.full((mg.left_count, num_colors), FREE, dtype=np.int64)
        self.right = np.full((mg.right_count, num_colors), FREE, dtype=np.int64)
        self.colors = np.full(mg.edge_count, FREE, dtype=np.int64) if colors is None else colors.copy()
        if colors is not None:
            for e, c in enumerate(self.colors.tolist()):
                self.assign(e, c)

    def assign(self, e: int, c: int) -> None:
        u, v = self.mg.edges[e]
        self.left[u, c] = e
        self.right[v, c] = e
        self.colors[e] = c

    def release(self, e: int) -> None:
        u, v = self.mg.edges[e]
        c = self.colors[e]
        self.left[u, c] = FREE
        self.right[v, c] = FREE
        self.colors[e] = FREE

    def alternating_path(self, side: int, node: int, first: int, second: int) -> List[int]:
        """Edges of the first/second alternating path leaving node with color first"""
        path = []
        tables = (self.left, self.right)
        color, other = first, second
        while True:
            e = int(tables[side][node, color])
            if e == FREE:
                return path
            path.append(e)
            side = 1 - side
            node = int(self.mg.edges[e][side])
            color, other = other, color

    def swap(self, path: List[int], first: int, second: int) -> None:
        old = [int(self.colors[e]) for e in path]
        for e in path:
            self.release(e)
        for e, c in zip(path, old):
            self.assign(e, second if c == first else first)


def edge_color_bipartite(mg: GroupMultigraph) -> EdgeColoring:
    """
    Proper edge coloring of a bipartite multigraph with max-degree colors

    Edges are colored in order; when the colors free at the two endpoints
    differ, an alternating path from the right endpoint is flipped first.

    Args:
        mg: Bipartite multigraph

    Returns:
        EdgeColoring using exactly mg.max_degree colors
    """
    delta = mg.max_degree
    table = _ColorTable(mg, delta)
    for e in range(mg.edge_count):
        u, v = (int(x) for x in mg.edges[e])
        alpha = int(np.argmax(table.left[u] == FREE))
        if table.right[v, alpha] != FREE:
            beta = int(np.argmax(table.right[v] == FREE))
            path = table.alternating_path(1, v, alpha, beta)
            table.swap(path, alpha, beta)
        table.assign(e, alpha)
    coloring = EdgeColoring(colors=table.colors, num_colors=delta)
    verify_coloring(mg, coloring)
    return coloring


def verify_coloring(mg: GroupMultigraph, coloring: EdgeColoring) -> None:
    """
    Raises:
        InvariantViolation: If two edges sharing a node have the same color
    """
    if mg.edge_count == 0:
        return
    c = coloring.colors
    if np.any(c < 0) or np.any(c >= coloring.num_colors):
        raise InvariantViolation("Edge coloring leaves edges uncolored")
    for side in (0, 1):
        keys = mg.edges[:, side] * coloring.num_colors + c
        if np.unique(keys).size != keys.size:
            raise InvariantViolation("Edge coloring is not proper")


def equalize_color_classes(mg: GroupMultigraph, coloring: EdgeColoring, num_colors: int) -> EdgeColoring:
    """
    Recolor with num_colors colors so class sizes differ by at most one

    The union of two color classes is a set of alternating paths and cycles;
    flipping a path with one more edge of the larger class moves one edge
    to the smaller class.
    """
    if num_colors < coloring.num_colors:
        raise InvariantViolation("Cannot equalize into fewer colors than a proper coloring uses")
    table = _ColorTable(mg, num_colors, coloring.colors)
    while True:
        sizes = np.bincount(table.colors, minlength=num_colors)
        big, small = int(np.argmax(sizes)), int(np.argmin(sizes))
        if sizes[big] - sizes[small] <= 1:
            break
        flipped = False
        for e in np.flatnonzero(table.colors == big).tolist():
            u, v = (int(x) for x in mg.edges[e])
            for side, node in ((0, u), (1, v)):
                if (table.left if side == 0 else table.right)[node, small] != FREE:
                    continue
                path = table.alternating_path(side, node, big, small)
                if len(path) % 2 == 1:
                    table.swap(path, big, small)
                    flipped = True
                    break
            if flipped:
                break
        if not flipped:
            raise InvariantViolation("No alternating path found while equalizing color classes")
    result = EdgeColoring(colors=table.colors, num_colors=num_colors)
    verify_coloring(mg, result)
    return result


class Itinerary(BaseModel):
    """Two-hop route of one packet"""

    packet: int
    batch: int
    color: int
    intermediate: int = Field(..., description="Intermediate group, -1 for direct routing")
    relay: int = Field(..., description="Relay processor, -1 for direct routing")
    slot_a: List[int] = Field(..., description="Coupler [dest group, src group] of the first hop")
    slot_b: List[int] = Field(default_factory=list, description="Coupler of the second hop")


class ScheduleDump(BaseModel):
    """JSON view of an offline schedule"""

    d: int
    g: int
    slots: int
    batches: List[List[int]] = Field(..., description="Colors of every batch")
    itineraries: List[Itinerary]


@dataclass(frozen=True)
class OfflineSchedule:
    """Per-packet batch, color, intermediate group and relay of an offline routing"""

    cfg: NetworkConfig
    perm: np.ndarray
    color: np.ndarray
    batch: np.ndarray
    intermediate: np.ndarray
    relay: np.ndarray
    batch_count: int

    @property
    def direct(self) -> bool:
        return self.cfg.d == 1

    @property
    def slots(self) -> int:
        return 1 if self.direct else 2 * self.batch_count

    def dump(self) -> ScheduleDump:
        cfg = self.cfg
        itineraries = []
        for i in range(cfg.n):
            a, b = i // cfg.d, int(self.perm[i]) // cfg.d
            j = int(self.intermediate[i])
            itineraries.append(
                Itinerary(
                    packet=i,
                    batch=int(self.batch[i]),
                    color=int(self.color[i]),
                    intermediate=j,
                    relay=int(self.relay[i]),
                    slot_a=[b, a] if self.direct else [j, a],
                    slot_b=[] if self.direct else [b, j],
                )
            )
        batches = [sorted(set(self.color[self.batch == k].tolist())) for k in range(self.batch_count)]
        return ScheduleDump(d=cfg.d, g=cfg.g, slots=self.slots, batches=batches, itineraries=itineraries)


def build_offline_schedule(perm, cfg: NetworkConfig) -> OfflineSchedule:
    """
    Plan an offline routing of perm

    Raises:
        PermutationValidationError: If perm is not a bijection
    """
    perm = validate_permutation(perm, cfg.n)
    none = np.full(cfg.n, FREE, dtype=np.int64)
    if cfg.d == 1:
        return OfflineSchedule(cfg, perm, np.zeros(cfg.n, dtype=np.int64), np.zeros(cfg.n, dtype=np.int64), none, none, 1)

    mg = GroupMultigraph.from_permutation(perm, cfg)
    coloring = edge_color_bipartite(mg)
    if cfg.d < cfg.g:
        coloring = equalize_color_classes(mg, coloring, cfg.g)
        batch = np.zeros(cfg.n, dtype=np.int64)
        intermediate = coloring.colors.copy()
        batch_count = 1
    else:
        batch = coloring.colors // cfg.g
        intermediate = coloring.colors % cfg.g
        batch_count = math.ceil(cfg.d / cfg.g)

    # relay = j*d + rank of the source group among the batch's senders to j
    src = np.arange(cfg.n, dtype=np.int64) // cfg.d
    order = np.lexsort((src, intermediate, batch))
    relay = np.empty(cfg.n, dtype=np.int64)
    rank = 0
    previous = None
    for e in order.tolist():
        key = (int(batch[e]), int(intermediate[e]))
        rank = rank + 1 if key == previous else 0
        previous = key
        relay[e] = intermediate[e] * cfg.d + rank
    return OfflineSchedule(cfg, perm, coloring.colors, batch, intermediate, relay, batch_count)


def _plan(cfg, senders, dest_groups, packets, perm, intermediate, listeners, heard_from) -> SlotPlan:
    listen = np.full(cfg.n, NO_LISTEN, dtype=np.int64)
    listen[listeners] = heard_from
    headers = np.stack([packets, perm[packets], np.maximum(intermediate[packets], 0), perm[packets] % cfg.g], axis=1)
    return SlotPlan.from_arrays(cfg, senders, dest_groups, MessageKind.COPY, packets, headers, listen)


def compile_schedule(schedule: OfflineSchedule) -> List[tuple[SlotPlan, np.ndarray, np.ndarray]]:
    """
    Slot plans of a schedule with, for every slot, the packets it moves and
    the processors expected to receive them
    """
    cfg, perm = schedule.cfg, schedule.perm
    ids = np.arange(cfg.n, dtype=np.int64)
    src = ids // cfg.d
    plans = []
    if schedule.direct:
        dst = perm // cfg.d
        plans.append((_plan(cfg, ids, dst, ids, perm, schedule.intermediate, perm, src), ids, perm))
        return plans
    for k in range(schedule.batch_count):
        moving = np.flatnonzero(schedule.batch == k)
        j = schedule.intermediate[moving]
        relay = schedule.relay[moving]
        dest = perm[moving]
        plans.append((_plan(cfg, moving, j, moving, perm, schedule.intermediate, relay, src[moving]), moving, relay))
        plans.append((_plan(cfg, relay, dest // cfg.d, moving, perm, schedule.intermediate, dest, j), moving, dest))
    return plans


def execute_compiled(cfg: NetworkConfig, plans) -> tuple[np.ndarray, List[SlotOutcome]]:
    """
    Run compiled slot plans through the engine

    Returns:
        holder array (holder[i] = processor holding packet i at the end) and the slot outcomes

    Raises:
        InvariantViolation: On any conflict or missed reception
    """
    holder = np.arange(cfg.n, dtype=np.int64)
    outcomes = []
    for plan, moving, receivers in plans:
        outcome = execute_slot(plan)
        outcomes.append(outcome)
        if outcome.conflict_count:
            raise InvariantViolation(f"Offline schedule produced {outcome.conflict_count} conflicts on {cfg}")
        if np.any(outcome.received_packet[receivers] != moving):
            raise InvariantViolation(f"Offline schedule missed a reception on {cfg}")
        holder[moving] = receivers
    return holder, outcomes


def route_offline(perm, cfg: NetworkConfig) -> tuple[OfflineSchedule, RunStats]:
    """
    Route perm offline in 1 slot (d = 1) or 2*ceil(d/g) slots (d > 1)

    Args:
        perm: Destination of every packet
        cfg: Network configuration

    Returns:
        The schedule and its RunStats

    Raises:
        PermutationValidationError: If perm is not a bijection
        InvariantViolation: If the executed schedule conflicts or misplaces a packet
    """
    schedule = build_offline_schedule(perm, cfg)
    holder, outcomes = execute_compiled(cfg, compile_schedule(schedule))
    if not np.array_equal(holder, schedule.perm):
        raise InvariantViolation(f"Offline routing left packets away from their destinations on {cfg}")
    logger.info(f"Offline routing on {cfg}: {len(outcomes)} slots, {schedule.batch_count} batches")
    return schedule, RunStats(
        router="offline",
        n=cfg.n,
        d=cfg.d,
        g=cfg.g,
        iterations=schedule.batch_count,
        slots=len(outcomes),
        delivered=cfg.n,
        slot_conflicts=[o.conflict_count for o in outcomes],
    )
