"""Run traces, report rows and statistics"""

from typing import List, Literal, Optional

from pydantic import BaseModel, Field

REPORT_SCHEMA_VERSION = "1"

REPORT_FIELDS = [
    "n",
    "d",
    "g",
    "protocol",
    "seed_index",
    "iterations",
    "slots",
    "conflicts_s1",
    "conflicts_s2",
    "conflicts_ack",
    "conflicts_delivery",
    "wall_ms",
]

# seed_index values of the aggregate rows closing each block
AGGREGATE_LABELS = ("mean", "sigma", "max")


class StepMetrics(BaseModel):
    """Observed quantities of one randomized routing step"""

    step: int = Field(..., ge=1, description="Step index s")
    probability: float = Field(..., ge=0.0, le=1.0, description="Participation probability used (max over groups when adaptive)")
    pending: int = Field(..., ge=0, description="Packets pending at the start of the step")
    participants: int = Field(..., ge=0, description="Packets that took part in the step")
    slot1_survivors: int = Field(..., ge=0, description="Copies that reached their intermediate group")
    deliveries: int = Field(..., ge=0, description="Copies delivered to their final destination")
    max_left_degree: int = Field(..., ge=0, description="Max conflict-graph degree over source groups before the step")
    max_right_degree: int = Field(..., ge=0, description="Max conflict-graph degree over temporary destination groups before the step")
    lam: float = Field(..., ge=0.0, description="max degree / g")
    conflicts: List[int] = Field(default_factory=list, description="Conflicting couplers per slot")
    losses: int = Field(default=0, ge=0, description="Acknowledged copies lost in the delivery slot")
    ack_mismatches: int = Field(default=0, ge=0, description="Packets deleted without delivery or delivered without deletion")
    max_buffer: int = Field(default=0, ge=0, description="Largest per-processor packet occupancy seen during the step")


class RunStats(BaseModel):
    """Outcome of routing one permutation"""

    router: str = Field(..., description="randomized, offline or sorting")
    protocol: str = Field(default="", description="Step protocol of the randomized router")
    n: int
    d: int
    g: int
    seed: int = Field(default=0, description="Seed of this run")
    iterations: int = Field(..., ge=0, description="Steps executed")
    slots: int = Field(..., ge=0, description="Slots executed")
    delivered: int = Field(..., ge=0, description="Packets delivered")
    duplicates: int = Field(default=0, ge=0, description="Extra deliveries beyond the first")
    per_step: List[StepMetrics] = Field(default_factory=list)
    slot_conflicts: List[int] = Field(default_factory=list, description="Total conflicts per slot position of a step")

    @property
    def losses(self) -> int:
        return sum(m.losses for m in self.per_step)


class ReportRow(BaseModel):
    """One CSV/JSON record per run"""

    n: int
    d: int
    g: int
    protocol: str
    seed_index: int
    iterations: int
    slots: int
    conflicts_s1: int
    conflicts_s2: int
    conflicts_ack: int
    conflicts_delivery: int
    wall_ms: float


class AggregateRow(BaseModel):
    """Mean, sigma or max of the numeric columns over one block of run rows"""

    n: int
    d: int
    g: int
    protocol: str
    seed_index: Literal["mean", "sigma", "max"]
    iterations: float
    slots: float
    conflicts_s1: float
    conflicts_s2: float
    conflicts_ack: float
    conflicts_delivery: float
    wall_ms: float


class MetricSummary(BaseModel):
    """Mean, population standard deviation and maximum of one metric"""

    mean: float
    sigma: float
    max: float


class AggregateStats(BaseModel):
    """Cross-run statistics"""

    runs: int
    iterations: MetricSummary
    slots: MetricSummary
    extra: dict[str, MetricSummary] = Field(default_factory=dict)


class ExperimentReport(BaseModel):
    """Rows of every run plus their aggregate"""

    schema_version: str = REPORT_SCHEMA_VERSION
    rows: List[ReportRow]
    aggregate: AggregateStats
    losses: int = Field(default=0, description="LOSS_DETECTED events across all runs")


class VerifyCheck(BaseModel):
    """Result of one invariant check"""

    name: str
    passed: bool
    detail: str = ""


class VerifyReport(BaseModel):
    """Outcome of a verification suite"""

    suite: str
    passed: bool
    checks: List[VerifyCheck] = Field(default_factory=list)
    violations: int = 0
    note: Optional[str] = None
