"""Experiment configuration models"""

from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class Protocol(str, Enum):
    """Step protocol of the randomized router"""

    PAPER5 = "paper5"
    REVERSAL6 = "reversal6"

    @property
    def slots_per_step(self) -> int:
        return 5 if self is Protocol.PAPER5 else 6


class ScheduleMode(str, Enum):
    """How the participation probability is chosen"""

    FIXED = "fixed"
    ADAPTIVE = "adaptive"


class LossPolicy(str, Enum):
    """What the engine does when an acknowledged copy is lost"""

    ABORT = "abort"
    REPAIR = "repair"


class PermSource(str, Enum):
    """Where routing inputs come from"""

    UNIFORM = "uniform"
    IDENTITY = "identity"
    REVERSAL = "reversal"
    STRESS = "stress"
    FILE = "file"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class ExperimentSpec(BaseModel):
    """A block of seeded runs on one network"""

    d: int = Field(..., ge=1, description="Processors per group")
    g: int = Field(..., ge=1, description="Number of groups")
    protocol: Protocol = Field(default=Protocol.REVERSAL6, description="Step protocol")
    schedule: ScheduleMode = Field(default=ScheduleMode.FIXED, description="Participation schedule mode")
    c_eps: float = Field(default=4.0, gt=0.0, description="Constant c + eps(g) of the participation schedule")
    loss_policy: LossPolicy = Field(default=LossPolicy.REPAIR, description="Reaction to LOSS_DETECTED")
    immediate_exit: bool = Field(default=False, description="Delivered packets leave the network one slot after arrival")
    perm_source: PermSource = Field(default=PermSource.UNIFORM, description="Permutation source")
    perm_path: Optional[Path] = Field(default=None, description="Permutation file for perm_source=file")
    runs: int = Field(default=100, ge=1, description="Number of seeded runs")
    seed: int = Field(default=0, ge=0, lt=1 << 64, description="Base seed of the block")
    output: OutputFormat = Field(default=OutputFormat.CSV, description="Report format")
    out_path: Optional[Path] = Field(default=None, description="Report destination, stdout when unset")
    workers: int = Field(default=1, ge=1, description="Worker threads for independent runs")
    max_steps: int = Field(default=10000, ge=1, description="Safety cap on steps per run")

    @property
    def n(self) -> int:
        return self.d * self.g

    @field_validator("perm_path")
    @classmethod
    def validate_perm_path(cls, v):
        """Permutation files are plain paths"""
        if v is not None and str(v).strip() == "":
            raise ValueError("perm_path must not be empty")
        return v

    @model_validator(mode="after")
    def check_file_source(self):
        if self.perm_source is PermSource.FILE and self.perm_path is None:
            raise ValueError("perm_source=file requires perm_path")
        return self
