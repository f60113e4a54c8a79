"""Request data models"""

from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.experiment import LossPolicy, PermSource, Protocol, ScheduleMode


class SimulationRequest(BaseModel):
    """Request model for a block of randomized routing runs"""

    d: int = Field(..., ge=1, description="Processors per group")
    g: int = Field(..., ge=1, description="Number of groups")
    runs: int = Field(default=10, ge=1, le=1000, description="Seeded runs")
    seed: int = Field(default=0, ge=0, lt=1 << 64, description="Base seed")
    protocol: Protocol = Field(default=Protocol.REVERSAL6, description="Step protocol")
    schedule: ScheduleMode = Field(default=ScheduleMode.FIXED, description="Participation schedule mode")
    loss_policy: LossPolicy = Field(default=LossPolicy.REPAIR, description="Reaction to LOSS_DETECTED")
    immediate_exit: bool = Field(default=False, description="Delivered packets exit after one slot")
    perm_source: PermSource = Field(default=PermSource.UNIFORM, description="Permutation source")

    @field_validator("perm_source")
    @classmethod
    def validate_perm_source(cls, v):
        """The service does not read permutation files"""
        if v is PermSource.FILE:
            raise ValueError("perm_source 'file' is only available from the command line")
        return v


class OfflineRequest(BaseModel):
    """Request model for offline routing of one permutation"""

    d: int = Field(..., ge=1, description="Processors per group")
    g: int = Field(..., ge=1, description="Number of groups")
    perm: Optional[List[int]] = Field(default=None, description="Explicit permutation; random when omitted")
    seed: int = Field(default=0, ge=0, lt=1 << 64, description="Seed for the random permutation")

    @model_validator(mode="after")
    def validate_perm_length(self):
        if self.perm is not None and len(self.perm) != self.d * self.g:
            raise ValueError(f"perm must have exactly d*g = {self.d * self.g} entries")
        return self
