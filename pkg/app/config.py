"""Application configuration using Pydantic Settings"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


@dataclass(frozen=True)
class SweepPreset:
    """Grid of network sizes and d/g ratios for a sweep"""

    sizes: Tuple[int, ...]
    ratios: Tuple[int, ...] = (1, 4, 16)

    def cells(self) -> List[Tuple[int, int]]:
        """(d, g) of every cell with n = ratio * g^2 for an integral g >= 2"""
        cells = []
        for ratio in self.ratios:
            for n in self.sizes:
                g = math.isqrt(n // ratio)
                if g >= 2 and ratio * g * g == n:
                    cells.append((ratio * g, g))
        return cells


# Sweep presets
# Network sizes n from 4 upwards, each at d = g, 4g and 16g
SWEEP_PRESETS: Dict[str, SweepPreset] = {
    "desk": SweepPreset(
        # Finishes in minutes on a desktop
        sizes=(4, 16, 64, 256, 1024, 4096, 16384, 65536),
    ),
    "table": SweepPreset(
        sizes=(4, 16, 64, 256, 1024, 4096, 16384, 65536, 262144),
    ),
    "full": SweepPreset(
        # Long-running; needs several GB of memory for the largest rows
        sizes=(4, 16, 64, 256, 1024, 4096, 16384, 65536, 262144, 1048576, 4194304, 16777216),
    ),
}


def get_sweep_preset(name: str) -> SweepPreset:
    """Get a sweep preset by name, with fallback to desk"""
    return SWEEP_PRESETS.get(name, SWEEP_PRESETS["desk"])


class Settings(BaseSettings):
    """Application settings with environment variable support"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Application
    app_name: str = Field(default="POPS Routing Simulator", description="Application name")
    debug: bool = Field(default=False, description="Debug mode")

    # Simulation defaults
    d: int = Field(default=16, ge=1, description="Processors per group")
    g: int = Field(default=16, ge=1, description="Number of groups")
    seed: int = Field(default=0, ge=0, lt=1 << 64, description="Base seed (64-bit unsigned)")
    runs: int = Field(default=100, ge=1, description="Seeded runs per experiment")
    protocol: str = Field(default="reversal6", description="Step protocol: 'paper5' or 'reversal6'")
    schedule: str = Field(default="fixed", description="Participation schedule: 'fixed' or 'adaptive'")
    c_eps: float = Field(default=4.0, gt=0.0, description="Constant c + eps(g) of the participation schedule")
    loss_policy: str = Field(default="repair", description="On LOSS_DETECTED: 'abort' or 'repair'")
    immediate_exit: bool = Field(default=False, description="Delivered packets leave the network one slot after arrival")
    perm: str = Field(default="uniform", description="Permutation source: uniform, identity, reversal, stress or a file path")
    max_steps: int = Field(default=10000, ge=1, description="Safety cap on randomized steps per run")

    # Harness
    parallel_runs: int = Field(default=1, ge=1, description="Worker threads for independent runs")
    output_format: str = Field(default="csv", description="Report format: 'csv' or 'json'")
    sweep_preset: str = Field(default="desk", description="Sweep grid: desk, table or full")
    verify_budget: Optional[int] = Field(default=None, ge=1, description="Trials per configuration in verify suites; each suite has its own default")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")

    # Server
    host: str = Field(default="0.0.0.0", description="Server host")
    port: int = Field(default=8080, description="Server port")
    workers: int = Field(default=1, description="Number of worker processes")
    max_service_n: int = Field(default=65536, ge=1, description="Largest network the HTTP service will simulate")


# Global settings instance
settings = Settings()
