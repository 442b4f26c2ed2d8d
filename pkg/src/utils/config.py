import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

DEFAULT_SEED = 7


class SimConfig(BaseModel):
    """Simulation knobs. Time is counted in simulated event steps."""

    checkpoint_period: int = Field(default=1, ge=1, description="regular checkpoint every R completed tasks")
    max_network_delay: int = Field(default=5, ge=1, description="message delay is uniform in 1..max")
    # failure notices are delayed by a bounded amount; the bound is a modelling convenience
    max_notice_delay: int = Field(default=5, ge=0)
    steal_backoff: int = Field(default=1, ge=1)
    budget_factor: int = Field(default=1000, ge=1, description="step budget = factor x sequential task count")
    audit: bool = False
    trace: bool = True

    @classmethod
    def from_env(cls, **overrides) -> "SimConfig":
        """Defaults overridden by NFJSIM_* environment variables, then by explicit keywords."""
        load_dotenv()
        values = {}
        for field, env in (
            ("checkpoint_period", "NFJSIM_CHECKPOINT_PERIOD"),
            ("max_network_delay", "NFJSIM_MAX_DELAY"),
            ("max_notice_delay", "NFJSIM_NOTICE_DELAY"),
            ("budget_factor", "NFJSIM_BUDGET_FACTOR"),
        ):
            raw = os.getenv(env)
            if raw:
                values[field] = int(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def default_seed() -> int:
    load_dotenv()
    raw: Optional[str] = os.getenv("NFJSIM_SEED")
    return int(raw) if raw else DEFAULT_SEED
