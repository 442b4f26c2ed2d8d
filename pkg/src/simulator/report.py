"""
Run reports: metrics, trace events and the abort outcome.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

# trace kinds emitted by the failure handling machinery only
RECOVERY_KINDS = frozenset({"RECOVER", "RECOVER_CLAIM", "RELOC", "RELOC_APPLIED", "REROUTE"})


class TraceEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    kind: str
    worker: Optional[int] = None
    detail: Dict[str, Any] = Field(default_factory=dict)


class Metrics(BaseModel):
    logical_tasks: int = 0
    task_executions: int = 0
    re_executions: int = 0
    checkpoints_written: int = 0
    transit_created: int = 0
    messages_sent: int = 0
    recovery_count: int = 0
    relocations: int = 0


class Aborted(BaseModel):
    model_config = ConfigDict(frozen=True)

    reason: str
    detail: str = ""


class SimReport(BaseModel):
    """Outcome of one simulated run."""

    program: str
    root_args: Tuple[int, ...]
    seed: int
    plan: str = ""
    result: Union[int, Aborted]
    oracle: int
    p_initial: int
    p_final: int
    steps: int = 0
    metrics: Metrics = Field(default_factory=Metrics)
    audit_violations: List[str] = Field(default_factory=list)
    violations: List[str] = Field(default_factory=list, description="trace check findings, filled by sweeps")
    trace: Optional[List[TraceEvent]] = None

    @property
    def aborted(self) -> bool:
        return isinstance(self.result, Aborted)

    @property
    def ok(self) -> bool:
        """The run finished with the sequential result."""
        return not self.aborted and self.result == self.oracle

    def summary(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json", exclude={"trace"})
        data["ok"] = self.ok
        return data

    def dump_trace(self, path: Union[str, Path]):
        """Write the trace as JSON lines {step, kind, worker, detail}."""
        with open(path, "w", encoding="utf-8") as f:
            for event in self.trace or []:
                f.write(json.dumps(event.model_dump(mode="json"), sort_keys=True) + "\n")
