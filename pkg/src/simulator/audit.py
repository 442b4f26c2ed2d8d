"""
Global frame conservation check.

Every live logical task must be held exactly once: by an alive worker, in the
last checkpoint of a dead worker whose recovery has not been merged yet, or in
a transit record.
"""
from collections import defaultdict
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from database.resilient_store import TransitRecord
from models.frame import Frame, Path
from runtime.state import StateSnapshot


class GlobalSnapshot(BaseModel):
    alive: Dict[int, StateSnapshot] = Field(default_factory=dict)
    unrecovered: Dict[int, StateSnapshot] = Field(default_factory=dict)
    transit: List[TransitRecord] = Field(default_factory=list)
    result: Optional[int] = None


class AuditReport(BaseModel):
    violations: List[str] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _holdings(snapshot: GlobalSnapshot) -> Dict[Path, List[str]]:
    held: Dict[Path, List[str]] = defaultdict(list)

    def add(frame: Frame, where: str):
        held[frame.path].append(f"{where}:{frame.frame_id}@{frame.section}")

    for w, state in sorted(snapshot.alive.items()):
        for frame in state.frames():
            add(frame, f"w{w}")
    for w, state in sorted(snapshot.unrecovered.items()):
        for frame in state.frames():
            add(frame, f"ckpt(w{w})")
    for record in snapshot.transit:
        add(record.frame, f"transit({record.transit_key} w{record.sender}->w{record.receiver})")
    return held


def audit_conservation(snapshot: GlobalSnapshot) -> AuditReport:
    report = AuditReport()
    if snapshot.result is not None:
        return report
    held = _holdings(snapshot)
    for path, where in sorted(held.items()):
        if len(where) > 1:
            report.violations.append(f"duplicate frame {list(path)} held by {', '.join(where)}")
        if path and path[:-1] not in held:
            report.violations.append(f"orphan frame {list(path)} at {where[0]}: parent {list(path[:-1])} is not held")
    for label, states in (("w", snapshot.alive), ("ckpt(w", snapshot.unrecovered)):
        for w, state in sorted(states.items()):
            for saved in state.saved_results:
                if saved.child_path in held:
                    owner = f"{label}{w}" + (")" if label.startswith("ckpt") else "")
                    report.violations.append(
                        f"saved result of {list(saved.child_path)} at {owner} while the task is still held"
                    )
    return report
