"""
Queries over run traces.
"""
import json
from pathlib import Path
from typing import Iterable, List, Union

from simulator.report import RECOVERY_KINDS, TraceEvent

_PROTOCOL_KINDS = {"CKPT", "TRANSIT", "STEAL", "LOOT", "RETURN", "MATCH"}


def trace_lines(trace: Iterable[TraceEvent]) -> List[str]:
    return [json.dumps(event.model_dump(mode="json"), sort_keys=True) for event in trace]


def load_trace(path: Union[str, Path]) -> List[TraceEvent]:
    with open(path, encoding="utf-8") as f:
        return [TraceEvent.model_validate_json(line) for line in f if line.strip()]


def of_kind(trace: Iterable[TraceEvent], *kinds: str) -> List[TraceEvent]:
    return [event for event in trace if event.kind in kinds]


def _transcript(trace: Iterable[TraceEvent], key: str) -> List[TraceEvent]:
    return [e for e in trace if e.kind in _PROTOCOL_KINDS and e.detail.get("key") == key]


def steal_transcript(trace: Iterable[TraceEvent], key: str) -> List[TraceEvent]:
    """Protocol steps of the steal parked under transit `key`: victim checkpoint, transit
    create, steal, loot receipt, thief checkpoint, transit delete."""
    return _transcript(trace, key)


def return_transcript(trace: Iterable[TraceEvent], key: str) -> List[TraceEvent]:
    """Protocol steps of the frame return parked under transit `key`."""
    return _transcript(trace, key)


def transit_keys(trace: Iterable[TraceEvent], kind: str) -> List[str]:
    """Transit keys of every STEAL or RETURN in the trace, in order."""
    return [e.detail["key"] for e in trace if e.kind == kind]


def recovery_participants(trace: Iterable[TraceEvent]) -> List[int]:
    return sorted({e.worker for e in trace if e.kind in RECOVERY_KINDS and e.worker is not None})
