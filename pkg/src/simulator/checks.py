"""
Trace-based checks of the recovery guarantees: only work of failed workers is
redone, and only the workers concerned by a failure take part in handling it.
"""
from collections import defaultdict
from typing import Dict, List, Sequence, Set, Tuple

from resilience.ring import buddy_of
from simulator.report import TraceEvent


def re_execution_violations(trace: Sequence[TraceEvent]) -> List[str]:
    """Every re-executed task must have been lost with a worker.

    The last start of the task must come from a worker that failed or was reset
    afterwards, and that start must be later than the worker's last checkpoint
    before the loss: anything older was in the checkpoint and is never redone.
    """
    last_start: Dict[Tuple[int, ...], Tuple[int, int]] = {}
    last_checkpoint: Dict[int, int] = {}
    # worker -> (trace index of the failure or reset, index of its last checkpoint then)
    losses: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    violations = []
    for i, event in enumerate(trace):
        if event.kind == "FAIL":
            for w in event.detail["workers"]:
                losses[w].append((i, last_checkpoint.get(w, -1)))
        elif event.kind == "RESET":
            losses[event.worker].append((i, last_checkpoint.get(event.worker, -1)))
        elif event.kind == "CKPT":
            last_checkpoint[event.worker] = i
        elif event.kind == "TASK":
            path = tuple(event.detail["path"])
            if event.detail.get("rerun") and path in last_start:
                previous, started = last_start[path]
                lost = [cutoff for at, cutoff in losses[previous] if at > started]
                if not lost:
                    violations.append(
                        f"step {event.step}: w{event.worker} re-executes {list(path)} last run by surviving w{previous}"
                    )
                elif all(cutoff > started for cutoff in lost):
                    violations.append(
                        f"step {event.step}: w{event.worker} re-executes {list(path)} although w{previous} "
                        f"checkpointed after starting it"
                    )
            last_start[path] = (event.worker, i)
    return violations


def localization_violations(trace: Sequence[TraceEvent], p: int) -> List[str]:
    """Recovery work may only happen at the buddy, at notified thieves and at senders rerouting to the dead."""
    dead: Set[int] = set()
    relocation_targets: Set[int] = set()
    buddies: Set[int] = set()
    violations = []
    for event in trace:
        kind, w, detail = event.kind, event.worker, event.detail
        if kind == "FAIL":
            dead.update(detail["workers"])
        elif kind in ("RECOVER", "RECOVER_CLAIM"):
            failed = detail["failed"]
            expected = buddy_of(failed, [x for x in range(p) if x not in dead], p)
            if w != expected:
                violations.append(f"step {event.step}: w{w} recovers w{failed} but the buddy is w{expected}")
            buddies.add(w)
        elif kind == "RELOC":
            if w not in buddies:
                violations.append(f"step {event.step}: w{w} relocates results without having recovered anybody")
            relocation_targets.add(detail["target"])
        elif kind == "RELOC_APPLIED":
            if w not in relocation_targets:
                violations.append(f"step {event.step}: w{w} applies a relocation it was never sent")
        elif kind == "REROUTE":
            if detail["receiver"] not in dead:
                violations.append(f"step {event.step}: w{w} reroutes {detail['key']} to live w{detail['receiver']}")
    return violations
