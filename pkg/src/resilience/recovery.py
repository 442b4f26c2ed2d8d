"""
Buddy-side adoption of a failed worker's checkpoint and in-transit frames.
"""
from enum import Enum
from typing import Any, Collection, Dict, List

from pydantic import BaseModel, ConfigDict, Field

from database.resilient_store import Checkpoint, TransitKind, TransitRecord
from models.frame import Path
from runtime.state import StealLink, WorkerState
from runtime.worker import (
    SyncOutcome,
    absorb_saved_results,
    collapse_self_links,
    incorporate,
    on_frame_return,
    settle,
    thief_link,
    victim_link,
)


class RecoveryAction(str, Enum):
    INSERT_POOL_FRAMES = "insert_pool_frames"
    ADOPT_SAVED_RESULTS = "adopt_saved_results"
    ADOPT_RETURNED_FRAMES = "adopt_returned_frames"
    ADOPT_VICTIM_THIEF_LISTS = "adopt_victim_thief_lists"
    NOTIFY_THIEF_OF_RELOCATION = "notify_thief_of_relocation"
    ADOPT_TRANSIT = "adopt_transit"
    REROUTE_EXPECTED_RETURNS = "reroute_expected_returns"


class RecoveryStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    action: RecoveryAction
    detail: Dict[str, Any] = Field(default_factory=dict)


class Relocation(BaseModel):
    model_config = ConfigDict(frozen=True)

    thief: int
    parent_path: Path
    child_path: Path


class RecoveryPlan(BaseModel):
    """What a buddy did (and still has to send) when adopting `failed`."""

    failed: int
    buddy: int
    adopted_seq: int
    adopted_identities: List[int] = Field(default_factory=list)
    actions: List[RecoveryStep] = Field(default_factory=list)
    adopted_keys: List[str] = Field(default_factory=list)
    relocations: List[Relocation] = Field(default_factory=list)
    resend: List[TransitRecord] = Field(default_factory=list)
    returns_due: List[SyncOutcome] = Field(default_factory=list)

    def add(self, action: RecoveryAction, **detail):
        self.actions.append(RecoveryStep(action=action, detail=detail))


def merge_checkpoint(
    state: WorkerState,
    checkpoint: Checkpoint,
    records: List[TransitRecord],
    dead: Collection[int] = (),
) -> RecoveryPlan:
    """Merge the failed worker's checkpoint and the transit records involving it into `state`.

    `records` are the live transit records whose sender or receiver is one of the
    failed worker's identities. Records addressed to it are adopted. Records it
    sent to a receiver in `dead` are returned in `plan.resend`; the others are
    left in transit for their receiver. A recovered next task that is not loot
    waits in the returned frames so that it cannot be stolen.
    """
    snap = checkpoint.state
    failed_ids = [i for i in snap.identities if i not in state.identities] or [checkpoint.worker_id]
    plan = RecoveryPlan(
        failed=checkpoint.worker_id,
        buddy=state.worker_id,
        adopted_seq=checkpoint.seq,
        adopted_identities=failed_ids,
    )
    state.identities.extend(failed_ids)

    state.open_victims.extend(snap.open_victims)
    state.open_thieves.extend(snap.open_thieves)

    inserted = list(snap.pool)
    returned = list(snap.returned_frames)
    task = snap.next_task
    if task is not None:
        # runnable tasks without a victim link are never loot; a thief would finish
        # them instead of returning them
        if victim_link(state, task.path) is None and task.all_filled:
            returned.append(task)
        else:
            inserted.append(task)
    state.pool.extend(inserted)
    plan.add(RecoveryAction.INSERT_POOL_FRAMES, frames=[list(f.path) for f in inserted])

    state.returned_frames.extend(returned)
    plan.add(RecoveryAction.ADOPT_RETURNED_FRAMES, frames=[list(f.path) for f in returned])

    plan.add(
        RecoveryAction.ADOPT_VICTIM_THIEF_LISTS,
        victims=[[link.peer, list(link.path)] for link in snap.open_victims],
        thieves=[[link.peer, list(link.path)] for link in snap.open_thieves],
    )

    adopted_results = []
    for saved in snap.saved_results:
        if not incorporate(state, saved.child_path, saved.value):
            state.saved_results.append(saved)
            adopted_results.append(saved)
    plan.add(RecoveryAction.ADOPT_SAVED_RESULTS, results=[list(s.child_path) for s in snap.saved_results])

    for record in records:
        if record.receiver in failed_ids:
            frame = record.frame
            if record.kind is TransitKind.LOOT:
                state.open_victims.append(
                    StealLink(peer=record.sender, path=frame.path, frame_id=frame.frame_id, hop=frame.steal_count)
                )
                state.pool.append(absorb_saved_results(state, frame))
            else:
                on_frame_return(state, frame)
            plan.adopted_keys.append(record.transit_key)
            plan.add(RecoveryAction.ADOPT_TRANSIT, key=record.transit_key, kind=record.kind.value, frame=list(frame.path))
        elif record.sender in failed_ids and record.receiver in dead and record.receiver not in state.identities:
            # receivers that are alive (or are us) still get the original message
            plan.resend.append(record)

    collapse_self_links(state)
    # results may now belong to frames that became local through adoption
    remaining = []
    for saved in state.saved_results:
        if not incorporate(state, saved.child_path, saved.value):
            remaining.append(saved)
    state.saved_results = remaining
    plan.returns_due = settle(state)

    for saved in adopted_results:
        if saved not in state.saved_results:
            continue
        link = thief_link(state, saved.parent_path)
        if link is None or link.peer in state.identities:
            continue
        plan.relocations.append(Relocation(thief=link.peer, parent_path=saved.parent_path, child_path=saved.child_path))
        plan.add(RecoveryAction.NOTIFY_THIEF_OF_RELOCATION, thief=link.peer, child=list(saved.child_path))

    if plan.resend:
        plan.add(RecoveryAction.REROUTE_EXPECTED_RETURNS, keys=[r.transit_key for r in plan.resend])
    return plan
