"""
When to checkpoint and what a checkpoint contains.
"""
from enum import Enum

from pydantic import BaseModel, ConfigDict

from database.resilient_store import Checkpoint, CheckpointOccasion
from runtime.state import WorkerState


class LifecycleEvent(str, Enum):
    BRANCH_CHILD = "branch_child"
    BRANCH_STOLEN = "branch_stolen"
    TASK_FINISHED = "task_finished"
    STEAL_SERVED = "steal_served"
    FRAME_RETURN_SENT = "frame_return_sent"
    FRAME_RETURN_RECEIVED = "frame_return_received"
    RECOVERY_MERGED = "recovery_merged"


MANDATORY = {
    LifecycleEvent.BRANCH_STOLEN,
    LifecycleEvent.STEAL_SERVED,
    LifecycleEvent.FRAME_RETURN_SENT,
    LifecycleEvent.FRAME_RETURN_RECEIVED,
    LifecycleEvent.RECOVERY_MERGED,
}


class CheckpointDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    write: bool
    occasion: CheckpointOccasion
    mandatory: bool = False


def checkpoint_policy(
    event: LifecycleEvent,
    tasks_since_checkpoint: int,
    period: int = 1,
    has_next_task: bool = False,
) -> CheckpointDecision:
    """Decide whether `event` writes a checkpoint.

    Regular checkpoints are due every `period` completed tasks and are taken at
    whichever occasion comes first. Steals, frame returns and recoveries always
    checkpoint; they do so at the occasion matching the worker's position.
    """
    if event in MANDATORY:
        if event is LifecycleEvent.BRANCH_STOLEN or has_next_task:
            occasion = CheckpointOccasion.BEFORE_BRANCH
        else:
            occasion = CheckpointOccasion.AFTER_FINISH
        return CheckpointDecision(write=True, occasion=occasion, mandatory=True)
    due = tasks_since_checkpoint >= period
    if event is LifecycleEvent.BRANCH_CHILD:
        return CheckpointDecision(write=due, occasion=CheckpointOccasion.BEFORE_BRANCH)
    return CheckpointDecision(write=due, occasion=CheckpointOccasion.AFTER_FINISH)


def checkpoint_now(
    state: WorkerState,
    occasion: CheckpointOccasion,
    seq: int = 1,
    cause: str = "periodic",
) -> Checkpoint:
    """Snapshot the worker state; the next-task descriptor is kept only before branching."""
    return Checkpoint(
        worker_id=state.worker_id,
        seq=seq,
        state=state.snapshot(include_next_task=occasion is CheckpointOccasion.BEFORE_BRANCH),
        occasion=occasion,
        cause=cause,
    )
