"""
Failure-free work-first work stealing as operations on a WorkerState.

The operations update the state they are given in place and return it (or an
outcome describing what the caller has to do next). They never touch another
worker's state; messages and the store are handled by the resilience layer.
"""
from enum import Enum
from typing import List, Optional, Tuple

from loguru import logger
from pydantic import BaseModel, ConfigDict

from models.errors import ProtocolViolation, UnknownTransit
from models.frame import Frame, Path, Spawn, describe
from runtime.state import SavedResult, StealLink, WorkerMode, WorkerState


class SyncKind(str, Enum):
    RESUME_LOCALLY = "resume_locally"
    RETURN_TO_VICTIM = "return_to_victim"
    BLOCKED = "blocked"


class SyncOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: SyncKind
    frame: Frame
    victim: Optional[int] = None
    link: Optional[StealLink] = None


class FinishKind(str, Enum):
    ROOT = "root"
    INCORPORATED = "incorporated"
    SAVED = "saved"


class FinishOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FinishKind
    value: int
    parent_path: Optional[Path] = None


def new_frame_id(state: WorkerState) -> str:
    state.frame_counter += 1
    return f"w{state.worker_id}-{state.frame_counter}"


def _latest_link(links: List[StealLink], path: Path) -> Optional[StealLink]:
    best = None
    for link in links:
        if link.path == path and (best is None or link.hop > best.hop):
            best = link
    return best


def victim_link(state: WorkerState, path: Path) -> Optional[StealLink]:
    return _latest_link(state.open_victims, path)


def thief_link(state: WorkerState, path: Path) -> Optional[StealLink]:
    return _latest_link(state.open_thieves, path)


def on_spawn(state: WorkerState, frame: Frame, spawn: Spawn) -> WorkerState:
    """Branch into the child; the parent continuation goes to the young end of the pool."""
    continuation, child = frame.branch(spawn, owner=state.worker_id, child_id=new_frame_id(state), holder=state.worker_id)
    state.pool.append(continuation)
    state.next_task = child
    state.mode = WorkerMode.WORKING
    return state


def on_steal_request(state: WorkerState, thief: int) -> Tuple[WorkerState, Optional[Frame]]:
    """Extract the oldest pool frame for `thief`. Returns the loot, or None for NoLoot."""
    if not state.pool:
        return state, None
    loot = state.pool.pop(0).stolen()
    state.open_thieves.append(StealLink(peer=thief, path=loot.path, frame_id=loot.frame_id, hop=loot.steal_count))
    logger.debug("[STEAL] w{} gives {} to w{}", state.worker_id, describe(loot), thief)
    return state, loot


def absorb_saved_results(state: WorkerState, frame: Frame) -> Frame:
    """Write every locally saved result belonging to `frame` into its slots."""
    kept = []
    for saved in state.saved_results:
        if saved.parent_path == frame.path:
            frame = frame.fill(saved.slot, saved.value)
        else:
            kept.append(saved)
    state.saved_results = kept
    return frame


def on_loot(state: WorkerState, frame: Frame, victim: int) -> WorkerState:
    """Accept a stolen frame: remember the victim and branch into it (or pool it if busy)."""
    state.open_victims.append(StealLink(peer=victim, path=frame.path, frame_id=frame.frame_id, hop=frame.steal_count))
    frame = absorb_saved_results(state, frame)
    if state.next_task is None and ready_frame_index(state) is None:
        state.next_task = frame
    else:
        state.pool.append(frame)
    state.mode = WorkerMode.WORKING
    return state


def on_sync(state: WorkerState, frame: Frame) -> SyncOutcome:
    """Handle a Sync reached by `frame` (the current task)."""
    resumed = absorb_saved_results(state, frame.at_section(frame.section + 1))
    state.next_task = None
    link = victim_link(state, resumed.path)
    if link is not None and resumed.owned_filled(state.identities):
        state.open_victims.remove(link)
        return SyncOutcome(kind=SyncKind.RETURN_TO_VICTIM, frame=resumed, victim=link.peer, link=link)
    if link is None and resumed.all_filled:
        state.next_task = resumed
        return SyncOutcome(kind=SyncKind.RESUME_LOCALLY, frame=resumed)
    state.returned_frames.append(resumed)
    return SyncOutcome(kind=SyncKind.BLOCKED, frame=resumed)


def incorporate(state: WorkerState, child_path: Path, value: int) -> bool:
    """Write a child result into its parent if the parent frame is held here."""
    parent_path = child_path[:-1]
    slot = child_path[-1]
    if state.next_task is not None and state.next_task.path == parent_path:
        state.next_task = state.next_task.fill(slot, value)
        return True
    for frames in (state.pool, state.returned_frames):
        for i, held in enumerate(frames):
            if held.path == parent_path:
                frames[i] = held.fill(slot, value)
                return True
    return False


def on_task_finish(state: WorkerState, frame: Frame, value: int) -> FinishOutcome:
    """A task returned `value`: incorporate it into a local parent or save it locally."""
    if state.next_task is not None and state.next_task.path == frame.path:
        state.next_task = None
    if frame.is_root:
        state.mode = WorkerMode.IDLE
        return FinishOutcome(kind=FinishKind.ROOT, value=value)
    parent_path = frame.parent_path
    if incorporate(state, frame.path, value):
        kind = FinishKind.INCORPORATED
    else:
        link = thief_link(state, parent_path)
        state.saved_results.append(
            SavedResult(
                child_path=frame.path,
                child_id=frame.frame_id,
                value=value,
                thief_expected_at=link.peer if link else None,
            )
        )
        kind = FinishKind.SAVED
    state.mode = WorkerMode.WORKING if state.pool or state.returned_frames else WorkerMode.IDLE
    return FinishOutcome(kind=kind, value=value, parent_path=parent_path)


def on_frame_return(state: WorkerState, frame: Frame) -> WorkerState:
    """A thief sent back `frame`: close the thief link and match saved results."""
    link = thief_link(state, frame.path)
    if link is None:
        raise UnknownTransit(f"w{state.worker_id} received {describe(frame)} but has no thief for it")
    state.open_thieves.remove(link)
    state.returned_frames.append(absorb_saved_results(state, frame))
    state.mode = WorkerMode.WORKING
    return state


def settle(state: WorkerState) -> List[SyncOutcome]:
    """Release returned frames whose local contribution is complete and that must go back to a victim."""
    due = []
    waiting = []
    for frame in state.returned_frames:
        frame = absorb_saved_results(state, frame)
        link = victim_link(state, frame.path)
        if link is not None and frame.owned_filled(state.identities):
            state.open_victims.remove(link)
            due.append(SyncOutcome(kind=SyncKind.RETURN_TO_VICTIM, frame=frame, victim=link.peer, link=link))
        else:
            waiting.append(frame)
    state.returned_frames = waiting
    return due


def ready_frame_index(state: WorkerState) -> Optional[int]:
    for i, frame in enumerate(state.returned_frames):
        if frame.all_filled and victim_link(state, frame.path) is None:
            return i
    return None


def take_next(state: WorkerState) -> Optional[Frame]:
    """Pick the task to run next: current task, a fully matched returned frame, then the pool's young end."""
    if state.next_task is None:
        ready = ready_frame_index(state)
        if ready is not None:
            state.next_task = state.returned_frames.pop(ready)
        elif state.pool:
            state.next_task = state.pool.pop()
    state.mode = WorkerMode.WORKING if state.next_task is not None else WorkerMode.IDLE
    return state.next_task


def collapse_self_links(state: WorkerState) -> int:
    """Drop victim/thief link pairs of one steal whose both ends now belong to this worker."""
    removed = 0
    for vlink in list(state.open_victims):
        if vlink.peer not in state.identities:
            continue
        for tlink in state.open_thieves:
            if tlink.path == vlink.path and tlink.hop == vlink.hop and tlink.peer in state.identities:
                state.open_victims.remove(vlink)
                state.open_thieves.remove(tlink)
                removed += 1
                break
    return removed


def check_local_uniqueness(state: WorkerState) -> None:
    seen = set()
    for frame in state.frames():
        if frame.path in seen:
            raise ProtocolViolation(f"w{state.worker_id} holds {frame.path} twice")
        seen.add(frame.path)
