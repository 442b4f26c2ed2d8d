from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.frame import Frame, Path


class WorkerMode(str, Enum):
    WORKING = "working"
    IDLE = "idle"
    STEALING = "stealing"


class StealLink(BaseModel):
    """One side of a steal: the peer (victim or thief identity) and the stolen frame.

    `hop` is the frame's steal count right after the steal; along a steal chain
    hops strictly increase, so the most recent link of a frame has the highest hop.
    """

    model_config = ConfigDict(frozen=True)

    peer: int
    path: Path
    frame_id: str
    hop: int


class SavedResult(BaseModel):
    """A child's result kept locally because its parent frame is away (rF)."""

    model_config = ConfigDict(frozen=True)

    child_path: Path
    child_id: str
    value: int
    thief_expected_at: Optional[int] = None

    @property
    def parent_path(self) -> Path:
        return self.child_path[:-1]

    @property
    def slot(self) -> int:
        return self.child_path[-1]


class StateSnapshot(BaseModel):
    """The checkpointable state of a worker.

    The six items: pool, saved results, returned frames, open victims,
    open thieves and (only before branching) the next task. `identities` lists
    the worker ids whose role this worker holds (itself plus adopted workers).
    """

    model_config = ConfigDict(frozen=True)

    pool: List[Frame] = Field(default_factory=list)
    saved_results: List[SavedResult] = Field(default_factory=list)
    returned_frames: List[Frame] = Field(default_factory=list)
    open_victims: List[StealLink] = Field(default_factory=list)
    open_thieves: List[StealLink] = Field(default_factory=list)
    next_task: Optional[Frame] = None
    identities: List[int] = Field(default_factory=list)

    def frames(self) -> List[Frame]:
        held = list(self.pool) + list(self.returned_frames)
        if self.next_task is not None:
            held.append(self.next_task)
        return held


class WorkerState(BaseModel):
    """Live state of one worker. Pool index 0 is the oldest frame."""

    worker_id: int
    pool: List[Frame] = Field(default_factory=list)
    saved_results: List[SavedResult] = Field(default_factory=list)
    returned_frames: List[Frame] = Field(default_factory=list)
    open_victims: List[StealLink] = Field(default_factory=list)
    open_thieves: List[StealLink] = Field(default_factory=list)
    next_task: Optional[Frame] = None
    mode: WorkerMode = WorkerMode.IDLE
    identities: List[int] = Field(default_factory=list)
    frame_counter: int = 0

    @model_validator(mode="after")
    def _own_identity(self) -> "WorkerState":
        if self.worker_id not in self.identities:
            self.identities.insert(0, self.worker_id)
        return self

    def frames(self) -> List[Frame]:
        held = list(self.pool) + list(self.returned_frames)
        if self.next_task is not None:
            held.append(self.next_task)
        return held

    def snapshot(self, include_next_task: bool = True) -> StateSnapshot:
        return StateSnapshot(
            pool=list(self.pool),
            saved_results=list(self.saved_results),
            returned_frames=list(self.returned_frames),
            open_victims=list(self.open_victims),
            open_thieves=list(self.open_thieves),
            next_task=self.next_task if include_next_task else None,
            identities=list(self.identities),
        )

    @classmethod
    def from_snapshot(cls, worker_id: int, snapshot: StateSnapshot, frame_counter: int = 0) -> "WorkerState":
        state = cls(
            worker_id=worker_id,
            pool=list(snapshot.pool),
            saved_results=list(snapshot.saved_results),
            returned_frames=list(snapshot.returned_frames),
            open_victims=list(snapshot.open_victims),
            open_thieves=list(snapshot.open_thieves),
            next_task=snapshot.next_task,
            identities=list(snapshot.identities),
            frame_counter=frame_counter,
        )
        state.mode = WorkerMode.WORKING if state.next_task or state.pool or state.returned_frames else WorkerMode.IDLE
        return state
