from typing import Annotated, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from models.errors import ProtocolViolation

Path = Tuple[int, ...]


class Slot(BaseModel):
    """A child-result slot of a frame. `owner` is the worker identity that spawned the child."""

    model_config = ConfigDict(frozen=True)

    owner: int
    value: Optional[int] = None

    @property
    def filled(self) -> bool:
        return self.value is not None


class ParentRef(BaseModel):
    """Locates the parent of a frame: its logical path, its frame id and the worker
    that held it when the child was spawned."""

    model_config = ConfigDict(frozen=True)

    path: Path
    frame_id: str
    holder: int


class Spawn(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["spawn"] = "spawn"
    args: Tuple[int, ...]
    continuation: int


class Sync(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["sync"] = "sync"


class Return(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["return"] = "return"
    value: int


Action = Annotated[Union[Spawn, Sync, Return], Field(discriminator="kind")]


class Frame(BaseModel):
    """A task activation record.

    `path` is the logical identity of the task (child indices from the root) and
    survives re-execution, while `frame_id` is fresh for every activation.
    `steal_count` orders the victim/thief links of a steal chain.
    """

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "frame_id": "w0-3",
                "program_id": "fib",
                "args": [5],
                "section": 1,
                "path": [0],
                "slots": [{"owner": 0, "value": None}],
                "parent": {"path": [], "frame_id": "w0-0", "holder": 0},
                "steal_count": 0,
            }
        },
    )

    frame_id: str
    program_id: str
    args: Tuple[int, ...]
    section: int = 0
    path: Path = ()
    slots: Tuple[Slot, ...] = ()
    parent: Optional[ParentRef] = None
    steal_count: int = 0

    @property
    def is_root(self) -> bool:
        return not self.path

    @property
    def parent_path(self) -> Optional[Path]:
        return self.path[:-1] if self.path else None

    @property
    def all_filled(self) -> bool:
        return all(slot.filled for slot in self.slots)

    def pending_slots(self) -> Tuple[int, ...]:
        return tuple(i for i, slot in enumerate(self.slots) if not slot.filled)

    def owned_filled(self, identities) -> bool:
        """True if every slot spawned by one of `identities` holds its result."""
        return all(slot.filled for slot in self.slots if slot.owner in identities)

    def values(self) -> Tuple[int, ...]:
        if not self.all_filled:
            raise ProtocolViolation(f"frame {self.frame_id} {self.path} read with pending slots {self.pending_slots()}")
        return tuple(slot.value for slot in self.slots)

    def at_section(self, section: int) -> "Frame":
        if section < self.section:
            raise ProtocolViolation(f"frame {self.frame_id} cannot move back from section {self.section} to {section}")
        return self.model_copy(update={"section": section})

    def fill(self, index: int, value: int) -> "Frame":
        if index >= len(self.slots):
            raise ProtocolViolation(f"frame {self.frame_id} {self.path} has no slot {index}")
        slot = self.slots[index]
        if slot.filled:
            raise ProtocolViolation(f"slot {index} of {self.path} written twice")
        slots = self.slots[:index] + (slot.model_copy(update={"value": value}),) + self.slots[index + 1:]
        return self.model_copy(update={"slots": slots})

    def stolen(self) -> "Frame":
        return self.model_copy(update={"steal_count": self.steal_count + 1})

    def branch(self, spawn: Spawn, owner: int, child_id: str, holder: int) -> Tuple["Frame", "Frame"]:
        """Apply a Spawn: returns (parent continuation, child frame)."""
        if spawn.continuation <= self.section:
            raise ProtocolViolation(f"spawn continuation {spawn.continuation} does not advance {self.path}")
        index = len(self.slots)
        continuation = self.model_copy(
            update={"section": spawn.continuation, "slots": self.slots + (Slot(owner=owner),)}
        )
        child = Frame(
            frame_id=child_id,
            program_id=self.program_id,
            args=spawn.args,
            path=self.path + (index,),
            parent=ParentRef(path=self.path, frame_id=self.frame_id, holder=holder),
        )
        return continuation, child


def root_frame(program_id: str, args, frame_id: str = "w0-0") -> Frame:
    return Frame(frame_id=frame_id, program_id=program_id, args=tuple(args))


def describe(frame: Optional[Frame]) -> str:
    """Short human label like `(0, 2)@3` used in logs and traces."""
    if frame is None:
        return "-"
    return f"{frame.path}@{frame.section}"
