"""
Messages exchanged between workers. Loot and FrameReturn always refer to a
transit record that was stored before the message was sent.
"""
from typing import Annotated, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from models.frame import Frame, Path


class _Message(BaseModel):
    model_config = ConfigDict(frozen=True)


class StealRequest(_Message):
    kind: Literal["steal_request"] = "steal_request"
    thief: int


class Loot(_Message):
    kind: Literal["loot"] = "loot"
    victim: int
    frame: Frame
    transit_key: str


class NoLoot(_Message):
    kind: Literal["no_loot"] = "no_loot"
    victim: int


class FrameReturn(_Message):
    kind: Literal["frame_return"] = "frame_return"
    thief: int
    frame: Frame
    transit_key: str


class ResultLocationUpdate(_Message):
    """A saved result for `parent_path` moved from one of `old_holders` to `new_holder`."""

    kind: Literal["result_location"] = "result_location"
    parent_path: Path
    child_path: Path
    old_holders: Tuple[int, ...]
    new_holder: int


class FailureNotice(_Message):
    kind: Literal["failure_notice"] = "failure_notice"
    failed: Tuple[int, ...]


Message = Annotated[
    Union[StealRequest, Loot, NoLoot, FrameReturn, ResultLocationUpdate, FailureNotice],
    Field(discriminator="kind"),
]
