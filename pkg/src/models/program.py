"""
NFJ programs as section-structured resumable step functions.

Section `s` of a task runs its sequential code and ends with one Action: a
Spawn continuing at a later section, a Sync, or a Return.
"""
import re
from typing import Callable, List, Tuple

from pydantic import BaseModel, ConfigDict, Field

from models.errors import InvalidSection, UnknownProgram
from models.frame import Action, Frame, Return, Spawn, Sync


class ProgramSpec(BaseModel):
    """A nested fork-join program. `step` must be a pure function of the frame."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    program_id: str
    step: Callable[[Frame], Action] = Field(exclude=True)
    description: str = ""
    sections: int
    sync_section: int
    section_cost: int = 1


def step_frame(frame: Frame, program: ProgramSpec) -> Action:
    """Next action of `frame`. The frame is not modified; the caller applies the transition."""
    if frame.program_id != program.program_id:
        raise UnknownProgram(f"frame {frame.frame_id} belongs to {frame.program_id!r}, not {program.program_id!r}")
    if frame.section < 0 or frame.section >= program.sections:
        raise InvalidSection(f"section {frame.section} outside 0..{program.sections - 1} of {program.program_id}")
    if frame.section > program.sync_section and not frame.all_filled:
        raise InvalidSection(f"frame {frame.path} resumed at section {frame.section} with pending slots {frame.pending_slots()}")
    return program.step(frame)


def _fib_step(frame: Frame) -> Action:
    n = frame.args[0]
    if frame.section == 0:
        if n < 2:
            return Return(value=n)
        return Spawn(args=(n - 1,), continuation=1)
    if frame.section == 1:
        return Spawn(args=(n - 2,), continuation=2)
    if frame.section == 2:
        return Sync()
    x, y = frame.values()
    return Return(value=x + y)


FIB = ProgramSpec(
    program_id="fib",
    step=_fib_step,
    description="int fib(int n): spawn fib(n-1), spawn fib(n-2), sync, return x + y",
    sections=4,
    sync_section=2,
)


def tree_program(branching: int, depth: int, cost: int = 1) -> ProgramSpec:
    """Full `branching`-ary task tree of the given depth.

    Every task returns 1 plus the sum of its children, so the result is the task count.
    """
    if branching < 1 or depth < 0 or cost < 1:
        raise UnknownProgram(f"invalid tree parameters b={branching} d={depth} c={cost}")

    def step(frame: Frame) -> Action:
        level = frame.args[0]
        if frame.section == 0 and level >= depth:
            return Return(value=1)
        if frame.section < branching:
            return Spawn(args=(level + 1,), continuation=frame.section + 1)
        if frame.section == branching:
            return Sync()
        return Return(value=1 + sum(frame.values()))

    return ProgramSpec(
        program_id=f"tree(b={branching},d={depth},c={cost})",
        step=step,
        description=f"synthetic {branching}-ary tree of depth {depth}, {cost} step(s) per section",
        sections=branching + 2,
        sync_section=branching,
        section_cost=cost,
    )


def builtin_programs() -> List[ProgramSpec]:
    return [FIB, tree_program(2, 3), tree_program(3, 3)]


_TREE_CALL = re.compile(r"^tree\(b=(\d+),d=(\d+)(?:,c=(\d+))?\)$")
_TREE_SELECTOR = re.compile(r"^tree:(\d+),(\d+)(?:,(\d+))?$")
_FIB_SELECTOR = re.compile(r"^fib:(\d+)$")


def resolve_program(name: str) -> ProgramSpec:
    """Look up a program by name: `fib` or `tree(b=<b>,d=<d>[,c=<cost>])`."""
    name = name.replace(" ", "")
    if name == "fib":
        return FIB
    match = _TREE_CALL.match(name)
    if match:
        b, d, c = match.groups()
        return tree_program(int(b), int(d), int(c or 1))
    raise UnknownProgram(f"unknown program {name!r}")


def parse_program_selector(selector: str) -> Tuple[ProgramSpec, Tuple[int, ...]]:
    """Parse a CLI selector `fib:<n>` or `tree:<b>,<d>[,<cost>]` into (program, root args)."""
    selector = selector.strip().replace(" ", "")
    match = _FIB_SELECTOR.match(selector)
    if match:
        return FIB, (int(match.group(1)),)
    match = _TREE_SELECTOR.match(selector)
    if match:
        b, d, c = match.groups()
        return tree_program(int(b), int(d), int(c or 1)), (0,)
    raise UnknownProgram(f"cannot parse program selector {selector!r}")
