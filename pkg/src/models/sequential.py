"""
Single-worker depth-first executor, the ground truth for every simulated run.
"""
from typing import List, Sequence

from loguru import logger
from pydantic import BaseModel

from models.errors import StepBudgetExceeded
from models.frame import Frame, Path, Return, Spawn, root_frame
from models.program import ProgramSpec, step_frame

DEFAULT_STEP_BUDGET = 10_000_000


class SequentialResult(BaseModel):
    value: int
    task_count: int
    steps: int
    order: List[Path]


def sequential_run(
    program: ProgramSpec,
    root_args: Sequence[int],
    step_budget: int = DEFAULT_STEP_BUDGET,
    record_order: bool = True,
) -> SequentialResult:
    """Run the program depth-first and report value, task count and task start order."""
    stack: List[Frame] = []
    current = root_frame(program.program_id, root_args)
    order: List[Path] = [current.path] if record_order else []
    tasks = 1
    steps = 0
    counter = 0
    while True:
        steps += 1
        if steps > step_budget:
            raise StepBudgetExceeded(f"sequential run of {program.program_id}{tuple(root_args)} exceeded {step_budget} steps")
        action = step_frame(current, program)
        if isinstance(action, Spawn):
            counter += 1
            continuation, child = current.branch(action, owner=0, child_id=f"seq-{counter}", holder=0)
            stack.append(continuation)
            current = child
            tasks += 1
            if record_order:
                order.append(child.path)
        elif isinstance(action, Return):
            if not stack:
                logger.debug("[SEQ] {}{} = {} ({} tasks)", program.program_id, tuple(root_args), action.value, tasks)
                return SequentialResult(value=action.value, task_count=tasks, steps=steps, order=order)
            parent = stack.pop()
            current = parent.fill(current.path[-1], action.value)
        else:
            # depth-first order leaves nothing pending at a sync
            current = current.at_section(current.section + 1)


def sequential_execute(program: ProgramSpec, root_args: Sequence[int], step_budget: int = DEFAULT_STEP_BUDGET) -> int:
    return sequential_run(program, root_args, step_budget, record_order=False).value
