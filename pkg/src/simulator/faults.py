"""
Failure plans and the kill-spec mini-language.

    1@e10                kill worker 1 right before its 10th event
    1,2@s50              kill workers 1 and 2 together before global step 50
    buddy(1)@recovery(1) kill whoever claims the recovery of worker 1, mid-recovery
    3@recovery(1)        kill worker 3 when the recovery of worker 1 is claimed
    @s200                the resilient store fails before step 200
    2@r7                 reset worker 2 to its last checkpoint before its 7th event
"""
import re
from enum import Enum
from typing import Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, model_validator

from models.errors import InvalidPlan

_SPEC = re.compile(r"^\s*(?P<targets>[^@]*)@(?P<trigger>[a-z]+)\(?(?P<arg>\d+)\)?\s*$")
_BUDDY = re.compile(r"^buddy\((\d+)\)$")


class TriggerKind(str, Enum):
    AT_STEP = "step"
    AT_EVENT = "event"
    DURING_RECOVERY = "recovery"


class FailureEntry(BaseModel):
    """One failure trigger and the workers it kills at once."""

    model_config = ConfigDict(frozen=True)

    trigger: TriggerKind
    victims: Tuple[int, ...] = ()
    step: Optional[int] = None
    worker: Optional[int] = None
    k: Optional[int] = None
    include_claimant: bool = False

    @model_validator(mode="after")
    def _complete(self) -> "FailureEntry":
        if self.trigger is TriggerKind.AT_STEP and self.step is None:
            raise InvalidPlan("step trigger needs a step")
        if self.trigger is TriggerKind.AT_EVENT and (self.k is None or len(self.victims) != 1):
            raise InvalidPlan("event trigger needs exactly one worker and an event index")
        if self.trigger is TriggerKind.DURING_RECOVERY and self.worker is None:
            raise InvalidPlan("recovery trigger needs the recovered worker")
        if not self.victims and not self.include_claimant:
            raise InvalidPlan("failure entry kills nobody")
        return self

    def spec(self) -> str:
        targets = [str(v) for v in self.victims]
        if self.include_claimant:
            targets.insert(0, f"buddy({self.worker})")
        lhs = ",".join(targets)
        if self.trigger is TriggerKind.AT_STEP:
            return f"{lhs}@s{self.step}"
        if self.trigger is TriggerKind.AT_EVENT:
            return f"{lhs}@e{self.k}"
        return f"{lhs}@recovery({self.worker})"


class ResetEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    worker: int
    k: int

    def spec(self) -> str:
        return f"{self.worker}@r{self.k}"


class FailurePlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: Tuple[FailureEntry, ...] = ()
    store_fail_step: Optional[int] = None
    resets: Tuple[ResetEntry, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.entries and self.store_fail_step is None and not self.resets

    def spec(self) -> str:
        """The plan in kill-spec form; `parse_plan(plan.spec().split(";"))` gives the plan back."""
        parts = [entry.spec() for entry in self.entries]
        if self.store_fail_step is not None:
            parts.append(f"@s{self.store_fail_step}")
        parts.extend(reset.spec() for reset in self.resets)
        return ";".join(parts)

    def check_workers(self, p: int) -> "FailurePlan":
        for entry in self.entries:
            named = list(entry.victims) + ([entry.worker] if entry.worker is not None else [])
            for w in named:
                if not 0 <= w < p:
                    raise InvalidPlan(f"worker {w} out of range 0..{p - 1} in '{entry.spec()}'")
        for reset in self.resets:
            if not 0 <= reset.worker < p:
                raise InvalidPlan(f"worker {reset.worker} out of range 0..{p - 1} in '{reset.spec()}'")
        return self

    def merged(self, other: "FailurePlan") -> "FailurePlan":
        if self.store_fail_step is not None and other.store_fail_step is not None:
            raise InvalidPlan("at most one store failure per plan")
        return FailurePlan(
            entries=self.entries + other.entries,
            store_fail_step=self.store_fail_step if self.store_fail_step is not None else other.store_fail_step,
            resets=self.resets + other.resets,
        )


def _parse_targets(text: str) -> Tuple[List[int], Optional[int]]:
    victims, buddy_of = [], None
    for token in filter(None, (t.strip() for t in text.split(","))):
        buddy = _BUDDY.match(token)
        if buddy:
            buddy_of = int(buddy.group(1))
        elif token.isdigit():
            victims.append(int(token))
        else:
            raise InvalidPlan(f"bad kill target '{token}'")
    if len(set(victims)) != len(victims):
        raise InvalidPlan(f"duplicate kill target in '{text}'")
    return victims, buddy_of


def parse_kill_spec(spec: str) -> FailurePlan:
    """Parse one kill spec into a (single entry) FailurePlan. Raises InvalidPlan."""
    match = _SPEC.match(spec)
    if match is None:
        raise InvalidPlan(f"cannot parse kill spec '{spec}'")
    trigger, arg = match.group("trigger"), int(match.group("arg"))
    victims, buddy_of = _parse_targets(match.group("targets"))
    if trigger == "s" and not victims and buddy_of is None:
        return FailurePlan(store_fail_step=arg)
    if trigger == "r":
        if len(victims) != 1 or buddy_of is not None:
            raise InvalidPlan(f"a reset names exactly one worker: '{spec}'")
        return FailurePlan(resets=(ResetEntry(worker=victims[0], k=arg),))
    if buddy_of is not None and trigger != "recovery":
        raise InvalidPlan(f"buddy(...) is only meaningful with @recovery(...): '{spec}'")
    if buddy_of is not None and buddy_of != arg:
        raise InvalidPlan(f"buddy({buddy_of}) must match recovery({arg})")
    try:
        if trigger == "s":
            entry = FailureEntry(trigger=TriggerKind.AT_STEP, victims=tuple(victims), step=arg)
        elif trigger == "e":
            entry = FailureEntry(trigger=TriggerKind.AT_EVENT, victims=tuple(victims), worker=victims[0] if victims else None, k=arg)
        elif trigger == "recovery":
            entry = FailureEntry(
                trigger=TriggerKind.DURING_RECOVERY,
                victims=tuple(victims),
                worker=arg,
                include_claimant=buddy_of is not None,
            )
        else:
            raise InvalidPlan(f"unknown trigger '@{trigger}' in '{spec}'")
    except ValueError as e:
        # pydantic wraps validator errors
        raise InvalidPlan(f"invalid kill spec '{spec}': {e}") from e
    return FailurePlan(entries=(entry,))


def parse_plan(specs: Iterable[str]) -> FailurePlan:
    """Combine several kill specs (each may itself be ';'-separated) into one plan."""
    plan = FailurePlan()
    for spec in specs:
        for part in filter(None, (s.strip() for s in spec.split(";"))):
            plan = plan.merged(parse_kill_spec(part))
    return plan
