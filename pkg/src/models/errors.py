"""
Exceptions raised by the simulator and its building blocks.
"""
from typing import Any, Dict, Optional


class SimulationError(Exception):
    """Base class for every error raised by nfjsim."""


class UnknownProgram(SimulationError):
    pass


class InvalidSection(SimulationError):
    pass


class InvalidPlan(SimulationError):
    """A failure plan or kill spec could not be parsed or is inconsistent."""


class StepBudgetExceeded(SimulationError):
    """The run did not finish within its step budget."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class Deadlock(StepBudgetExceeded):
    """No event is left to execute but the root result is missing."""


class StaleSequence(SimulationError):
    pass


class StoreFailed(SimulationError):
    pass


class UnknownTransit(SimulationError):
    pass


class ProtocolViolation(SimulationError):
    """An invariant of the work stealing or resilience protocols was broken."""


class NoWorkersAlive(SimulationError):
    pass


class AllWorkersFailed(NoWorkersAlive):
    pass
