"""
Discrete-event simulation harness: event loop, network, failure injection,
conservation audit, reports and verification sweeps.
"""
from simulator.engine import Simulator, run_simulation
from simulator.faults import FailurePlan, parse_kill_spec, parse_plan
from simulator.report import Aborted, SimReport

__all__ = ["Simulator", "run_simulation", "FailurePlan", "parse_kill_spec", "parse_plan", "Aborted", "SimReport"]
