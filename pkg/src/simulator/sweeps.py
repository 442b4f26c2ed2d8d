"""
Verification drivers: exhaustive single-failure sweeps, simultaneous-failure
grids and random fuzzing over failure plans.
"""
from itertools import combinations
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from models.errors import SimulationError
from models.program import ProgramSpec
from models.sequential import SequentialResult, sequential_run
from simulator.checks import localization_violations, re_execution_violations
from simulator.engine import Simulator
from simulator.faults import FailureEntry, FailurePlan, ResetEntry, TriggerKind
from simulator.report import Aborted, SimReport
from utils.config import SimConfig, default_seed

SWEEP_COLUMNS = ["p", "plan", "result_ok", "re_executions", "checkpoints_written", "recovery_count"]


def passed(report: SimReport) -> bool:
    """Correct result, or an abort because nobody survived; no audit or trace check findings."""
    if report.audit_violations or report.violations:
        return False
    if report.aborted:
        return report.result.reason == "AllWorkersFailed"
    return report.ok


def check_violations(report: SimReport) -> List[str]:
    if not report.trace:
        return []
    return re_execution_violations(report.trace) + localization_violations(report.trace, report.p_initial)


def checked_run(
    program: ProgramSpec,
    root_args: Sequence[int],
    p: int,
    plan: FailurePlan,
    seed: int,
    config: SimConfig,
    oracle: SequentialResult,
    keep_trace: bool = False,
) -> SimReport:
    """One run with trace checks applied; the trace is dropped unless `keep_trace`.

    A run that deadlocks, exhausts its step budget or breaks a protocol invariant
    is reported as aborted with the error among its violations.
    """
    sim = Simulator(program, root_args, p, plan=plan, seed=seed, config=config, oracle=oracle)
    try:
        report = sim.run()
        violations = check_violations(report)
    except SimulationError as e:
        logger.warning("[SWEEP] plan {!r} seed {} failed: {}", plan.spec(), seed, e)
        report = sim.report(Aborted(reason=type(e).__name__, detail=str(e)))
        violations = [f"{type(e).__name__}: {e}"] + check_violations(report)
    update = {"violations": violations}
    if not keep_trace:
        update["trace"] = None
    return report.model_copy(update=update)


def reference_run(program: ProgramSpec, root_args: Sequence[int], p: int, seed: int, config: SimConfig) -> Simulator:
    sim = Simulator(program, root_args, p, seed=seed, config=config)
    sim.run()
    return sim


def exhaustive_single_failure_sweep(
    program: ProgramSpec,
    root_args: Sequence[int],
    p: int,
    seed: Optional[int] = None,
    config: Optional[SimConfig] = None,
) -> List[SimReport]:
    """Kill each worker before each of its events 1..E, E being the largest
    per-worker event count of the failure-free run."""
    seed = default_seed() if seed is None else seed
    config = config or SimConfig()
    oracle = sequential_run(program, root_args, record_order=False)
    reference = reference_run(program, root_args, p, seed, config)
    horizon = max(reference.event_counts)
    logger.info("[SWEEP] {}{} p={}: {} kill points per worker", program.program_id, tuple(root_args), p, horizon)
    reports = []
    for worker in range(p):
        for k in range(1, horizon + 1):
            plan = FailurePlan(entries=(FailureEntry(trigger=TriggerKind.AT_EVENT, victims=(worker,), worker=worker, k=k),))
            reports.append(checked_run(program, root_args, p, plan, seed, config, oracle))
    return reports


def multi_failure_grid(
    program: ProgramSpec,
    root_args: Sequence[int],
    p: int,
    k: int,
    seed: Optional[int] = None,
    config: Optional[SimConfig] = None,
    points: int = 4,
) -> List[SimReport]:
    """Kill every k-subset of workers together at `points` evenly spaced steps of the failure-free run."""
    seed = default_seed() if seed is None else seed
    config = config or SimConfig()
    if k < 1 or k > p:
        return []
    oracle = sequential_run(program, root_args, record_order=False)
    steps = reference_run(program, root_args, p, seed, config).step
    at = sorted({max(1, int(s)) for s in np.linspace(1, steps, num=points + 2)[1:-1]})
    logger.info("[SWEEP] {}-subsets of {} workers at steps {}", k, p, at)
    reports = []
    for victims in combinations(range(p), k):
        for step in at:
            plan = FailurePlan(entries=(FailureEntry(trigger=TriggerKind.AT_STEP, victims=victims, step=step),))
            reports.append(checked_run(program, root_args, p, plan, seed, config, oracle))
    return reports


def sweep_frame(reports: Sequence[SimReport]) -> pd.DataFrame:
    rows = [
        {
            "p": r.p_initial,
            "plan": r.plan,
            "result_ok": r.ok,
            "re_executions": r.metrics.re_executions,
            "checkpoints_written": r.metrics.checkpoints_written,
            "recovery_count": r.metrics.recovery_count,
        }
        for r in reports
    ]
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


class FuzzCase(BaseModel):
    seed: int
    plan: str
    outcome: str
    violations: List[str] = Field(default_factory=list)


class FuzzSummary(BaseModel):
    iterations: int
    passed: int = 0
    aborted: int = 0
    failures: List[FuzzCase] = Field(default_factory=list)

    @property
    def first_failure(self) -> Optional[FuzzCase]:
        return self.failures[0] if self.failures else None


def random_plan(rng: np.random.Generator, p: int, horizon: int) -> FailurePlan:
    """A plan with one to three triggers: step kills (possibly simultaneous), event kills,
    during-recovery kills and resets to the last checkpoint."""
    entries = []
    resets = []
    for _ in range(int(rng.integers(1, 4))):
        choice = int(rng.integers(4))
        if choice == 0:
            size = int(rng.integers(1, min(2, p) + 1))
            victims = tuple(sorted(int(v) for v in rng.choice(p, size=size, replace=False)))
            entries.append(FailureEntry(trigger=TriggerKind.AT_STEP, victims=victims, step=int(rng.integers(1, horizon + 1))))
        elif choice == 1:
            w = int(rng.integers(p))
            entries.append(FailureEntry(trigger=TriggerKind.AT_EVENT, victims=(w,), worker=w, k=int(rng.integers(1, horizon + 1))))
        elif choice == 2:
            w = int(rng.integers(p))
            entries.append(FailureEntry(trigger=TriggerKind.DURING_RECOVERY, worker=w, include_claimant=True))
            entries.append(FailureEntry(trigger=TriggerKind.AT_STEP, victims=(w,), step=int(rng.integers(1, horizon + 1))))
        else:
            resets.append(ResetEntry(worker=int(rng.integers(p)), k=int(rng.integers(1, max(1, horizon // p) + 1))))
    return FailurePlan(entries=tuple(entries), resets=tuple(resets))


def fuzz(
    program: ProgramSpec,
    root_args: Sequence[int],
    p: int,
    iterations: int,
    seed: Optional[int] = None,
    config: Optional[SimConfig] = None,
) -> FuzzSummary:
    """Run `iterations` random failure plans; every failing (seed, plan) is reported for replay."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    seed = default_seed() if seed is None else seed
    config = config or SimConfig()
    oracle = sequential_run(program, root_args, record_order=False)
    horizon = max(1, reference_run(program, root_args, p, seed, config).step)
    rng = np.random.default_rng(seed)
    summary = FuzzSummary(iterations=iterations)
    for i in range(iterations):
        run_seed = seed + i
        plan = random_plan(rng, p, horizon)
        report = checked_run(program, root_args, p, plan, run_seed, config, oracle)
        if passed(report):
            summary.passed += 1
            summary.aborted += int(report.aborted)
            continue
        case = FuzzCase(seed=run_seed, plan=plan.spec(), outcome=str(report.result), violations=report.violations + report.audit_violations)
        summary.failures.append(case)
        logger.warning("[FUZZ] failure: seed={} plan='{}' outcome={}", case.seed, case.plan, case.outcome)
    return summary
