"""
Seeded discrete-event simulation of p workers, a network and a resilient store.

Events are ordered by (time, kind rank, worker, ticket). Failures are injected
between events, never inside a handler.
"""
import heapq
from enum import IntEnum
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from loguru import logger

from database.resilient_store import ResilientStore
from models.errors import AllWorkersFailed, Deadlock, NoWorkersAlive, StepBudgetExceeded, StoreFailed
from models.frame import Frame, root_frame
from models.program import ProgramSpec
from models.sequential import SequentialResult, sequential_run
from resilience.worker import ResilientWorker
from runtime.messages import FailureNotice, FrameReturn, Loot, Message, NoLoot, ResultLocationUpdate, StealRequest
from simulator.audit import AuditReport, GlobalSnapshot, audit_conservation
from simulator.faults import FailurePlan, TriggerKind
from simulator.network import Network
from simulator.report import Aborted, Metrics, SimReport, TraceEvent
from utils.config import SimConfig, default_seed

ROOT_WORKER = 0


class EventKind(IntEnum):
    DELIVER = 0
    NOTICE = 1
    RECOVER = 2
    TICK = 3


_HANDLERS = {
    StealRequest: "on_steal_request",
    Loot: "on_loot",
    NoLoot: "on_no_loot",
    FrameReturn: "on_frame_return",
    ResultLocationUpdate: "on_result_location",
    FailureNotice: "on_failure_notice",
}


class Simulator:
    """Owns the workers, the store, the network and the event queue of one run."""

    def __init__(
        self,
        program: ProgramSpec,
        root_args: Sequence[int],
        p: int,
        plan: Optional[FailurePlan] = None,
        seed: Optional[int] = None,
        config: Optional[SimConfig] = None,
        oracle: Optional[SequentialResult] = None,
    ):
        if p < 1:
            raise ValueError("p must be at least 1")
        self.program = program
        self.root_args = tuple(root_args)
        self.p = p
        self.plan = (plan or FailurePlan()).check_workers(p)
        self.seed = default_seed() if seed is None else seed
        self.config = config or SimConfig()
        self.oracle = oracle or sequential_run(program, self.root_args, record_order=False)

        streams = np.random.SeedSequence(self.seed).spawn(2 * p + 1)
        self._steal_rngs = [np.random.default_rng(s) for s in streams[:p]]
        self.network = Network([np.random.default_rng(s) for s in streams[p:2 * p]], self.config.max_network_delay)
        self._injector_rng = np.random.default_rng(streams[2 * p])

        self.now = 0
        self.step = 0
        self.store = ResilientStore(clock=lambda: self.step)
        self.workers = [ResilientWorker(w, self) for w in range(p)]
        self.result: Optional[int] = None
        self.metrics = Metrics()
        self.trace: List[TraceEvent] = []
        self.audit_violations: List[str] = []
        self.event_counts = [0] * p
        self.started: Set[Tuple[int, ...]] = set()

        self._queue: List[Tuple[int, int, int, int]] = []
        self._payloads: Dict[int, Any] = {}
        self._tickets = 0
        self._fired: Set[int] = set()
        self._deferred_kills: List[Tuple[Tuple[int, ...], str]] = []
        self.budget = self.config.budget_factor * self.oracle.task_count

    # --- interface used by the workers -------------------------------

    def _push(self, at: int, kind: EventKind, worker: int, payload: Any = None) -> int:
        self._tickets += 1
        heapq.heappush(self._queue, (at, int(kind), worker, self._tickets))
        self._payloads[self._tickets] = payload
        return self._tickets

    def send(self, src: int, dst: int, message: Message):
        self._tickets += 1
        ticket = self._tickets
        at = self.network.post(src, dst, message, self.now, ticket)
        heapq.heappush(self._queue, (at, int(EventKind.DELIVER), dst, ticket))
        self.metrics.messages_sent += 1

    def schedule_tick(self, worker: int, delay: int):
        self._push(self.now + delay, EventKind.TICK, worker)

    def schedule_recovery(self, worker: int, failed: int, delay: int):
        self._push(self.now + delay, EventKind.RECOVER, worker, failed)

    def worker_rng(self, worker: int) -> np.random.Generator:
        return self._steal_rngs[worker]

    def count(self, metric: str, n: int = 1):
        setattr(self.metrics, metric, getattr(self.metrics, metric) + n)

    def record(self, kind: str, worker: Optional[int], /, **detail):
        if self.config.trace:
            self.trace.append(TraceEvent(step=self.step, kind=kind, worker=worker, detail=detail))

    def task_started(self, worker: int, frame: Frame):
        self.metrics.task_executions += 1
        rerun = frame.path in self.started
        self.started.add(frame.path)
        self.record("TASK", worker, path=list(frame.path), rerun=rerun)

    def claimed(self, claimant: int, failed: int):
        """A recovery of `failed` was claimed; arm the during-recovery kills waiting for it."""
        for i, entry in enumerate(self.plan.entries):
            if i in self._fired or entry.trigger is not TriggerKind.DURING_RECOVERY or entry.worker != failed:
                continue
            self._fired.add(i)
            victims = tuple(entry.victims) + ((claimant,) if entry.include_claimant else ())
            self._deferred_kills.append((victims, entry.spec()))

    def finish(self, value: int, worker: int):
        self.store.put_result(value, worker)
        self.result = value
        self.record("RESULT", worker, value=value)
        logger.debug("[SIM] root finished on w{} with {}", worker, value)

    # --- failures ----------------------------------------------------

    @property
    def alive(self) -> List[int]:
        return [w.worker_id for w in self.workers if w.alive]

    def kill(self, victims: Sequence[int], cause: str):
        dead = [v for v in victims if self.workers[v].alive]
        if not dead:
            return
        for v in dead:
            self.workers[v].alive = False
        self.record("FAIL", None, workers=dead, cause=cause)
        logger.info("[FAIL] workers {} fail ({}) at step {}", dead, cause, self.step)
        survivors = self.alive
        if not survivors:
            raise AllWorkersFailed(f"all {self.p} workers failed ({cause})")
        notice = FailureNotice(failed=tuple(dead))
        for w in survivors:
            delay = int(self._injector_rng.integers(0, self.config.max_notice_delay + 1))
            self._push(self.now + delay, EventKind.NOTICE, w, notice)

    def _inject_step_failures(self):
        if self.plan.store_fail_step is not None and self.step >= self.plan.store_fail_step and not self.store.failed:
            self.store.fail()
            self.record("STORE_FAIL", None)
            raise StoreFailed(f"resilient store failed at step {self.step}")
        for i, entry in enumerate(self.plan.entries):
            if i not in self._fired and entry.trigger is TriggerKind.AT_STEP and self.step >= entry.step:
                self._fired.add(i)
                self.kill(entry.victims, entry.spec())

    def _inject_worker_failures(self, worker: int) -> bool:
        """Failures and resets tied to `worker`'s next event. True when the worker died."""
        k = self.event_counts[worker]
        for i, entry in enumerate(self.plan.entries):
            if i not in self._fired and entry.trigger is TriggerKind.AT_EVENT and entry.victims[0] == worker and entry.k == k:
                self._fired.add(i)
                self.kill(entry.victims, entry.spec())
        if not self.workers[worker].alive:
            return True
        for reset in self.plan.resets:
            if reset.worker == worker and reset.k == k:
                self.workers[worker].reset_to_checkpoint()
        return False

    # --- event loop --------------------------------------------------

    def _dispatch(self, kind: EventKind, worker: ResilientWorker, payload: Any):
        if kind in (EventKind.DELIVER, EventKind.NOTICE):
            getattr(worker, _HANDLERS[type(payload)])(payload)
        elif kind is EventKind.RECOVER:
            worker.complete_recovery(payload)
        else:
            worker.tick()

    def _run_event(self) -> bool:
        at, kind, wid, ticket = heapq.heappop(self._queue)
        kind = EventKind(kind)
        if kind is EventKind.DELIVER:
            payload = self.network.take(ticket).message
        else:
            payload = self._payloads.pop(ticket)
        self.now = max(self.now, at)
        worker = self.workers[wid]
        if not worker.alive:
            return False
        self.step += 1
        self._inject_step_failures()
        if not worker.alive:
            return True
        self.event_counts[wid] += 1
        if self._inject_worker_failures(wid):
            return True
        self._dispatch(kind, worker, payload)
        while self._deferred_kills:
            victims, cause = self._deferred_kills.pop(0)
            self.kill(victims, cause)
        return True

    def global_snapshot(self) -> GlobalSnapshot:
        unrecovered = {}
        for w in self.workers:
            if not w.alive:
                cp = self.store.peek_checkpoint(w.worker_id)
                if not cp.recovered:
                    unrecovered[w.worker_id] = cp.state
        return GlobalSnapshot(
            alive={w.worker_id: w.state.snapshot() for w in self.workers if w.alive},
            unrecovered=unrecovered,
            transit=self.store.transit_records(),
            result=self.result,
        )

    def audit(self) -> AuditReport:
        report = audit_conservation(self.global_snapshot())
        for violation in report.violations:
            self.audit_violations.append(f"step {self.step}: {violation}")
        return report

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "time": self.now,
            "alive": self.alive,
            "workers": {
                w.worker_id: {
                    "alive": w.alive,
                    "seq": w.seq,
                    "mode": w.state.mode.value,
                    "pending_steal": w.pending_steal,
                    "known_dead": sorted(w.known_dead),
                    "state": w.state.snapshot().model_dump(mode="json"),
                }
                for w in self.workers
            },
            "transit": [r.model_dump(mode="json") for r in self.store.transit_records()],
            "in_flight": [m.model_dump(mode="json") for m in self.network.pending()],
        }

    def run(self) -> SimReport:
        try:
            self.store.initialize(range(self.p))
            self.workers[ROOT_WORKER].start_root(root_frame(self.program.program_id, self.root_args))
            for worker in self.workers:
                if worker.worker_id != ROOT_WORKER:
                    worker.ensure_tick(1)
            while self.result is None:
                if not self._queue:
                    raise Deadlock(
                        f"no events left at step {self.step} and no result for {self.program.program_id}{self.root_args}",
                        self.diagnostics(),
                    )
                if self.step >= self.budget:
                    raise StepBudgetExceeded(f"step budget {self.budget} exhausted", self.diagnostics())
                if self._run_event() and self.config.audit:
                    self.audit()
            outcome = self.result
        except StoreFailed as e:
            logger.warning("[SIM] aborted: {}", e)
            outcome = Aborted(reason="StoreFailed", detail=str(e))
        except NoWorkersAlive as e:
            logger.warning("[SIM] aborted: {}", e)
            outcome = Aborted(reason="AllWorkersFailed", detail=str(e))
        return self.report(outcome)

    def report(self, outcome: Union[int, Aborted]) -> SimReport:
        """The report for the run so far, ending in `outcome` (a value or an Aborted)."""
        self.metrics.logical_tasks = len(self.started)
        self.metrics.re_executions = self.metrics.task_executions - self.metrics.logical_tasks
        return SimReport(
            program=self.program.program_id,
            root_args=self.root_args,
            seed=self.seed,
            plan=self.plan.spec(),
            result=outcome,
            oracle=self.oracle.value,
            p_initial=self.p,
            p_final=len(self.alive),
            steps=self.step,
            metrics=self.metrics,
            audit_violations=self.audit_violations,
            trace=self.trace if self.config.trace else None,
        )


def run_simulation(
    program: ProgramSpec,
    root_args: Sequence[int],
    p: int,
    plan: Optional[FailurePlan] = None,
    seed: Optional[int] = None,
    config: Optional[SimConfig] = None,
    oracle: Optional[SequentialResult] = None,
) -> SimReport:
    """Run `program(root_args)` on p simulated workers under `plan` and report the outcome."""
    return Simulator(program, root_args, p, plan=plan, seed=seed, config=config, oracle=oracle).run()
