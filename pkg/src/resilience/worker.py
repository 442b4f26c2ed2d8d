"""
A worker running work-first work stealing with checkpoints, resilient steals,
the frame return protocol and buddy recovery.

Each public method is one event handler; handlers never block and never touch
another worker's state. Everything crossing worker boundaries goes through
`cluster.send` and the resilient store.
"""
from typing import TYPE_CHECKING, Callable, List, Optional, Set

from loguru import logger

from database.resilient_store import Checkpoint, CheckpointOccasion, TransitKind, TransitRecord
from models.errors import ProtocolViolation
from models.frame import Frame, Return, Spawn, describe
from models.program import step_frame
from resilience.policy import LifecycleEvent, checkpoint_now, checkpoint_policy
from resilience.recovery import merge_checkpoint
from resilience.ring import buddy_of, resolve_holder
from runtime.messages import FailureNotice, FrameReturn, Loot, NoLoot, ResultLocationUpdate, StealRequest
from runtime.state import StealLink, WorkerMode, WorkerState
from runtime.worker import (
    FinishKind,
    SyncKind,
    SyncOutcome,
    on_frame_return,
    on_loot,
    on_spawn,
    on_steal_request,
    on_sync,
    on_task_finish,
    settle,
    take_next,
)

if TYPE_CHECKING:
    from simulator.engine import Simulator


class ResilientWorker:
    """One simulated worker process."""

    def __init__(self, worker_id: int, cluster: "Simulator"):
        self.worker_id = worker_id
        self.cluster = cluster
        self.state = WorkerState(worker_id=worker_id)
        self.alive = True
        self.seq = 0
        self.known_dead: Set[int] = set()
        self.pending_steal: Optional[int] = None
        self.recovering: Set[int] = set()
        self.tasks_since_checkpoint = 0
        self.store_debt = 0
        self.tick_pending = False

    def __repr__(self) -> str:
        return f"ResilientWorker({self.worker_id}):{self.state.mode.value}"

    # --- helpers -----------------------------------------------------

    @property
    def alive_view(self) -> List[int]:
        return [w for w in range(self.cluster.p) if w not in self.known_dead]

    def resolve(self, identity: int) -> int:
        return resolve_holder(identity, self.alive_view, self.cluster.p)

    def ensure_tick(self, delay: int = 1):
        if self.alive and not self.tick_pending:
            self.tick_pending = True
            self.cluster.schedule_tick(self.worker_id, delay + self.store_debt)
            self.store_debt = 0

    def _checkpoint(
        self,
        event: LifecycleEvent,
        cause: str,
        commit: Optional[Callable[[Checkpoint], None]] = None,
        key: Optional[str] = None,
    ) -> int:
        """Write a checkpoint if the policy asks for one. Returns the store steps spent."""
        decision = checkpoint_policy(
            event,
            self.tasks_since_checkpoint,
            self.cluster.config.checkpoint_period,
            has_next_task=self.state.next_task is not None,
        )
        if not decision.write:
            return 0
        self.seq += 1
        cp = checkpoint_now(self.state, decision.occasion, self.seq, cause)
        (commit or self.cluster.store.put_checkpoint)(cp)
        self.tasks_since_checkpoint = 0
        self.cluster.count("checkpoints_written")
        self.cluster.record(
            "CKPT", self.worker_id, seq=self.seq, occasion=decision.occasion.value, cause=cause, key=key,
            pool=[list(f.path) for f in cp.state.pool],
        )
        logger.debug("[CKPT] w{} seq={} {} ({})", self.worker_id, self.seq, decision.occasion.value, cause)
        return 1

    # --- task execution ----------------------------------------------

    def start_root(self, frame: Frame):
        """Make `frame` the first task and checkpoint it so a failure of this worker cannot lose it."""
        self.state.next_task = frame
        self.state.mode = WorkerMode.WORKING
        self.seq += 1
        self.cluster.store.put_checkpoint(checkpoint_now(self.state, CheckpointOccasion.BEFORE_BRANCH, self.seq, "root"))
        self.cluster.count("checkpoints_written")
        self.cluster.record("CKPT", self.worker_id, seq=self.seq, occasion="before_branch", cause="root", pool=[])
        self.ensure_tick(0)

    def tick(self):
        """Run one section of the current task, or go stealing when out of work."""
        self.tick_pending = False
        frame = take_next(self.state)
        if frame is None:
            self._steal()
            return
        if frame.section == 0:
            self.cluster.task_started(self.worker_id, frame)
        program = self.cluster.program
        action = step_frame(frame, program)
        cost = program.section_cost
        if isinstance(action, Spawn):
            on_spawn(self.state, frame, action)
            cost += self._checkpoint(LifecycleEvent.BRANCH_CHILD, "branch")
        elif isinstance(action, Return):
            outcome = on_task_finish(self.state, frame, action.value)
            if outcome.kind is FinishKind.ROOT:
                self.cluster.finish(action.value, self.worker_id)
                return
            self.tasks_since_checkpoint += 1
            if outcome.kind is FinishKind.INCORPORATED:
                for due in settle(self.state):
                    cost += self._send_frame_return(due)
            cost += self._checkpoint(LifecycleEvent.TASK_FINISHED, "finish")
        else:
            outcome = on_sync(self.state, frame)
            if outcome.kind is SyncKind.RETURN_TO_VICTIM:
                cost += self._send_frame_return(outcome)
            elif outcome.kind is SyncKind.BLOCKED:
                self.cluster.record("BLOCKED", self.worker_id, frame=list(frame.path), pending=list(outcome.frame.pending_slots()))
        self.ensure_tick(cost)

    # --- stealing ----------------------------------------------------

    def _steal(self):
        if self.pending_steal is not None:
            return
        candidates = [w for w in self.alive_view if w != self.worker_id]
        if not candidates:
            self.state.mode = WorkerMode.IDLE
            return
        victim = candidates[int(self.cluster.worker_rng(self.worker_id).integers(len(candidates)))]
        self.pending_steal = victim
        self.state.mode = WorkerMode.STEALING
        self.cluster.send(self.worker_id, victim, StealRequest(thief=self.worker_id))

    def on_steal_request(self, message: StealRequest):
        """Victim side: extract the oldest frame, commit checkpoint + transit record, send Loot."""
        if message.thief in self.known_dead:
            return
        _, loot = on_steal_request(self.state, message.thief)
        if loot is None:
            self.cluster.send(self.worker_id, message.thief, NoLoot(victim=self.worker_id))
            return
        store = self.cluster.store
        record = TransitRecord(
            transit_key=store.new_transit_key(),
            kind=TransitKind.LOOT,
            frame=loot,
            sender=self.worker_id,
            receiver=message.thief,
        )
        self.store_debt += self._checkpoint(
            LifecycleEvent.STEAL_SERVED, "steal", commit=lambda cp: store.atomic_steal_commit(cp, record), key=record.transit_key
        )
        self.cluster.record("TRANSIT", self.worker_id, op="create", key=record.transit_key, kind=record.kind.value)
        self.cluster.count("transit_created")
        self.cluster.record(
            "STEAL", self.worker_id, victim=self.worker_id, thief=message.thief,
            frame=list(loot.path), key=record.transit_key,
        )
        self.cluster.send(self.worker_id, message.thief, Loot(victim=self.worker_id, frame=loot, transit_key=record.transit_key))

    def on_no_loot(self, message: NoLoot):
        if self.pending_steal == message.victim:
            self.pending_steal = None
            self.ensure_tick(self.cluster.config.steal_backoff)

    def _accept_transit(self, key: str) -> Optional[TransitRecord]:
        """Claim a transit record addressed to one of our identities; None for stale duplicates."""
        store = self.cluster.store
        record = store.get_transit(key)
        if record is None or record.receiver not in self.state.identities:
            return None
        return store.claim_transit(key, self.worker_id)

    def on_loot(self, message: Loot):
        """Thief side: adopt the loot, checkpoint before branching into it, delete the transit record."""
        if message.victim == self.pending_steal:
            self.pending_steal = None
        record = self._accept_transit(message.transit_key)
        if record is None:
            self.cluster.record("DROP", self.worker_id, key=message.transit_key, reason="stale loot")
            self.ensure_tick()
            return
        on_loot(self.state, record.frame, victim=record.sender)
        store = self.cluster.store
        self.store_debt += self._checkpoint(
            LifecycleEvent.BRANCH_STOLEN, "loot",
            commit=lambda cp: store.commit_receipt(cp, record.transit_key), key=record.transit_key,
        )
        self.cluster.record("TRANSIT", self.worker_id, op="delete", key=record.transit_key, kind=record.kind.value)
        self.cluster.record("LOOT", self.worker_id, victim=record.sender, frame=list(record.frame.path), key=record.transit_key)
        self.ensure_tick()

    # --- frame return ------------------------------------------------

    def _send_frame_return(self, outcome: SyncOutcome) -> int:
        """Thief side: park the frame in the store with a checkpoint, then send it to the victim."""
        store = self.cluster.store
        frame = outcome.frame
        record = TransitRecord(
            transit_key=store.new_transit_key(),
            kind=TransitKind.RETURNED_FRAME,
            frame=frame,
            sender=self.worker_id,
            receiver=outcome.victim,
        )
        cost = self._checkpoint(
            LifecycleEvent.FRAME_RETURN_SENT, "return_send",
            commit=lambda cp: store.atomic_steal_commit(cp, record), key=record.transit_key,
        )
        self.cluster.record("TRANSIT", self.worker_id, op="create", key=record.transit_key, kind=record.kind.value)
        self.cluster.count("transit_created")
        self.cluster.record(
            "RETURN", self.worker_id, thief=self.worker_id, victim=outcome.victim,
            frame=list(frame.path), key=record.transit_key,
        )
        logger.debug("[RETURN] w{} sends {} to w{}", self.worker_id, describe(frame), outcome.victim)
        self.cluster.send(
            self.worker_id, self.resolve(outcome.victim),
            FrameReturn(thief=self.worker_id, frame=frame, transit_key=record.transit_key),
        )
        return cost

    def on_frame_return(self, message: FrameReturn):
        """Victim side: incorporate the returned frame, checkpoint, delete the transit record."""
        record = self._accept_transit(message.transit_key)
        if record is None:
            self.cluster.record("DROP", self.worker_id, key=message.transit_key, reason="stale return")
            return
        on_frame_return(self.state, record.frame)
        store = self.cluster.store
        self.store_debt += self._checkpoint(
            LifecycleEvent.FRAME_RETURN_RECEIVED, "return_receive",
            commit=lambda cp: store.commit_receipt(cp, record.transit_key), key=record.transit_key,
        )
        self.cluster.record("TRANSIT", self.worker_id, op="delete", key=record.transit_key, kind=record.kind.value)
        self.cluster.record("MATCH", self.worker_id, thief=record.sender, frame=list(record.frame.path), key=record.transit_key)
        for due in settle(self.state):
            self.store_debt += self._send_frame_return(due)
        self.ensure_tick()

    # --- failures ----------------------------------------------------

    def on_failure_notice(self, message: FailureNotice):
        fresh = [w for w in message.failed if w not in self.known_dead and w != self.worker_id]
        if not fresh:
            return
        self.known_dead.update(fresh)
        self.cluster.record("NOTICE", self.worker_id, failed=sorted(fresh))
        if self.pending_steal in self.known_dead:
            self.cluster.record("STEAL_TIMEOUT", self.worker_id, victim=self.pending_steal)
            self.pending_steal = None
            self.ensure_tick()
        self._reroute()
        self._check_recovery_duty()

    def _reroute(self):
        """Resend frames we parked for receivers now known dead, toward whoever holds their role."""
        records = self.cluster.store.scan_transit(self.state.identities, "from")
        for record in records:
            if record.receiver in self.known_dead and record.claimed_by is None:
                self._resend(record, "REROUTE")

    def _resend(self, record: TransitRecord, tag: str):
        target = self.resolve(record.receiver)
        if record.kind is TransitKind.LOOT:
            message = Loot(victim=record.sender, frame=record.frame, transit_key=record.transit_key)
        else:
            message = FrameReturn(thief=record.sender, frame=record.frame, transit_key=record.transit_key)
        self.cluster.record(tag, self.worker_id, key=record.transit_key, receiver=record.receiver, target=target)
        self.cluster.send(self.worker_id, target, message)

    def _check_recovery_duty(self):
        """Claim the recovery of every dead worker whose buddy we are."""
        alive = self.alive_view
        store = self.cluster.store
        for failed in sorted(self.known_dead):
            if failed in self.state.identities or failed in self.recovering:
                continue
            if buddy_of(failed, alive, self.cluster.p) != self.worker_id:
                continue
            cp = store.get_checkpoint(failed)
            if cp.recovered:
                continue
            if cp.adopted_by is None:
                claim = store.claim_for_recovery(failed, self.worker_id)
            elif cp.adopted_by in self.known_dead:
                claim = store.supersede_claim(failed, self.worker_id, cp.adopted_by)
            else:
                continue
            if not claim.claimed:
                continue
            self.recovering.add(failed)
            self.cluster.record("RECOVER_CLAIM", self.worker_id, failed=failed, superseded=claim.superseded)
            logger.info("[RECOVER] w{} claims recovery of w{}", self.worker_id, failed)
            self.cluster.schedule_recovery(self.worker_id, failed, 1)
            self.cluster.claimed(self.worker_id, failed)

    def complete_recovery(self, failed: int):
        """Second recovery event: merge the checkpoint and in-transit frames of `failed`."""
        self.recovering.discard(failed)
        store = self.cluster.store
        cp = store.get_checkpoint(failed)
        if cp.adopted_by != self.worker_id or cp.recovered:
            return
        ids = list(cp.state.identities) or [failed]
        records = store.scan_transit(ids, "any")
        plan = merge_checkpoint(self.state, cp, records, dead=self.known_dead)
        self.seq += 1
        merged = checkpoint_now(
            self.state,
            checkpoint_policy(
                LifecycleEvent.RECOVERY_MERGED, 0, has_next_task=self.state.next_task is not None
            ).occasion,
            self.seq,
            "recovery",
        )
        store.commit_recovery(merged, failed, plan.adopted_keys)
        for key in plan.adopted_keys:
            self.cluster.record("TRANSIT", self.worker_id, op="delete", key=key, kind="adopted")
        self.tasks_since_checkpoint = 0
        self.cluster.count("checkpoints_written")
        self.cluster.count("recovery_count")
        self.cluster.record("CKPT", self.worker_id, seq=self.seq, occasion=merged.occasion.value, cause="recovery",
                            pool=[list(f.path) for f in merged.state.pool])
        self.cluster.record(
            "RECOVER", self.worker_id, failed=failed, buddy=self.worker_id, seq=cp.seq,
            actions=[step.model_dump(mode="json") for step in plan.actions],
        )
        logger.info("[RECOVER] w{} adopted w{} (checkpoint seq {})", self.worker_id, failed, cp.seq)
        for due in plan.returns_due:
            self.store_debt += self._send_frame_return(due)
        for relocation in plan.relocations:
            target = self.resolve(relocation.thief)
            if target == self.worker_id:
                continue
            self.cluster.count("relocations")
            self.cluster.record(
                "RELOC", self.worker_id, child=list(relocation.child_path), old=failed,
                new=self.worker_id, thief=relocation.thief, target=target,
            )
            self.cluster.send(
                self.worker_id, target,
                ResultLocationUpdate(
                    parent_path=relocation.parent_path,
                    child_path=relocation.child_path,
                    old_holders=tuple(plan.adopted_identities),
                    new_holder=self.worker_id,
                ),
            )
        for record in plan.resend:
            self._resend(record, "REROUTE")
        self.ensure_tick()
        # a dead worker may now have this worker as buddy through the adopted identities
        self._check_recovery_duty()

    def on_result_location(self, message: ResultLocationUpdate):
        """Point the victim link of a stolen frame at the worker now holding its saved results."""
        updated = False
        links = []
        for link in self.state.open_victims:
            if link.path == message.parent_path and link.peer in message.old_holders:
                link = StealLink(peer=message.new_holder, path=link.path, frame_id=link.frame_id, hop=link.hop)
                updated = True
            links.append(link)
        self.state.open_victims = links
        if updated:
            self.cluster.record("RELOC_APPLIED", self.worker_id, parent=list(message.parent_path), new=message.new_holder)
            logger.debug("[RELOC] w{} now expects {} at w{}", self.worker_id, message.parent_path, message.new_holder)

    def reset_to_checkpoint(self):
        """Discard volatile state and continue from the last checkpoint (forced reset injection)."""
        cp = self.cluster.store.get_checkpoint(self.worker_id)
        if cp.seq != self.seq:
            raise ProtocolViolation(f"w{self.worker_id} is at seq {self.seq} but the store holds {cp.seq}")
        self.state = WorkerState.from_snapshot(self.worker_id, cp.state, frame_counter=self.state.frame_counter)
        self.pending_steal = None
        self.tasks_since_checkpoint = 0
        self.cluster.record("RESET", self.worker_id, seq=cp.seq)
        self.ensure_tick()
