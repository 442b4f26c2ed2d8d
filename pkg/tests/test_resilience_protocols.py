import pytest

from database.resilient_store import Checkpoint, CheckpointOccasion, TransitKind, TransitRecord
from models.errors import NoWorkersAlive
from models.frame import Frame, Slot
from models.program import FIB
from resilience.policy import LifecycleEvent, checkpoint_policy
from resilience.recovery import RecoveryAction, merge_checkpoint
from resilience.ring import buddy_of, resolve_holder
from runtime.state import SavedResult, StateSnapshot, StealLink, WorkerState
from runtime.worker import on_steal_request, take_next
from simulator.engine import run_simulation
from simulator.trace import return_transcript, steal_transcript, transit_keys


def frame(path, section=1, owners=(), frame_id=None, steal_count=0):
    return Frame(
        frame_id=frame_id or f"f{path}",
        program_id="fib",
        args=(6,),
        section=section,
        path=path,
        slots=tuple(Slot(owner=o) for o in owners),
        steal_count=steal_count,
    )


def failed_checkpoint(worker, seq=3, **state):
    return Checkpoint(
        worker_id=worker,
        seq=seq,
        state=StateSnapshot(identities=[worker], **state),
        occasion=CheckpointOccasion.BEFORE_BRANCH,
        adopted_by=worker + 1,
    )


class TestBuddyRing:
    def test_next_alive_worker(self):
        assert buddy_of(1, [0, 1, 2, 3], 4) == 2
        assert buddy_of(3, [0, 1, 2], 4) == 0

    def test_skips_dead_workers(self):
        assert buddy_of(1, [0, 3], 4) == 3
        assert buddy_of(3, [2], 4) == 2

    def test_nobody_alive(self):
        with pytest.raises(NoWorkersAlive):
            buddy_of(0, [], 3)

    def test_resolve_holder(self):
        assert resolve_holder(2, [0, 2, 3], 4) == 2
        assert resolve_holder(1, [0, 3], 4) == 3


class TestCheckpointPolicy:
    def test_regular_checkpoint_every_period_tasks(self):
        assert not checkpoint_policy(LifecycleEvent.TASK_FINISHED, 2, period=3).write
        decision = checkpoint_policy(LifecycleEvent.TASK_FINISHED, 3, period=3)
        assert decision.write and decision.occasion is CheckpointOccasion.AFTER_FINISH
        assert not decision.mandatory

    def test_branch_occasion(self):
        decision = checkpoint_policy(LifecycleEvent.BRANCH_CHILD, 1, period=1)
        assert decision.write and decision.occasion is CheckpointOccasion.BEFORE_BRANCH
        assert not checkpoint_policy(LifecycleEvent.BRANCH_CHILD, 0, period=1).write

    @pytest.mark.parametrize(
        "event",
        [
            LifecycleEvent.STEAL_SERVED,
            LifecycleEvent.FRAME_RETURN_SENT,
            LifecycleEvent.FRAME_RETURN_RECEIVED,
            LifecycleEvent.RECOVERY_MERGED,
        ],
    )
    def test_protocol_events_always_checkpoint(self, event):
        assert checkpoint_policy(event, 0, period=100).mandatory
        assert checkpoint_policy(event, 0, has_next_task=True).occasion is CheckpointOccasion.BEFORE_BRANCH
        assert checkpoint_policy(event, 0, has_next_task=False).occasion is CheckpointOccasion.AFTER_FINISH

    def test_branching_into_loot_keeps_next_task(self):
        decision = checkpoint_policy(LifecycleEvent.BRANCH_STOLEN, 0, period=10)
        assert decision.write and decision.occasion is CheckpointOccasion.BEFORE_BRANCH


class TestMergeCheckpoint:
    def test_pool_inserted_and_next_task_kept_unstealable(self):
        buddy = WorkerState(worker_id=2, pool=[frame((9,))])
        cp = failed_checkpoint(1, pool=[frame((0,)), frame((1,))], next_task=frame((1, 0), section=0))
        plan = merge_checkpoint(buddy, cp, [])
        assert [f.path for f in buddy.pool] == [(9,), (0,), (1,)]
        assert [f.path for f in buddy.returned_frames] == [(1, 0)]
        assert take_next(buddy).path == (1, 0)
        assert buddy.identities == [2, 1]
        assert plan.adopted_identities == [1]
        assert [step.action for step in plan.actions][:4] == [
            RecoveryAction.INSERT_POOL_FRAMES,
            RecoveryAction.ADOPT_RETURNED_FRAMES,
            RecoveryAction.ADOPT_VICTIM_THIEF_LISTS,
            RecoveryAction.ADOPT_SAVED_RESULTS,
        ]

    def test_recovered_next_task_is_never_loot(self):
        buddy = WorkerState(worker_id=2)
        merge_checkpoint(buddy, failed_checkpoint(1, next_task=frame((0, 1), section=0)), [])
        _, loot = on_steal_request(buddy, 3)
        assert loot is None
        assert buddy.open_thieves == []

    def test_recovered_loot_continuation_stays_stealable(self):
        buddy = WorkerState(worker_id=2)
        task = frame((), section=1, owners=(0,), steal_count=1)
        cp = failed_checkpoint(
            1, next_task=task, open_victims=[StealLink(peer=0, path=(), frame_id=task.frame_id, hop=1)]
        )
        merge_checkpoint(buddy, cp, [])
        assert buddy.pool == [task]
        assert buddy.returned_frames == []

    def test_saved_result_incorporated_into_local_parent(self):
        parent = frame((0,), section=2, owners=(1, 2))
        buddy = WorkerState(worker_id=2, pool=[parent])
        cp = failed_checkpoint(1, saved_results=[SavedResult(child_path=(0, 0), child_id="c", value=8)])
        merge_checkpoint(buddy, cp, [])
        assert buddy.saved_results == []
        assert buddy.pool[0].slots[0].value == 8

    def test_loot_in_transit_to_failed_worker_is_adopted(self):
        buddy = WorkerState(worker_id=2)
        loot = frame((), section=1, owners=(0,), steal_count=1)
        rec = TransitRecord(transit_key="t1", kind=TransitKind.LOOT, frame=loot, sender=0, receiver=1)
        plan = merge_checkpoint(buddy, failed_checkpoint(1), [rec])
        assert plan.adopted_keys == ["t1"]
        assert buddy.pool == [loot]
        assert buddy.open_victims == [StealLink(peer=0, path=(), frame_id=loot.frame_id, hop=1)]

    def test_records_sent_by_failed_worker_to_the_dead_are_resent(self):
        buddy = WorkerState(worker_id=2)
        rec = TransitRecord(
            transit_key="t7", kind=TransitKind.RETURNED_FRAME, frame=frame((0,), section=3), sender=1, receiver=0
        )
        plan = merge_checkpoint(buddy, failed_checkpoint(1), [rec], dead={0, 1})
        assert plan.resend == [rec]
        assert plan.adopted_keys == []
        assert plan.actions[-1].action is RecoveryAction.REROUTE_EXPECTED_RETURNS

    def test_records_for_live_receivers_stay_in_transit(self):
        buddy = WorkerState(worker_id=2)
        rec = TransitRecord(
            transit_key="t7", kind=TransitKind.RETURNED_FRAME, frame=frame((0,), section=3), sender=1, receiver=0
        )
        plan = merge_checkpoint(buddy, failed_checkpoint(1), [rec], dead={1})
        assert plan.resend == [] and plan.adopted_keys == []
        assert RecoveryAction.REROUTE_EXPECTED_RETURNS not in [step.action for step in plan.actions]

    def test_records_addressed_to_the_buddy_are_left_for_delivery(self):
        buddy = WorkerState(worker_id=2, open_thieves=[StealLink(peer=1, path=(), frame_id="f()", hop=1)])
        rec = TransitRecord(
            transit_key="t8", kind=TransitKind.RETURNED_FRAME, frame=frame((), section=3, steal_count=1),
            sender=1, receiver=2,
        )
        plan = merge_checkpoint(buddy, failed_checkpoint(1), [rec], dead={1})
        assert plan.resend == [] and plan.adopted_keys == []
        assert buddy.returned_frames == []

    def test_thief_told_where_saved_result_moved(self):
        buddy = WorkerState(worker_id=2)
        cp = failed_checkpoint(
            1,
            saved_results=[SavedResult(child_path=(0, 0), child_id="c", value=5, thief_expected_at=3)],
            open_thieves=[StealLink(peer=3, path=(0,), frame_id="f(0,)", hop=1)],
        )
        plan = merge_checkpoint(buddy, cp, [])
        assert [(r.thief, r.parent_path, r.child_path) for r in plan.relocations] == [(3, (0,), (0, 0))]
        assert len(buddy.saved_results) == 1

    def test_returned_frame_in_transit_completes_and_goes_back(self):
        # the failed worker stole (0,) from w0 and had lent it to w2, who returned it
        buddy = WorkerState(worker_id=2)
        returned = frame((0,), section=3, owners=(1, 2), steal_count=2).fill(1, 4)
        cp = failed_checkpoint(
            1,
            saved_results=[SavedResult(child_path=(0, 0), child_id="c", value=3)],
            open_victims=[StealLink(peer=0, path=(0,), frame_id="f(0,)", hop=1)],
            open_thieves=[StealLink(peer=2, path=(0,), frame_id="f(0,)", hop=2)],
        )
        rec = TransitRecord(transit_key="t3", kind=TransitKind.RETURNED_FRAME, frame=returned, sender=2, receiver=1)
        plan = merge_checkpoint(buddy, cp, [rec])
        assert [(d.victim, d.frame.values()) for d in plan.returns_due] == [(0, (3, 4))]
        assert buddy.open_thieves == [] and buddy.open_victims == []


@pytest.fixture(scope="module")
def steal_trace():
    report = run_simulation(FIB, (8,), p=2, seed=3)
    assert report.ok
    return report.trace


class TestProtocolTranscripts:
    def test_transit_events_name_the_record_kind(self, steal_trace):
        transit = [e for e in steal_trace if e.kind == "TRANSIT"]
        assert transit
        assert {e.detail["kind"] for e in transit} <= {"loot", "returned_frame"}
        assert all(e.worker is not None for e in transit)

    def test_steal_is_two_checkpoints_and_one_transit_record(self, steal_trace):
        key = transit_keys(steal_trace, "STEAL")[0]
        kinds = [(e.kind, e.detail.get("op"), e.detail.get("cause")) for e in steal_transcript(steal_trace, key)]
        assert kinds == [
            ("CKPT", None, "steal"),
            ("TRANSIT", "create", None),
            ("STEAL", None, None),
            ("CKPT", None, "loot"),
            ("TRANSIT", "delete", None),
            ("LOOT", None, None),
        ]

    def test_frame_return_is_two_checkpoints_and_one_transit_record(self, steal_trace):
        keys = transit_keys(steal_trace, "RETURN")
        assert keys
        for key in keys:
            events = return_transcript(steal_trace, key)
            assert [e.kind for e in events] == ["CKPT", "TRANSIT", "RETURN", "CKPT", "TRANSIT", "MATCH"]
            thief, victim = events[0].worker, events[3].worker
            assert thief != victim
            assert [e.detail.get("op") for e in events if e.kind == "TRANSIT"] == ["create", "delete"]
