import pytest

from database.resilient_store import CheckpointOccasion
from models.errors import ProtocolViolation, UnknownTransit
from models.frame import Frame, Slot, Spawn, root_frame
from models.program import FIB, step_frame, tree_program
from resilience.policy import checkpoint_now
from runtime.messages import FrameReturn, Loot, StealRequest
from runtime.state import StealLink, WorkerMode, WorkerState
from runtime.worker import (
    FinishKind,
    SyncKind,
    check_local_uniqueness,
    collapse_self_links,
    on_frame_return,
    on_loot,
    on_spawn,
    on_steal_request,
    on_sync,
    on_task_finish,
    settle,
    take_next,
)
from simulator.engine import Simulator

GREEN, BROWN, RED, YELLOW, BLUE = range(5)


def run_section(state, program):
    """Take the next frame and apply a Spawn it produces."""
    frame = take_next(state)
    action = step_frame(frame, program)
    assert isinstance(action, Spawn), f"expected a spawn from {frame.path}@{frame.section}"
    on_spawn(state, frame, action)
    return frame


def held_frame(program, path, section, owners, frame_id):
    return Frame(
        frame_id=frame_id,
        program_id=program.program_id,
        args=(len(path),),
        section=section,
        path=path,
        slots=tuple(Slot(owner=o) for o in owners),
    )


class TestWorkFirst:
    def test_spawn_runs_child_and_pools_continuation(self):
        state = WorkerState(worker_id=0, next_task=root_frame("fib", (5,)))
        run_section(state, FIB)
        assert state.next_task.path == (0,)
        assert [(f.path, f.section) for f in state.pool] == [((), 1)]
        assert state.pool[0].slots[0].owner == 0

    def test_take_next_pops_young_end(self):
        state = WorkerState(worker_id=0, next_task=root_frame("fib", (5,)))
        run_section(state, FIB)
        run_section(state, FIB)
        state.next_task = None
        assert take_next(state).path == (0,)
        assert state.pool[0].path == ()

    def test_idle_when_nothing_to_do(self):
        state = WorkerState(worker_id=3)
        assert take_next(state) is None
        assert state.mode is WorkerMode.IDLE


class TestSteals:
    def test_empty_pool_gives_no_loot(self):
        state = WorkerState(worker_id=0)
        _, loot = on_steal_request(state, thief=1)
        assert loot is None
        assert state.open_thieves == []

    def test_steal_takes_oldest_frame(self):
        state = WorkerState(worker_id=0, next_task=root_frame("fib", (6,)))
        run_section(state, FIB)
        run_section(state, FIB)
        _, loot = on_steal_request(state, thief=1)
        assert loot.path == ()
        assert loot.steal_count == 1
        assert state.open_thieves == [StealLink(peer=1, path=(), frame_id=loot.frame_id, hop=1)]
        assert [f.path for f in state.pool] == [(0,)]

    def test_successive_steals_leave_in_age_order(self):
        state = WorkerState(worker_id=0, next_task=root_frame("fib", (6,)))
        run_section(state, FIB)
        run_section(state, FIB)
        _, first = on_steal_request(state, thief=1)
        _, second = on_steal_request(state, thief=2)
        assert [first.path, second.path] == [(), (0,)]
        assert state.pool == []
        assert [(link.peer, link.path, link.hop) for link in state.open_thieves] == [(1, (), 1), (2, (0,), 1)]
        assert state.next_task.path == (0, 0)

    def test_chain_of_steals_returns_through_both_thieves(self):
        victim = WorkerState(worker_id=0, next_task=root_frame("fib", (4,)))
        run_section(victim, FIB)
        _, loot = on_steal_request(victim, thief=1)

        # the first thief branches into the frame and loses it to a second thief
        first = WorkerState(worker_id=1)
        on_loot(first, loot, victim=0)
        run_section(first, FIB)
        _, loot2 = on_steal_request(first, thief=2)
        assert loot2.steal_count == 2
        assert first.open_thieves[0].hop == 2

        second = WorkerState(worker_id=2)
        on_loot(second, loot2, victim=1)
        back = on_sync(second, take_next(second))
        assert back.kind is SyncKind.RETURN_TO_VICTIM and back.victim == 1
        assert second.open_victims == []

        on_frame_return(first, back.frame)
        assert first.open_thieves == []
        assert on_task_finish(first, first.next_task, 1).kind is FinishKind.INCORPORATED
        [due] = settle(first)
        assert due.victim == 0 and due.link.hop == 1
        assert first.open_victims == []

        assert on_task_finish(victim, victim.next_task, 2).kind is FinishKind.SAVED
        on_frame_return(victim, due.frame)
        assert victim.open_thieves == []
        root = take_next(victim)
        assert root.path == () and root.values() == (2, 1)
        assert step_frame(root, FIB).value == 3

    def test_loot_runs_immediately_on_free_thief(self):
        thief = WorkerState(worker_id=1)
        loot = root_frame("fib", (6,)).stolen()
        on_loot(thief, loot, victim=0)
        assert thief.next_task == loot
        assert thief.open_victims[0].peer == 0


class TestSyncAndResults:
    def test_local_sync_resumes(self):
        state = WorkerState(worker_id=0, next_task=root_frame("fib", (2,)))
        run_section(state, FIB)
        child = state.next_task
        assert on_task_finish(state, child, 1).kind is FinishKind.INCORPORATED
        run_section(state, FIB)
        assert on_task_finish(state, state.next_task, 0).kind is FinishKind.INCORPORATED
        frame = take_next(state)
        outcome = on_sync(state, frame)
        assert outcome.kind is SyncKind.RESUME_LOCALLY
        assert state.next_task.section == 3

    def test_thief_returns_frame_when_own_slots_filled(self):
        thief = WorkerState(worker_id=1)
        parent = held_frame(FIB, (), 1, [0], "w0-0").stolen()
        on_loot(thief, parent, victim=0)
        run_section(thief, FIB)
        on_task_finish(thief, thief.next_task, 1)
        outcome = on_sync(thief, take_next(thief))
        assert outcome.kind is SyncKind.RETURN_TO_VICTIM
        assert outcome.victim == 0
        assert outcome.frame.pending_slots() == (0,)
        assert thief.open_victims == []

    def test_victim_saves_result_then_matches_returned_frame(self):
        victim = WorkerState(worker_id=0, next_task=root_frame("fib", (3,)))
        run_section(victim, FIB)
        _, loot = on_steal_request(victim, thief=1)
        finished = on_task_finish(victim, victim.next_task, 1)
        assert finished.kind is FinishKind.SAVED
        assert victim.saved_results[0].thief_expected_at == 1

        returned = loot.at_section(3).model_copy(update={"slots": loot.slots + (Slot(owner=1, value=1),)})
        on_frame_return(victim, returned)
        assert victim.saved_results == []
        assert victim.returned_frames[0].values() == (1, 1)
        ready = take_next(victim)
        assert ready.path == ()

    def test_frame_return_without_thief_link(self):
        victim = WorkerState(worker_id=0)
        with pytest.raises(UnknownTransit):
            on_frame_return(victim, root_frame("fib", (3,)))

    def test_settle_releases_completed_returned_frames(self):
        state = WorkerState(worker_id=1)
        frame = held_frame(FIB, (), 3, [0, 1], "w0-0").stolen()
        state.open_victims.append(StealLink(peer=0, path=(), frame_id=frame.frame_id, hop=1))
        state.returned_frames.append(frame)
        assert settle(state) == []
        state.returned_frames[0] = state.returned_frames[0].fill(1, 4)
        due = settle(state)
        assert [d.victim for d in due] == [0]
        assert state.returned_frames == []


class TestLocalInvariants:
    def test_duplicate_frame_detected(self):
        frame = root_frame("fib", (3,))
        state = WorkerState(worker_id=0, pool=[frame], next_task=frame)
        with pytest.raises(ProtocolViolation):
            check_local_uniqueness(state)

    def test_self_links_collapse_after_adoption(self):
        state = WorkerState(worker_id=2, identities=[2, 1])
        state.open_victims.append(StealLink(peer=1, path=(0,), frame_id="x", hop=1))
        state.open_thieves.append(StealLink(peer=2, path=(0,), frame_id="x", hop=1))
        state.open_victims.append(StealLink(peer=0, path=(1,), frame_id="y", hop=1))
        assert collapse_self_links(state) == 1
        assert state.open_thieves == []
        assert [link.path for link in state.open_victims] == [(1,)]

    def test_snapshot_round_trip(self):
        state = WorkerState(worker_id=0, next_task=root_frame("fib", (6,)))
        run_section(state, FIB)
        restored = WorkerState.from_snapshot(0, state.snapshot())
        assert restored.snapshot() == state.snapshot()
        assert restored.mode is WorkerMode.WORKING


class TestCheckpointContents:
    """Red's state in the five-worker schedule: two steals in, one steal out, one frame back."""

    @pytest.fixture
    def red(self):
        tree = tree_program(4, 5)
        green = WorkerState(worker_id=GREEN, pool=[held_frame(tree, (0,), 1, [GREEN], "g-B")])
        brown = WorkerState(worker_id=BROWN, pool=[held_frame(tree, (1,), 2, [BROWN, BROWN], "b-A")])
        red = WorkerState(worker_id=RED)
        yellow = WorkerState(worker_id=YELLOW)
        blue = WorkerState(worker_id=BLUE)

        # Red steals B from Green and branches into F; Yellow steals B from Red; F finishes
        _, b = on_steal_request(green, RED)
        on_loot(red, b, victim=GREEN)
        run_section(red, tree)
        f = red.next_task
        _, b2 = on_steal_request(red, YELLOW)
        on_loot(yellow, b2, victim=RED)
        assert on_task_finish(red, f, 1).kind is FinishKind.SAVED

        # Red steals A from Brown and branches into D; Blue steals A from Red
        _, a = on_steal_request(brown, RED)
        on_loot(red, a, victim=BROWN)
        run_section(red, tree)
        _, a2 = on_steal_request(red, BLUE)
        on_loot(blue, a2, victim=RED)

        # D spawns and finishes a child, then spawns G; G does the same and spawns H
        run_section(red, tree)
        on_task_finish(red, red.next_task, 1)
        run_section(red, tree)
        run_section(red, tree)
        on_task_finish(red, red.next_task, 1)
        run_section(red, tree)

        # Blue finishes its child of A and sends A back to Red
        run_section(blue, tree)
        on_task_finish(blue, blue.next_task, 1)
        returned = on_sync(blue, take_next(blue))
        assert returned.kind is SyncKind.RETURN_TO_VICTIM and returned.victim == RED
        on_frame_return(red, returned.frame)
        return red

    def test_before_branch_checkpoint(self, red):
        snap = checkpoint_now(red, CheckpointOccasion.BEFORE_BRANCH).state
        d, g = snap.pool
        assert (d.path, d.section) == ((1, 2), 2)
        assert (g.path, g.section) == ((1, 2, 1), 2)
        assert [s.child_path for s in snap.saved_results] == [(0, 1)]
        assert snap.saved_results[0].thief_expected_at == YELLOW
        assert [(f.path, f.section) for f in snap.returned_frames] == [((1,), 5)]
        assert {link.path: link.peer for link in snap.open_victims} == {(0,): GREEN, (1,): BROWN}
        assert {link.path: link.peer for link in snap.open_thieves} == {(0,): YELLOW}
        assert snap.next_task.path == (1, 2, 1, 1)

    def test_after_finish_checkpoint_has_no_next_task(self, red):
        snap = checkpoint_now(red, CheckpointOccasion.AFTER_FINISH).state
        assert snap.next_task is None
        assert len(snap.pool) == 2

    def test_returned_frame_waits_for_own_children(self, red):
        assert settle(red) == []
        # Brown's two children and D are still outstanding
        assert red.returned_frames[0].pending_slots() == (0, 1, 2)


class CheckpointRecorder(Simulator):
    """Compares each protocol checkpoint with the live state once the handler is done."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.compared = []

    def _dispatch(self, kind, worker, payload):
        before = worker.seq
        super()._dispatch(kind, worker, payload)
        if isinstance(payload, (StealRequest, Loot, FrameReturn)) and worker.alive and worker.seq > before:
            cp = self.store.get_checkpoint(worker.worker_id)
            keep = cp.occasion is CheckpointOccasion.BEFORE_BRANCH
            self.compared.append((cp.state, worker.state.snapshot(include_next_task=keep)))


class TestScheduledCheckpoints:
    def test_protocol_checkpoints_match_live_state(self):
        stored = []
        for seed in range(4):
            sim = CheckpointRecorder(tree_program(4, 4), (0,), 5, seed=seed)
            assert sim.run().result == 341
            for snap, live in sim.compared:
                assert snap == live
            stored.extend(snap for snap, _ in sim.compared)
        assert any(snap.open_victims and snap.open_thieves for snap in stored)
        assert any(snap.saved_results for snap in stored)
        assert any(snap.returned_frames for snap in stored)
