import json

import pytest

from database.resilient_store import (
    Checkpoint,
    CheckpointOccasion,
    DeleteOutcome,
    ResilientStore,
    TransitKind,
    TransitRecord,
)
from models.errors import StaleSequence, StoreFailed
from models.frame import root_frame
from runtime.state import StateSnapshot


def checkpoint(worker, seq, **state):
    return Checkpoint(
        worker_id=worker, seq=seq, state=StateSnapshot(identities=[worker], **state), occasion=CheckpointOccasion.AFTER_FINISH
    )


def record(store, sender=0, receiver=1, kind=TransitKind.LOOT):
    return TransitRecord(
        transit_key=store.new_transit_key(), kind=kind, frame=root_frame("fib", (4,)), sender=sender, receiver=receiver
    )


@pytest.fixture
def store():
    s = ResilientStore()
    s.initialize(range(3))
    return s


class TestCheckpoints:
    def test_initial_checkpoints_are_empty(self, store):
        cp = store.get_checkpoint(2)
        assert cp.seq == 0
        assert cp.state.frames() == []
        assert cp.adopted_by is None

    def test_sequence_must_increase_by_one(self, store):
        store.put_checkpoint(checkpoint(0, 1))
        with pytest.raises(StaleSequence):
            store.put_checkpoint(checkpoint(0, 1))
        with pytest.raises(StaleSequence):
            store.put_checkpoint(checkpoint(0, 3))
        store.put_checkpoint(checkpoint(0, 2))
        assert store.get_checkpoint(0).seq == 2

    def test_recovery_bookkeeping_survives_new_checkpoints(self, store):
        store.claim_for_recovery(1, buddy=2)
        store.put_checkpoint(checkpoint(1, 1))
        assert store.get_checkpoint(1).adopted_by == 2


class TestRecoveryClaims:
    def test_first_claim_wins(self, store):
        assert store.claim_for_recovery(1, buddy=2).claimed
        second = store.claim_for_recovery(1, buddy=0)
        assert not second.claimed
        assert second.by == 2

    def test_dead_claimant_can_be_superseded(self, store):
        store.claim_for_recovery(1, buddy=2)
        result = store.supersede_claim(1, buddy=0, failed_claimant=2)
        assert result.claimed and result.superseded == 2
        assert store.get_checkpoint(1).succession == [2, 0]

    def test_supersede_needs_the_current_claimant(self, store):
        store.claim_for_recovery(1, buddy=2)
        assert not store.supersede_claim(1, buddy=0, failed_claimant=0).claimed

    def test_recovered_checkpoint_cannot_be_reclaimed(self, store):
        store.claim_for_recovery(1, buddy=2)
        store.commit_recovery(checkpoint(2, 1), failed=1, adopted_keys=[])
        assert store.get_checkpoint(1).recovered
        assert not store.supersede_claim(1, buddy=0, failed_claimant=2).claimed


class TestTransitRecords:
    def test_keys_are_unique(self, store):
        assert store.new_transit_key() != store.new_transit_key()

    def test_delete_missing_is_not_an_error(self, store):
        assert store.delete_transit("t404") is DeleteOutcome.NOT_PRESENT

    def test_put_get_delete(self, store):
        rec = record(store)
        store.put_transit(rec)
        assert store.get_transit(rec.transit_key) == rec
        assert store.delete_transit(rec.transit_key) is DeleteOutcome.DELETED
        assert store.get_transit(rec.transit_key) is None

    def test_claim_is_exclusive(self, store):
        rec = record(store)
        store.put_transit(rec)
        assert store.claim_transit(rec.transit_key, 1).claimed_by == 1
        assert store.claim_transit(rec.transit_key, 2) is None

    def test_scan_by_direction(self, store):
        out = record(store, sender=0, receiver=1)
        back = record(store, sender=1, receiver=0, kind=TransitKind.RETURNED_FRAME)
        store.put_transit(out)
        store.put_transit(back)
        assert store.scan_transit(0, "from") == [out]
        assert store.scan_transit([0], "to") == [back]
        assert len(store.scan_transit({0, 2}, "any")) == 2
        assert store.scan_transit(2) == []


class TestAtomicCommits:
    def test_steal_commit_writes_checkpoint_and_record(self, store):
        rec = record(store)
        store.atomic_steal_commit(checkpoint(0, 1), rec)
        assert store.get_checkpoint(0).seq == 1
        assert store.get_transit(rec.transit_key) == rec

    def test_receipt_commit_deletes_record(self, store):
        rec = record(store)
        store.atomic_steal_commit(checkpoint(0, 1), rec)
        store.commit_receipt(checkpoint(1, 1), rec.transit_key)
        assert store.transit_records() == []
        assert store.get_checkpoint(1).seq == 1

    def test_stale_commit_leaves_store_unchanged(self, store):
        rec = record(store)
        with pytest.raises(StaleSequence):
            store.atomic_steal_commit(checkpoint(0, 5), rec)
        assert store.transit_records() == []

    def test_recovery_commit_drops_adopted_records(self, store):
        rec = record(store, sender=0, receiver=1)
        keep = record(store, sender=2, receiver=0)
        store.put_transit(rec)
        store.put_transit(keep)
        store.claim_for_recovery(1, buddy=2)
        store.commit_recovery(checkpoint(2, 1), failed=1, adopted_keys=[rec.transit_key])
        assert store.transit_records() == [keep]


class TestStoreFailure:
    def test_every_operation_fails_after_store_failure(self, store):
        store.fail()
        with pytest.raises(StoreFailed):
            store.get_checkpoint(0)
        with pytest.raises(StoreFailed):
            store.put_transit(record(store))

    def test_operation_log(self, store, tmp_path):
        store.put_checkpoint(checkpoint(0, 1))
        out = tmp_path / "ops.jsonl"
        store.dump_ops(out)
        ops = [json.loads(line) for line in out.read_text().splitlines()]
        assert [op["op"] for op in ops] == ["init", "init", "init", "put_checkpoint"]
        assert ops[-1]["seq"] == 1
