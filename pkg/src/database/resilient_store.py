import json
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Union

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from models.errors import StaleSequence, StoreFailed
from models.frame import Frame
from runtime.state import StateSnapshot


class CheckpointOccasion(str, Enum):
    BEFORE_BRANCH = "before_branch"
    AFTER_FINISH = "after_finish"


class Checkpoint(BaseModel):
    """Latest checkpoint of a worker, plus the recovery bookkeeping of that worker."""

    model_config = ConfigDict(frozen=True)

    worker_id: int
    seq: int
    state: StateSnapshot
    occasion: Optional[CheckpointOccasion] = None
    cause: str = "initial"
    adopted_by: Optional[int] = None
    succession: List[int] = Field(default_factory=list)
    recovered: bool = False


class TransitKind(str, Enum):
    LOOT = "loot"
    RETURNED_FRAME = "returned_frame"


class TransitRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    transit_key: str
    kind: TransitKind
    frame: Frame
    sender: int
    receiver: int
    claimed_by: Optional[int] = None


class ClaimResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    claimed: bool
    by: int
    superseded: Optional[int] = None


class DeleteOutcome(str, Enum):
    DELETED = "deleted"
    NOT_PRESENT = "not_present"


class StoreOp(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    op: str
    worker: Optional[int] = None
    seq: Optional[int] = None
    key: Optional[str] = None


class ResilientStore:
    """Simulated replicated in-memory key-value store for checkpoints and transit records.

    Every operation is applied as one indivisible step. After `fail()` every
    operation raises StoreFailed.
    """

    def __init__(self, clock: Optional[Callable[[], int]] = None, keep_log: bool = True):
        """Initialize the store.

        Args:
            clock: returns the current simulation step, used for the operation log
            keep_log: record every operation for `dump_ops`
        """
        self._clock = clock or (lambda: 0)
        self._keep_log = keep_log
        self._checkpoints: Dict[int, Checkpoint] = {}
        self._transit: Dict[str, TransitRecord] = {}
        self._transit_counter = 0
        self._result: Optional[int] = None
        self.failed = False
        self.ops: List[StoreOp] = []
        self.op_count = 0

    def _begin(self, op: str, worker: Optional[int] = None, seq: Optional[int] = None, key: Optional[str] = None):
        if self.failed:
            raise StoreFailed(f"resilient store unavailable ({op})")
        self.op_count += 1
        if self._keep_log:
            self.ops.append(StoreOp(step=self._clock(), op=op, worker=worker, seq=seq, key=key))

    def fail(self):
        logger.warning("[STORE] resilient store failed at step {}", self._clock())
        self.failed = True

    # --- checkpoints -------------------------------------------------

    def initialize(self, workers: Iterable[int]):
        """Write the seq=0 empty checkpoint of every worker."""
        for worker in workers:
            self._begin("init", worker, 0)
            self._checkpoints[worker] = Checkpoint(
                worker_id=worker, seq=0, state=StateSnapshot(identities=[worker])
            )

    def _check_seq(self, cp: Checkpoint):
        previous = self._checkpoints.get(cp.worker_id)
        expected = previous.seq + 1 if previous is not None else 0
        if cp.seq != expected:
            raise StaleSequence(f"checkpoint of w{cp.worker_id} has seq {cp.seq}, expected {expected}")

    def _store_checkpoint(self, cp: Checkpoint):
        previous = self._checkpoints.get(cp.worker_id)
        if previous is not None:
            cp = cp.model_copy(
                update={
                    "adopted_by": previous.adopted_by,
                    "succession": previous.succession,
                    "recovered": previous.recovered,
                }
            )
        self._checkpoints[cp.worker_id] = cp

    def put_checkpoint(self, cp: Checkpoint):
        self._begin("put_checkpoint", cp.worker_id, cp.seq)
        self._check_seq(cp)
        self._store_checkpoint(cp)

    def get_checkpoint(self, worker_id: int) -> Checkpoint:
        self._begin("get_checkpoint", worker_id)
        return self._checkpoints[worker_id]

    def peek_checkpoint(self, worker_id: int) -> Checkpoint:
        """Read without counting as an operation (auditor and reports only)."""
        return self._checkpoints[worker_id]

    def checkpoints(self) -> Dict[int, Checkpoint]:
        return dict(self._checkpoints)

    # --- recovery claims ---------------------------------------------

    def claim_for_recovery(self, worker_id: int, buddy: int) -> ClaimResult:
        self._begin("claim", worker_id, key=f"by={buddy}")
        cp = self._checkpoints[worker_id]
        if cp.adopted_by is not None:
            return ClaimResult(claimed=False, by=cp.adopted_by)
        self._checkpoints[worker_id] = cp.model_copy(update={"adopted_by": buddy, "succession": cp.succession + [buddy]})
        return ClaimResult(claimed=True, by=buddy)

    def supersede_claim(self, worker_id: int, buddy: int, failed_claimant: int) -> ClaimResult:
        """Take over a claim whose claimant failed before completing the recovery."""
        self._begin("supersede", worker_id, key=f"by={buddy}")
        cp = self._checkpoints[worker_id]
        if cp.recovered or cp.adopted_by != failed_claimant:
            return ClaimResult(claimed=False, by=cp.adopted_by if cp.adopted_by is not None else -1)
        self._checkpoints[worker_id] = cp.model_copy(update={"adopted_by": buddy, "succession": cp.succession + [buddy]})
        return ClaimResult(claimed=True, by=buddy, superseded=failed_claimant)

    # --- transit records ---------------------------------------------

    def new_transit_key(self) -> str:
        self._transit_counter += 1
        return f"t{self._transit_counter}"

    def put_transit(self, record: TransitRecord):
        self._begin("put_transit", record.sender, key=record.transit_key)
        self._transit[record.transit_key] = record

    def get_transit(self, key: str) -> Optional[TransitRecord]:
        self._begin("get_transit", key=key)
        return self._transit.get(key)

    def claim_transit(self, key: str, worker: int) -> Optional[TransitRecord]:
        """Mark a transit record as taken by `worker`; None if it is gone or taken."""
        self._begin("claim_transit", worker, key=key)
        record = self._transit.get(key)
        if record is None or record.claimed_by is not None:
            return None
        record = record.model_copy(update={"claimed_by": worker})
        self._transit[key] = record
        return record

    def delete_transit(self, key: str) -> DeleteOutcome:
        self._begin("delete_transit", key=key)
        if self._transit.pop(key, None) is None:
            return DeleteOutcome.NOT_PRESENT
        return DeleteOutcome.DELETED

    def scan_transit(self, workers: Union[int, Iterable[int]], direction: str = "any") -> List[TransitRecord]:
        """Live records where one of `workers` is sender ("from"), receiver ("to") or either."""
        self._begin("scan_transit", key=direction)
        ids = {workers} if isinstance(workers, int) else set(workers)
        found = []
        for record in self._transit.values():
            if direction in ("from", "any") and record.sender in ids:
                found.append(record)
            elif direction in ("to", "any") and record.receiver in ids:
                found.append(record)
        return found

    def transit_records(self) -> List[TransitRecord]:
        return list(self._transit.values())

    # --- atomic commits ----------------------------------------------

    def atomic_steal_commit(self, cp: Checkpoint, record: TransitRecord):
        """Write the sender's checkpoint (without the frame) and the transit record as one step."""
        self._begin("steal_commit", cp.worker_id, cp.seq, record.transit_key)
        self._check_seq(cp)
        self._store_checkpoint(cp)
        self._transit[record.transit_key] = record

    def commit_receipt(self, cp: Checkpoint, key: str):
        """Write the receiver's checkpoint (with the frame) and delete the transit record as one step."""
        self._begin("receipt_commit", cp.worker_id, cp.seq, key)
        self._check_seq(cp)
        self._store_checkpoint(cp)
        self._transit.pop(key, None)

    def commit_recovery(self, cp: Checkpoint, failed: int, adopted_keys: Iterable[str]):
        """Write the buddy's merged checkpoint, mark `failed` recovered and drop the adopted records."""
        self._begin("recovery_commit", cp.worker_id, cp.seq, f"failed={failed}")
        self._check_seq(cp)
        self._store_checkpoint(cp)
        failed_cp = self._checkpoints[failed]
        self._checkpoints[failed] = failed_cp.model_copy(update={"recovered": True})
        for key in adopted_keys:
            self._transit.pop(key, None)

    # --- program result ----------------------------------------------

    def put_result(self, value: int, worker: int):
        self._begin("put_result", worker)
        self._result = value

    def get_result(self) -> Optional[int]:
        return self._result

    # --- operation log -----------------------------------------------

    def dump_ops(self, path: Union[str, Path]):
        """Write the operation log as JSON lines."""
        with open(path, "w", encoding="utf-8") as f:
            for op in self.ops:
                f.write(json.dumps(op.model_dump()) + "\n")
