"""
Reliable network with bounded random delay and per-pair FIFO delivery.
"""
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from runtime.messages import Message


class InFlight(BaseModel):
    model_config = ConfigDict(frozen=True)

    src: int
    dst: int
    deliver_at: int
    message: Message


class Network:
    def __init__(self, rngs: List[np.random.Generator], max_delay: int):
        """`rngs[w]` draws the delays of messages sent by worker w."""
        self._rngs = rngs
        self.max_delay = max_delay
        self._last: Dict[Tuple[int, int], int] = {}
        self.in_flight: Dict[int, InFlight] = {}
        self.sent = 0

    def post(self, src: int, dst: int, message: Message, now: int, ticket: int) -> int:
        """Register a message and return its delivery time."""
        delay = int(self._rngs[src].integers(1, self.max_delay + 1))
        deliver_at = max(now + delay, self._last.get((src, dst), 0))
        self._last[(src, dst)] = deliver_at
        self.in_flight[ticket] = InFlight(src=src, dst=dst, deliver_at=deliver_at, message=message)
        self.sent += 1
        return deliver_at

    def take(self, ticket: int) -> InFlight:
        return self.in_flight.pop(ticket)

    def pending(self) -> List[InFlight]:
        return sorted(self.in_flight.values(), key=lambda m: (m.deliver_at, m.src, m.dst))
