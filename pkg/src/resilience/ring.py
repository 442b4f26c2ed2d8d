from typing import Collection

from models.errors import NoWorkersAlive


def buddy_of(worker: int, alive: Collection[int], p: int) -> int:
    """The next worker alive in the ring 0..p-1 after `worker` (possibly `worker` itself)."""
    if not alive:
        raise NoWorkersAlive(f"no worker alive to act as buddy of w{worker}")
    for k in range(1, p + 1):
        candidate = (worker + k) % p
        if candidate in alive:
            return candidate
    raise NoWorkersAlive(f"alive set {sorted(alive)} has no member in ring of {p}")


def resolve_holder(identity: int, alive: Collection[int], p: int) -> int:
    """Where messages for `identity` go: the worker itself, or the ring successor that adopts it."""
    if identity in alive:
        return identity
    return buddy_of(identity, alive, p)
