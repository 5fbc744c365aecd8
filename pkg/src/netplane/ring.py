"""Bounded lock-free SPSC frame channels with idle-notify doorbells.

Exactly one producer context and one consumer context per channel. Head
and tail are unbounded monotone counters reduced modulo a power-of-two
capacity, so full/empty tests never suffer ABA trouble. Individual index
and slot updates are atomic under the CPython GIL; there are no locks on
the push/pop paths, and neither side can stall the other.

Wakeups follow the notify-if-idle rule: the producer rings the consumer's
doorbell only when it observes the consumer's activity counter at zero.
The activity counter lives in a WakeGate that one drain loop may share
across several channels it consumes.
"""
from __future__ import annotations

from typing import Any, Optional

from .sched import WakeGate


class BadCapacity(Exception):
    """Capacity must be a power of two, at least 2."""


class _Ring:
    __slots__ = ("capacity", "mask", "slots", "head", "tail",
                 "gate", "doorbell_count")

    def __init__(self, capacity: int, gate: WakeGate):
        self.capacity = capacity
        self.mask = capacity - 1
        self.slots: list[Any] = [None] * capacity
        self.head = 0  # next slot to pop; written by consumer only
        self.tail = 0  # next slot to push; written by producer only
        self.gate = gate
        self.doorbell_count = 0  # written by producer only


class RingProducer:
    """Producer end; single owning context at a time."""

    __slots__ = ("_r",)

    def __init__(self, ring: _Ring):
        self._r = ring

    def try_push(self, item) -> bool:
        """Enqueue item; False when the ring is full (caller picks the
        drop-vs-retry policy). Rings the doorbell if the consumer is idle."""
        r = self._r
        if r.tail - r.head == r.capacity:
            return False
        r.slots[r.tail & r.mask] = item
        r.tail += 1
        gate = r.gate
        if gate.active == 0:
            r.doorbell_count += 1
            gate.doorbell.ring()
        return True

    @property
    def consumer_active(self) -> int:
        return self._r.gate.active

    @property
    def doorbell_count(self) -> int:
        return self._r.doorbell_count

    @property
    def capacity(self) -> int:
        return self._r.capacity

    def __len__(self):
        return self._r.tail - self._r.head


class RingConsumer:
    """Consumer end; single owning context at a time.

    Drain discipline: call enter() before a drain pass, leave() before
    blocking in wait(). Producers only ring the doorbell while the gate
    reads idle, so a steadily-busy consumer sees almost no doorbells.
    """

    __slots__ = ("_r",)

    def __init__(self, ring: _Ring):
        self._r = ring

    def try_pop(self) -> Optional[Any]:
        """Dequeue the oldest item, or None when empty."""
        r = self._r
        if r.head == r.tail:
            return None
        idx = r.head & r.mask
        item = r.slots[idx]
        r.slots[idx] = None
        r.head += 1
        return item

    def enter(self) -> None:
        self._r.gate.enter()

    def leave(self) -> None:
        self._r.gate.leave()

    def wait(self, timeout: float | None = None) -> bool:
        """Block until the doorbell rings (gate must be idle first).
        Spurious returns allowed; a push after leave() always wakes."""
        return self._r.gate.wait(timeout)

    def attach_gate(self, gate: WakeGate) -> None:
        """Rebind this channel to a drain loop's shared gate. Only the
        (sole) consumer context may do this."""
        self._r.gate = gate

    @property
    def gate(self) -> WakeGate:
        return self._r.gate

    @property
    def doorbell_count(self) -> int:
        return self._r.doorbell_count

    @property
    def capacity(self) -> int:
        return self._r.capacity

    def __len__(self):
        return self._r.tail - self._r.head


def create_channel(capacity: int,
                   gate: WakeGate | None = None
                   ) -> tuple[RingProducer, RingConsumer]:
    """New empty channel. Capacity must be a power of two >= 2."""
    if capacity < 2 or capacity & (capacity - 1):
        raise BadCapacity(f"capacity {capacity} is not a power of two >= 2")
    ring = _Ring(capacity, gate if gate is not None else WakeGate())
    return RingProducer(ring), RingConsumer(ring)
