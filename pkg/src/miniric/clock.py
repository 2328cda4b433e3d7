"""Deterministic simulated clock.

Every timed behaviour in miniric (report periods, subscription timeouts,
grace periods, probe deadlines) is scheduled here. Nothing sleeps; time
only moves when :meth:`SimClock.advance` or :meth:`SimClock.run_until` is
called, so two runs with the same inputs produce identical histories.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional


@dataclass(order=True)
class _Call:
    when: int
    seq: int
    fn: Callable[[], None] = field(compare=False)
    cancelled: bool = field(default=False, compare=False)

    def cancel(self) -> None:
        self.cancelled = True


class SimClock:
    """Millisecond clock with a call queue ordered by (time, insertion)."""

    def __init__(self, start: int = 0):
        self._now = int(start)
        self._queue: list[_Call] = []
        self._seq = itertools.count()
        self._running = False

    @property
    def now(self) -> int:
        return self._now

    def call_at(self, when: int, fn: Callable[[], None]) -> _Call:
        if when < self._now:
            when = self._now
        call = _Call(int(when), next(self._seq), fn)
        heapq.heappush(self._queue, call)
        return call

    def call_later(self, delay: int, fn: Callable[[], None]) -> _Call:
        if delay < 0:
            raise ValueError("delay must be non-negative")
        return self.call_at(self._now + int(delay), fn)

    def call_soon(self, fn: Callable[[], None]) -> _Call:
        return self.call_at(self._now, fn)

    def pending(self) -> int:
        return sum(1 for c in self._queue if not c.cancelled)

    def next_deadline(self) -> Optional[int]:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].when if self._queue else None

    def _step(self, limit: int) -> bool:
        """Run the earliest call due at or before ``limit``."""
        deadline = self.next_deadline()
        if deadline is None or deadline > limit:
            return False
        call = heapq.heappop(self._queue)
        self._now = call.when
        call.fn()
        return True

    def run_until(self, predicate: Callable[[], bool], deadline: int) -> bool:
        """Process calls in order until ``predicate()`` holds or ``deadline`` passes.

        The deadline is inclusive: calls scheduled exactly at ``deadline``
        still run. Returns the final value of the predicate. On return the
        clock reads ``deadline`` unless the predicate became true earlier.
        """
        if self._running:
            raise RuntimeError("SimClock is already running")
        self._running = True
        try:
            if predicate():
                return True
            while self._step(deadline):
                if predicate():
                    return True
            self._now = max(self._now, deadline)
            return predicate()
        finally:
            self._running = False

    def advance(self, ms: int) -> None:
        """Move time forward by ``ms``, running everything due on the way."""
        if ms < 0:
            raise ValueError("cannot move time backwards")
        self.run_until(lambda: False, self._now + int(ms))

    def run_pending(self) -> None:
        """Run every call due at the current instant (including ones they add)."""
        self.advance(0)

    @property
    def running(self) -> bool:
        return self._running
