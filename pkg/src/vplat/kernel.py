"""Deterministic discrete-event simulation kernel.

Simulated time is a 64-bit count of picoseconds. Events with equal
timestamps execute in scheduling order, so two kernels fed identical
schedules produce identical execution traces.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

MAX_TIME_PS = 2**64 - 1

OUTCOME_FINISHED = "finished"
OUTCOME_LIMIT = "limit"
OUTCOME_IDLE = "idle"


class KernelError(Exception):
    """Scheduling or run-control misuse (overflow, reentrant run)."""


@dataclass(frozen=True)
class RunOutcome:
    kind: str  # finished | limit | idle
    exit_code: int | None = None


class SimKernel:
    """Single-threaded event kernel with stable (time, issue-order) ordering."""

    def __init__(self) -> None:
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._cancelled: set[int] = set()
        self._pending: set[int] = set()
        self._next_id = 0
        self._now = 0
        self._running = False
        self._stop_code: int | None = None

    def now(self) -> int:
        """Current simulated time in picoseconds (0 before any event)."""
        return self._now

    def schedule(self, action: Callable[[], None], delay_ps: int) -> int:
        """Schedule `action` to run once at now()+delay_ps; returns its event id."""
        if delay_ps < 0:
            raise KernelError(f"negative delay: {delay_ps}")
        when = self._now + delay_ps
        if when > MAX_TIME_PS:
            raise KernelError(f"event time overflows 64-bit picoseconds: {when}")
        event_id = self._next_id
        self._next_id += 1
        heapq.heappush(self._queue, (when, event_id, action))
        self._pending.add(event_id)
        return event_id

    def cancel(self, event_id: int) -> bool:
        """Remove a pending event. True iff it was pending; it will never run."""
        if event_id not in self._pending:
            return False
        self._pending.discard(event_id)
        self._cancelled.add(event_id)
        return True

    def request_stop(self, exit_code: int) -> None:
        """Ask the current (or next) run to return Finished. First request wins."""
        if not 0 <= exit_code <= 255:
            raise KernelError(f"exit code out of range: {exit_code}")
        if self._stop_code is None:
            self._stop_code = exit_code

    @property
    def stop_pending(self) -> bool:
        return self._stop_code is not None

    @property
    def stop_code(self) -> int | None:
        return self._stop_code

    def pending_count(self) -> int:
        return len(self._pending)

    def peek_time(self) -> int | None:
        """Timestamp of the earliest pending event, or None."""
        self._drop_cancelled()
        if not self._queue:
            return None
        return self._queue[0][0]

    def dispatch_next(self) -> bool:
        """Pop and execute the earliest pending event, advancing now() to it.

        Returns False when no event is pending. Used by drivers that
        interleave event dispatch with their own time sources.
        """
        self._drop_cancelled()
        if not self._queue:
            return False
        when, event_id, action = heapq.heappop(self._queue)
        self._pending.discard(event_id)
        self._now = when
        action()
        return True

    def advance_to(self, time_ps: int) -> None:
        """Move now() forward to `time_ps` (never backward)."""
        if time_ps > self._now:
            if time_ps > MAX_TIME_PS:
                raise KernelError("time overflows 64-bit picoseconds")
            self._now = time_ps

    def run(self, limit_ps: int | None = None) -> RunOutcome:
        """Execute events in (time, id) order until stop, idle or limit.

        LimitReached leaves the crossing event pending and sets now() = limit.
        """
        if self._running:
            raise KernelError("run() is not reentrant")
        self._running = True
        try:
            while True:
                if self._stop_code is not None:
                    code = self._stop_code
                    self._stop_code = None
                    return RunOutcome(OUTCOME_FINISHED, code)
                next_time = self.peek_time()
                if next_time is None:
                    return RunOutcome(OUTCOME_IDLE)
                if limit_ps is not None and next_time > limit_ps:
                    self._now = max(self._now, limit_ps)
                    return RunOutcome(OUTCOME_LIMIT)
                self.dispatch_next()
        finally:
            self._running = False

    def _drop_cancelled(self) -> None:
        while self._queue and self._queue[0][1] in self._cancelled:
            _, event_id, _ = heapq.heappop(self._queue)
            self._cancelled.discard(event_id)
