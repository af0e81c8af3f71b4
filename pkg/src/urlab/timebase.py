"""Clocks and the event scheduler every other module runs on.

Time is an integer count of nanoseconds since experiment start. Two clock
modes share one scheduler:

* ``VIRTUAL`` jumps straight to the next pending event, so hours of robot
  time replay in minutes and the wake-up order is bit-for-bit repeatable.
* ``REALTIME`` sleeps until each event is due; events may fire late but
  never early.

Execution contexts are generators. A context yields what it is waiting for:
an ``int`` instant to sleep until, or a :class:`Signal` to be woken by.
Exactly one context runs at a time, from its wake-up to its next ``yield``.
"""

from __future__ import annotations

import enum
import heapq
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Optional

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

Instant = int


def ms(value: float) -> int:
    """Milliseconds to integer nanoseconds (rounded)."""
    return int(round(value * NS_PER_MS))


def seconds(value: float) -> int:
    return int(round(value * NS_PER_S))


class ClockMode(enum.Enum):
    REALTIME = "realtime"
    VIRTUAL = "virtual"


class SchedulerError(RuntimeError):
    """Scheduling a logic error, e.g. an event in the past."""


class Completed(Exception):
    """Raised by ``advance_to_next`` when no events remain."""


@dataclass(frozen=True, order=True)
class ScheduledEvent:
    fire_at: int
    seq: int
    context_id: str = field(compare=False)
    action: Callable[[], Any] = field(compare=False, repr=False)


class Signal:
    """A doorbell. Contexts wait on it; ``fire`` wakes every waiter now."""

    __slots__ = ("name", "_clock", "_waiters")

    def __init__(self, clock: "Clock", name: str = "signal"):
        self.name = name
        self._clock = clock
        self._waiters: list[Context] = []

    def fire(self) -> None:
        if not self._waiters:
            return
        waiters, self._waiters = self._waiters, []
        now = self._clock.now()
        for ctx in waiters:
            self._clock.schedule_at(now, ctx.name, ctx.resume)

    def _add(self, ctx: "Context") -> None:
        if ctx not in self._waiters:
            self._waiters.append(ctx)


class Context:
    """A cooperatively scheduled execution context wrapping a generator."""

    __slots__ = ("name", "_gen", "_clock", "finished", "error")

    def __init__(self, clock: "Clock", name: str, gen: Generator):
        self.name = name
        self._gen = gen
        self._clock = clock
        self.finished = False
        self.error: Optional[BaseException] = None

    def resume(self) -> None:
        if self.finished:
            return
        try:
            request = next(self._gen)
        except StopIteration:
            self.finished = True
            return
        except BaseException as exc:
            self.finished = True
            self.error = exc
            raise
        if isinstance(request, Signal):
            request._add(self)
        elif isinstance(request, int):
            self._clock.schedule_at(request, self.name, self.resume)
        elif request is None:
            self._clock.schedule_at(self._clock.now(), self.name, self.resume)
        else:
            raise SchedulerError(f"context {self.name!r} yielded {request!r}")


class Clock:
    """Scheduler with a pluggable notion of ``now``.

    Ties between events at the same instant are broken by the order in
    which they were scheduled.
    """

    def __init__(self, mode: ClockMode = ClockMode.VIRTUAL):
        self.mode = mode
        self._queue: list[tuple[int, int, str, Callable[[], Any]]] = []
        self._seq = 0
        self._now = 0
        self._t0 = time.monotonic_ns()
        self.late_ns_max = 0
        self.trace: Optional[list[tuple[int, int, str]]] = None

    # -- time ------------------------------------------------------------
    def now(self) -> Instant:
        if self.mode is ClockMode.REALTIME:
            return max(self._now, time.monotonic_ns() - self._t0)
        return self._now

    # -- scheduling -----------------------------------------------------
    def schedule_at(self, fire_at: int, context_id: str, action: Callable[[], Any]) -> ScheduledEvent:
        if fire_at < self._now:
            raise SchedulerError(
                f"event for {context_id!r} at {fire_at} ns is before now ({self._now} ns)"
            )
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (fire_at, seq, context_id, action))
        return ScheduledEvent(fire_at, seq, context_id, action)

    def schedule(self, event: ScheduledEvent) -> None:
        """Enqueue a pre-built event; its ``seq`` is reassigned to keep ordering monotone."""
        self.schedule_at(event.fire_at, event.context_id, event.action)

    def pending(self) -> int:
        return len(self._queue)

    def peek(self) -> Optional[int]:
        return self._queue[0][0] if self._queue else None

    def advance_to_next(self) -> Instant:
        """Run the earliest pending event and return its instant."""
        if not self._queue:
            raise Completed("no pending events")
        fire_at, seq, ctx_id, action = heapq.heappop(self._queue)
        if self.mode is ClockMode.REALTIME:
            wall = time.monotonic_ns() - self._t0
            if wall < fire_at:
                time.sleep((fire_at - wall) / NS_PER_S)
                wall = time.monotonic_ns() - self._t0
                while wall < fire_at:  # sleep() may undershoot by a few µs
                    wall = time.monotonic_ns() - self._t0
            self.late_ns_max = max(self.late_ns_max, wall - fire_at)
            self._now = max(fire_at, wall)
        else:
            self._now = fire_at
        if self.trace is not None:
            self.trace.append((fire_at, seq, ctx_id))
        action()
        return fire_at

    def run(self, until: Optional[int] = None, stop: Optional[Callable[[], bool]] = None) -> Instant:
        """Advance until the queue drains, ``until`` is passed, or ``stop()`` is true."""
        queue = self._queue
        while queue:
            if until is not None and queue[0][0] > until:
                break
            self.advance_to_next()
            if stop is not None and stop():
                break
        return self._now

    # -- contexts ---------------------------------------------------------
    def spawn(self, name: str, gen: Generator, start_at: Optional[int] = None) -> Context:
        ctx = Context(self, name, gen)
        self.schedule_at(self._now if start_at is None else start_at, name, ctx.resume)
        return ctx

    def signal(self, name: str = "signal") -> Signal:
        return Signal(self, name)


def virtual_clock() -> Clock:
    return Clock(ClockMode.VIRTUAL)


def realtime_clock() -> Clock:
    return Clock(ClockMode.REALTIME)
