"""Deterministic discrete-event executor with integer-ns virtual time."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

DEFAULT_MAX_EVENTS = 10_000_000


class SimulationError(RuntimeError):
    pass


class LivelockError(SimulationError):
    """The event ceiling was hit; almost always a protocol bug."""


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    target: str = field(compare=False)
    payload: Optional[Callable[[], Any]] = field(compare=False, default=None)
    trace_label: str = field(compare=False, default="")
    source: Optional[str] = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


@dataclass(frozen=True)
class TraceEntry:
    time: int
    seq: int
    actor: str
    label: str
    source: Optional[str] = None

    @property
    def cross_tile(self) -> bool:
        return self.source is not None and self.source != self.actor


class Trace(list):
    def export(self) -> str:
        return "".join(f"{e.time} {e.actor} {e.label}\n" for e in self)

    def labels(self, label: str) -> list[TraceEntry]:
        return [e for e in self if e.label == label]


class Future:
    """Minimal completion handle resolved at a point in virtual time."""

    def __init__(self):
        self.done = False
        self.time: Optional[int] = None
        self.value: Any = None
        self.error: Optional[BaseException] = None
        self._callbacks: list[Callable[["Future"], None]] = []

    def add_done_callback(self, cb: Callable[["Future"], None]) -> None:
        if self.done:
            cb(self)
        else:
            self._callbacks.append(cb)

    def _finish(self, time: int) -> None:
        self.done, self.time = True, time
        callbacks, self._callbacks = self._callbacks, []
        for cb in callbacks:
            cb(self)

    def set_result(self, time: int, value: Any = None) -> None:
        if self.done:
            raise SimulationError("future already resolved")
        self.value = value
        self._finish(time)

    def set_error(self, time: int, error: BaseException) -> None:
        if self.done:
            raise SimulationError("future already resolved")
        self.error = error
        self._finish(time)

    def result(self) -> Any:
        if not self.done:
            raise SimulationError("future still pending")
        if self.error is not None:
            raise self.error
        return self.value


class Engine:
    def __init__(self, seed: int = 0, max_events: int = DEFAULT_MAX_EVENTS):
        self.now = 0
        self.rng = random.Random(seed)
        self.max_events = max_events
        self.trace = Trace()
        self.observers: list[Callable[["Engine", Event], None]] = []
        self.scheduled = 0
        self.processed = 0
        self.cancelled = 0
        self._queue: list[Event] = []
        self._seq = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def schedule(self, delay: int, action: Optional[Callable[[], Any]] = None, *,
                 target: str = "", label: str = "", source: Optional[str] = None) -> Event:
        """Run ``action`` at ``now + delay``; the returned event can be cancelled."""
        if delay < 0:
            raise ValueError(f"negative delay {delay}")
        if int(delay) != delay:
            raise ValueError(f"delay must be whole ns, got {delay}")
        ev = Event(self.now + int(delay), self._next_seq(), target, action, label, source)
        heapq.heappush(self._queue, ev)
        self.scheduled += 1
        return ev

    def cancel(self, event: Event) -> None:
        if not event.cancelled:
            event.cancelled = True
            self.cancelled += 1

    def record(self, actor: str, label: str, source: Optional[str] = None) -> None:
        self.trace.append(TraceEntry(self.now, len(self.trace), actor, label, source))

    @property
    def pending(self) -> int:
        return sum(not e.cancelled for e in self._queue)

    def run_until_idle(self) -> int:
        budget = self.max_events
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            if budget <= 0:
                heapq.heappush(self._queue, ev)
                raise LivelockError(f"event ceiling of {self.max_events} exceeded at t={self.now}")
            budget -= 1
            self.now = ev.fire_at
            self.processed += 1
            if ev.trace_label:
                self.trace.append(TraceEntry(ev.fire_at, len(self.trace), ev.target, ev.trace_label, ev.source))
            if ev.payload is not None:
                ev.payload()
            for obs in self.observers:
                obs(self, ev)
        return self.now
