"""Discrete-event kernel: integer-nanosecond clock, FIFO tie-break, seeded streams."""

from __future__ import annotations

import hashlib
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SchedulingError(RuntimeError):
    """An event was scheduled before the current simulated time."""


class InvariantError(AssertionError):
    """A model invariant was violated; always a bug, never a recoverable condition."""


@dataclass(order=False)
class Event:
    fire_time: int
    sequence: int
    target: Callable[..., Any]
    payload: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class RunSummary:
    event_count: int
    final_time: int


def _stream_key(stream_id: str) -> int:
    # Python's hash() is salted per process; sha256 is stable everywhere.
    return int.from_bytes(hashlib.sha256(stream_id.encode("utf-8")).digest()[:8], "big")


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Backed by numpy's PCG64, whose output is specified bit-for-bit, so two
    streams built from the same pair produce identical draws on any
    platform.
    """

    def __init__(self, seed: int, stream_id: str):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = seed
        self.stream_id = stream_id
        seq = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, _stream_key(stream_id)])
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def exponential(self, mean: float) -> float:
        return float(self._gen.exponential(mean))

    def lognormal(self, sigma: float) -> float:
        # median 1.0
        return float(self._gen.lognormal(0.0, sigma))

    def bernoulli(self, p: float) -> bool:
        return bool(self._gen.random() < p)

    def random(self) -> float:
        return float(self._gen.random())


def draw_exponential(stream: RngStream, mean: int) -> int:
    """Exponential duration in whole nanoseconds, never zero."""
    if mean <= 0:
        raise ValueError(f"exponential mean must be positive, got {mean}")
    return max(1, round(stream.exponential(mean)))


class Kernel:
    """Single-threaded event loop.

    Events fire in ``(fire_time, sequence)`` order where ``sequence`` is the
    insertion counter, so same-time events keep their scheduling order.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._now = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._counter = itertools.count()
        self._streams: dict[str, RngStream] = {}
        self.delivered = 0

    @property
    def now(self) -> int:
        return self._now

    def __len__(self) -> int:
        return len(self._heap)

    def rng(self, stream_id: str) -> RngStream:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return stream

    def schedule(self, fire_time: int, target: Callable[..., Any], *payload: Any) -> Event:
        if fire_time < self._now:
            raise SchedulingError(
                f"event at t={fire_time} ns scheduled from t={self._now} ns"
            )
        event = Event(int(fire_time), next(self._counter), target, payload)
        heapq.heappush(self._heap, (event.fire_time, event.sequence, event))
        return event

    def schedule_in(self, delay: int, target: Callable[..., Any], *payload: Any) -> Event:
        return self.schedule(self._now + delay, target, *payload)

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def _fire_through(self, horizon: int) -> int:
        count = 0
        heap = self._heap
        while heap and heap[0][0] <= horizon:
            fire_time, _, event = heapq.heappop(heap)
            self._now = fire_time
            event.target(*event.payload)
            count += 1
        self.delivered += count
        return count

    def run_until(self, horizon: int) -> RunSummary:
        """Deliver every event with ``fire_time <= horizon`` and park the clock at horizon."""
        if horizon < self._now:
            raise SchedulingError(f"horizon {horizon} is before now {self._now}")
        count = self._fire_through(horizon)
        self._now = horizon
        return RunSummary(count, self._now)

    def run_until_empty(self, limit: int) -> RunSummary:
        """Drain queued events up to ``limit``; the clock stays at the last event fired."""
        count = self._fire_through(limit)
        return RunSummary(count, self._now)
