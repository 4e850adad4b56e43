"""Time sources for the executor.

``MonotonicClock`` is the production clock. ``VirtualClock`` is a
discrete-event clock for tests and simulation: sleeping advances virtual time
instead of blocking, and when several worker threads share the clock, time
only moves once every registered worker is asleep.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time

_NS = 1_000_000_000


class MonotonicClock:
    def now(self) -> float:
        return time.perf_counter()

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"negative sleep: {seconds}")
        time.sleep(seconds)

    def expect(self, workers: int) -> None:
        pass

    def leave(self) -> None:
        pass


class VirtualClock:
    """Deterministic clock with integer-nanosecond resolution.

    Without registered workers, ``sleep`` simply advances time. A caller that
    fans out to threads registers them with :meth:`expect` before starting
    them, and each thread calls :meth:`leave` when it finishes. While workers
    are registered, a sleeping thread blocks until every other registered
    worker is also asleep or gone; the clock then jumps to the earliest wake
    time and releases every sleeper due at that instant.
    """

    def __init__(self, start: float = 0.0):
        self._now_ns = round(start * _NS)
        self._cond = threading.Condition()
        self._active = 0
        self._heap: list[tuple[int, int]] = []
        self._released: set[int] = set()
        self._seq = itertools.count()
        self.sleeps: list[float] = []

    def now(self) -> float:
        with self._cond:
            return self._now_ns / _NS

    @property
    def now_ns(self) -> int:
        with self._cond:
            return self._now_ns

    def expect(self, workers: int) -> None:
        with self._cond:
            self._active += workers

    def leave(self) -> None:
        with self._cond:
            self._active -= 1
            self._advance()

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"negative sleep: {seconds}")
        ns = round(seconds * _NS)
        with self._cond:
            self.sleeps.append(seconds)
            if self._active == 0:
                self._now_ns += ns
                return
            seq = next(self._seq)
            heapq.heappush(self._heap, (self._now_ns + ns, seq))
            self._active -= 1
            self._advance()
            while seq not in self._released:
                self._cond.wait()
            self._released.discard(seq)

    def _advance(self) -> None:
        if self._active > 0 or not self._heap:
            return
        wake = self._heap[0][0]
        self._now_ns = max(self._now_ns, wake)
        while self._heap and self._heap[0][0] == wake:
            _, seq = heapq.heappop(self._heap)
            self._released.add(seq)
            self._active += 1
        self._cond.notify_all()
