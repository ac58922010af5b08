"""Injectable clocks: simulated for tests/eval, wall for live operation.

Periodic callbacks (topic publishers) are fired from inside sleep(), so
the same single-threaded semantics hold under both clocks and runs are
deterministic under the simulated one.
"""

from __future__ import annotations

import time


class SimClock:
    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._periodic = []  # [period, next_due, callback], in registration order

    def now(self) -> float:
        return self._now

    def register(self, period: float, callback) -> None:
        self._periodic.append([float(period), self._now + period, callback])

    def sleep(self, dt: float) -> None:
        self.advance(dt)

    def advance(self, dt: float) -> None:
        target = self._now + float(dt)
        while True:
            due = [(p[1], i) for i, p in enumerate(self._periodic) if p[1] <= target + 1e-12]
            if not due:
                break
            when, i = min(due)
            self._now = max(self._now, when)
            entry = self._periodic[i]
            entry[1] += entry[0]
            entry[2](self._now)
        self._now = target


class WallClock:
    def __init__(self):
        self._start = time.monotonic()
        self._periodic = []

    def now(self) -> float:
        return time.monotonic() - self._start

    def register(self, period: float, callback) -> None:
        self._periodic.append([float(period), self.now() + period, callback])

    def sleep(self, dt: float) -> None:
        target = self.now() + dt
        while True:
            now = self.now()
            due = [(p[1], i) for i, p in enumerate(self._periodic) if p[1] <= min(now, target)]
            if due:
                when, i = min(due)
                entry = self._periodic[i]
                entry[1] += entry[0]
                entry[2](now)
                continue
            if now >= target:
                break
            upcoming = [p[1] for p in self._periodic if p[1] <= target]
            time.sleep(max(0.0, min([target] + upcoming) - now))
