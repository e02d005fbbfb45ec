"""Time sources shared by every component.

Everything that timestamps or schedules takes a clock object so a whole
stack can run on simulated time. A clock has two methods: ``now()``
returning epoch seconds and ``sleep(seconds)``.
"""

from __future__ import annotations

import threading
import time


class WallClock:
    """Real time; sleep blocks the calling thread."""

    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Deterministic clock advanced explicitly by an orchestrator.

    ``sleep`` advances the clock instead of blocking, so a single-threaded
    simulation runs as fast as the CPU allows and two runs with the same
    inputs see identical timestamps.
    """

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        self.advance(seconds)

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot move a clock backwards")
        with self._lock:
            self._now += seconds
