"""Clocks for runtime budgets.

Campaigns use :class:`SimulatedClock` so that a run is a pure function of its
seed: every reading advances the clock by a fixed tick, which makes the
budget an iteration budget in disguise.
"""
import time


class WallClock:
    def now(self) -> float:
        return time.perf_counter()


class SimulatedClock:
    def __init__(self, tick: float = 0.002, start: float = 0.0):
        if tick <= 0:
            raise ValueError("tick must be positive")
        self.tick = tick
        self._t = start

    def now(self) -> float:
        t = self._t
        self._t += self.tick
        return t

    def peek(self) -> float:
        return self._t
