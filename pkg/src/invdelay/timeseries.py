"""Uniform-grid signals, delay buffering, quadrature and seeded noise."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class GridMismatchError(ValueError):
    """Two series were combined although their sampling grids differ."""


@dataclass(frozen=True)
class TimeSeries:
    """Scalar signal sampled at ``start_time + i * dt``.

    No per-sample timestamps are stored. Arithmetic between two series is
    only defined on identical grids.
    """

    start_time: float
    dt: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise ValueError("values must be one-dimensional")

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(len(self.values))

    def time_at(self, i: int) -> float:
        return self.start_time + i * self.dt

    def same_grid(self, other: TimeSeries) -> bool:
        return self.start_time == other.start_time and self.dt == other.dt

    def _check(self, other: TimeSeries) -> None:
        if not self.same_grid(other):
            raise GridMismatchError(
                f"grid ({self.start_time}, {self.dt}) != ({other.start_time}, {other.dt})"
            )
        if len(self) != len(other):
            raise GridMismatchError(f"length {len(self)} != {len(other)}")

    def _binary(self, other, op) -> TimeSeries:
        if isinstance(other, TimeSeries):
            self._check(other)
            other = other.values
        return TimeSeries(self.start_time, self.dt, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self) -> TimeSeries:
        return TimeSeries(self.start_time, self.dt, -self.values)

    @classmethod
    def from_function(cls, f, start_time: float, dt: float, n: int) -> TimeSeries:
        t = start_time + dt * np.arange(n)
        return cls(start_time, dt, np.asarray(f(t), dtype=float) * np.ones(n))


def steps_for(duration: float, dt: float, what: str = "duration") -> int:
    """Return ``duration / dt`` as an int, refusing non-integer ratios."""
    ratio = duration / dt
    n = round(ratio)
    if not math.isclose(ratio, n, rel_tol=0.0, abs_tol=1e-9):
        raise ValueError(f"{what}={duration} is not an integer multiple of dt={dt}")
    return int(n)


class DelayLine:
    """Fixed-depth FIFO: each push returns the value pushed ``depth`` pushes ago.

    Before ``depth`` values have been pushed the fill value comes out.
    """

    def __init__(self, depth: int, fill: float = 0.0) -> None:
        if int(depth) != depth or depth < 1:
            raise ValueError(f"depth must be a positive integer, got {depth}")
        self.depth = int(depth)
        self.fill = float(fill)
        self.buffer: deque[float] = deque([self.fill] * self.depth, maxlen=self.depth)

    @classmethod
    def for_lead_time(cls, lead_time: float, dt: float, fill: float = 0.0) -> DelayLine:
        return cls(steps_for(lead_time, dt, "lead time"), fill)

    def push_read(self, value: float) -> float:
        out = self.buffer[0]
        self.buffer.append(float(value))
        return out

    @property
    def head(self) -> float:
        """Value that the next push will return."""
        return self.buffer[0]

    def contents(self) -> np.ndarray:
        """Buffered values, oldest first."""
        return np.fromiter(self.buffer, dtype=float, count=self.depth)


def delayline_push_read(line: DelayLine, value: float) -> float:
    return line.push_read(value)


@lru_cache(maxsize=256)
def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    """Weights ``q`` with ``q @ x`` the trapezoidal integral of ``n`` samples."""
    if n < 2:
        raise ValueError("trapezoid needs at least two samples")
    q = np.full(n, dt)
    q[0] = q[-1] = dt / 2
    q.setflags(write=False)
    return q


def integrate_window(x: TimeSeries, i_lo: int, i_hi: int) -> float:
    """Trapezoidal integral of ``x`` over ``[t(i_lo), t(i_hi)]``."""
    if not 0 <= i_lo < i_hi < len(x):
        if i_lo >= i_hi:
            raise ValueError(f"empty window [{i_lo}, {i_hi}]")
        raise IndexError(f"window [{i_lo}, {i_hi}] outside series of length {len(x)}")
    seg = x.values[i_lo : i_hi + 1]
    return float(trapezoid_weights(len(seg), x.dt) @ seg)


@dataclass
class NoiseSource:
    """Seeded white-noise generator.

    ``kind`` is ``"none"``, ``"uniform"`` (``a``, ``b`` = lo, hi) or
    ``"gaussian"`` (``a``, ``b`` = mean, std). Samples come from NumPy's
    PCG64 bit generator, whose stream is fixed for a given seed.
    """

    kind: str = "none"
    a: float = 0.0
    b: float = 0.0
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ("none", "uniform", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "uniform" and self.a > self.b:
            raise ValueError("uniform noise needs lo <= hi")
        if self.kind == "gaussian" and self.b < 0:
            raise ValueError("gaussian std must be non-negative")
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    @classmethod
    def uniform(cls, lo: float, hi: float, seed: int = 0) -> NoiseSource:
        return cls("uniform", lo, hi, seed)

    @classmethod
    def gaussian(cls, mean: float, std: float, seed: int = 0) -> NoiseSource:
        return cls("gaussian", mean, std, seed)

    def next(self) -> float:
        if self.kind == "uniform":
            return float(self._rng.uniform(self.a, self.b))
        if self.kind == "gaussian":
            return float(self._rng.normal(self.a, self.b))
        return 0.0

    def sample(self, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return self._rng.uniform(self.a, self.b, size=n)
        if self.kind == "gaussian":
            return self._rng.normal(self.a, self.b, size=n)
        return np.zeros(n)


def noise_next(src: NoiseSource) -> float:
    return src.next()
