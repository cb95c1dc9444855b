"""Ground-truth inventory dynamics with a pure supply delay.

Classic plant:     dy/dt = k u(t - L) - d(t)
Perishable plant:  dy/dt = -sigma y(t) + k u(t - L) - d(t)

Both are stepped with explicit Euler on the sampling grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timeseries import DelayLine, GridMismatchError, TimeSeries, steps_for


@dataclass(frozen=True)
class PlantParams:
    """Physical truth of the plant.

    ``pipeline_fill`` is the supply assumed in transit before ``t = 0``;
    ``clamp_inventory`` keeps ``y >= 0`` (unmet demand is lost).
    """

    yield_k: float
    decay_sigma: float = 0.0
    lead_time_L: float = 5.0
    dt: float = 1.0
    y0: float = 0.0
    pipeline_fill: float = 0.0
    clamp_inventory: bool = True

    def __post_init__(self) -> None:
        for name in ("yield_k", "decay_sigma", "lead_time_L", "dt", "y0", "pipeline_fill"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.yield_k > 0:
            raise ValueError(f"yield_k must be > 0, got {self.yield_k}")
        if not self.decay_sigma >= 0:
            raise ValueError(f"decay_sigma must be >= 0, got {self.decay_sigma}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.y0 >= 0:
            raise ValueError(f"y0 must be >= 0, got {self.y0}")
        if self.delay_steps < 1:
            raise ValueError("lead_time_L must be a positive multiple of dt")

    @property
    def delay_steps(self) -> int:
        return steps_for(self.lead_time_L, self.dt, "lead time")


@dataclass
class PlantState:
    t: float
    y: float
    delay: DelayLine

    @classmethod
    def initial(cls, params: PlantParams, t0: float = 0.0) -> PlantState:
        return cls(t0, params.y0, DelayLine(params.delay_steps, params.pipeline_fill))


def plant_step(state: PlantState, params: PlantParams, u_now: float, d_now: float) -> PlantState:
    """Advance ``state`` in place by one sample and return it."""
    if math.isnan(u_now) or math.isnan(d_now):
        raise ValueError("NaN input to plant")
    if u_now < 0:
        raise ValueError(f"supply must be non-negative, got {u_now}")
    if state.delay.depth != params.delay_steps:
        raise ValueError("delay line depth does not match L/dt")
    u_delayed = state.delay.push_read(u_now)
    y = state.y + params.dt * (-params.decay_sigma * state.y + params.yield_k * u_delayed - d_now)
    state.y = max(y, 0.0) if params.clamp_inventory else y
    state.t += params.dt
    return state


def run_open_loop(params: PlantParams, u: TimeSeries, d: TimeSeries) -> TimeSeries:
    """Inventory trajectory ``y[0..n-1]`` for supply ``u`` and demand ``d``.

    ``y[i + 1]`` is produced from ``u[i]`` and ``d[i]``.
    """
    if not u.same_grid(d) or len(u) != len(d):
        raise GridMismatchError("u and d must share one grid")
    if not math.isclose(u.dt, params.dt):
        raise GridMismatchError(f"series dt {u.dt} != plant dt {params.dt}")
    if np.any(u.values < 0):
        raise ValueError("supply must be non-negative")
    state = PlantState.initial(params, d.start_time)
    y = np.empty(len(d))
    for i in range(len(d)):
        y[i] = state.y
        if i + 1 < len(d):
            plant_step(state, params, u.values[i], d.values[i])
    return TimeSeries(d.start_time, d.dt, y)
