"""Short-horizon forecasts of a signal's mean by linear extrapolation of its trend."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import TrendEstimate
from .timeseries import TimeSeries

#: Longest horizon ``forecast_path`` accepts, in days.
MAX_HORIZON = 365.0


@dataclass(frozen=True)
class Forecast:
    horizon: float
    value: float
    basis: TrendEstimate

    @property
    def warmup(self) -> bool:
        return self.basis.warmup


def forecast(est: TrendEstimate, delta_t: float) -> Forecast:
    """Forecast of the mean ``delta_t`` days after the estimate's instant.

    Only the trend is predicted; fluctuations are not. The value is not
    clamped.
    """
    if not delta_t > 0:
        raise ValueError(f"forecast horizon must be positive, got {delta_t}")
    return Forecast(delta_t, est.mean_at_end + est.slope * delta_t, est)


def forecast_path(
    est: TrendEstimate, dt: float, steps: int, max_horizon: float = MAX_HORIZON
) -> TimeSeries:
    """Forecasts at horizons ``dt, 2 dt, ..., steps * dt`` from one frozen basis."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if steps * dt > max_horizon:
        raise ValueError(f"horizon {steps * dt} exceeds maximum {max_horizon}")
    h = dt * np.arange(1, steps + 1)
    return TimeSeries(est.window_end_time + dt, dt, est.mean_at_end + est.slope * h)
