"""Sliding-window algebraic estimation of a signal's trend and slope.

The local model on a window ``[0, T]`` is ``x(tau) = a0 + a1 * tau``. In the
operational domain ``s^2 X = a0 s + a1`` and, after differentiating in ``s``,
``s^2 X' + 2 s X = a0``. Multiplying both by ``s^-N`` (``N = n + 1``, where
``n`` is :attr:`EstimatorConfig.integration_order`) turns every term into an
iterated integral over the window, and the resulting triangular system gives
``a0`` and ``a1`` as weighted integrals of ``x``::

    a0 = int_0^T w0(tau) x(tau) dtau
    a1 = int_0^T w1(tau) x(tau) dtau

For ``n = 2`` the kernels coincide with the continuous least-squares line fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .timeseries import TimeSeries, trapezoid_weights

HOLD_LAST_SAMPLE_ZERO_SLOPE = "hold_last_sample_zero_slope"


@dataclass(frozen=True)
class EstimatorConfig:
    window_samples: int = 10
    integration_order: int = 2
    warmup_policy: str = HOLD_LAST_SAMPLE_ZERO_SLOPE

    def __post_init__(self) -> None:
        if self.window_samples < 3:
            raise ValueError("window_samples must be >= 3")
        if self.integration_order < 2:
            raise ValueError("integration_order must be >= 2")
        if self.warmup_policy != HOLD_LAST_SAMPLE_ZERO_SLOPE:
            raise ValueError(f"unknown warm-up policy {self.warmup_policy!r}")


@dataclass(frozen=True)
class TrendEstimate:
    """Trend value at the window's right edge and its slope (units per day)."""

    mean_at_end: float
    slope: float
    window_end_time: float
    warmup: bool = False


def derive_kernel_weights(
    cfg: EstimatorConfig, T: float
) -> tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]:
    """Continuous kernels ``(w0, w1)`` on ``[0, T]`` for intercept and slope."""
    if not T > 0:
        raise ValueError(f"window length must be positive, got {T}")
    N = cfg.integration_order + 1
    scale = math.factorial(N - 1) / T ** (N - 1)
    c2 = 1.0 / math.factorial(N - 2)
    c3 = 1.0 / math.factorial(N - 3)
    lead = T ** (N - 2) / math.factorial(N - 2)

    # N >= 3 so both exponents are non-negative.
    def w0(tau):
        tau = np.asarray(tau, dtype=float)
        r = T - tau
        return scale * (2 * c2 * r ** (N - 2) - c3 * tau * r ** (N - 3))

    def w1(tau):
        tau = np.asarray(tau, dtype=float)
        return scale * (c3 * (T - tau) ** (N - 3) - lead * w0(tau))

    return w0, w1


@lru_cache(maxsize=128)
def discrete_weights(window_samples: int, dt: float, integration_order: int = 2) -> np.ndarray:
    """Sample weights, shape ``(2, W)``, mapping a window to ``(a0, a1)``.

    The kernels are sampled and integrated with the trapezoidal rule; the
    right-hand side of the triangular system is evaluated with the same rule
    on the model basis ``{1, tau}``, so the discrete estimator stays exact on
    affine windows for every ``dt``.
    """
    cfg = EstimatorConfig(window_samples, integration_order)
    T = (window_samples - 1) * dt
    tau = dt * np.arange(window_samples)
    w0, w1 = derive_kernel_weights(cfg, T)
    q = trapezoid_weights(window_samples, dt)
    raw = np.vstack([q * w0(tau), q * w1(tau)])
    basis = np.vstack([np.ones_like(tau), tau]).T
    weights = np.linalg.solve(raw @ basis, raw)
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=128)
def increment_weights(window_samples: int, dt: float, integration_order: int = 2) -> np.ndarray:
    """Weights ``h`` with ``slope = sum(h * dx / dt)`` over the ``W - 1`` steps.

    The slope estimate is a weighted mean of the per-step difference
    quotients; ``h`` sums to one.
    """
    c1 = discrete_weights(window_samples, dt, integration_order)[1]
    h = dt * np.cumsum(c1[::-1])[::-1][1:]
    h.setflags(write=False)
    return h


def estimate_window(
    window: np.ndarray, dt: float, end_time: float, cfg: EstimatorConfig
) -> TrendEstimate:
    """Estimate from exactly ``cfg.window_samples`` trailing samples."""
    a0, a1 = discrete_weights(cfg.window_samples, dt, cfg.integration_order) @ window
    T = (cfg.window_samples - 1) * dt
    return TrendEstimate(float(a0 + a1 * T), float(a1), end_time)


def warmup_estimate(last_value: float, end_time: float) -> TrendEstimate:
    return TrendEstimate(float(last_value), 0.0, end_time, warmup=True)


def estimate_trend(x: TimeSeries, end_index: int, cfg: EstimatorConfig) -> TrendEstimate:
    """Trend and slope at sample ``end_index`` from the ``W`` samples ending there.

    With fewer than ``W`` samples available the last sample is held with zero
    slope and the result is flagged as warm-up.
    """
    if not 0 <= end_index < len(x):
        raise IndexError(f"end_index {end_index} outside series of length {len(x)}")
    t_end = x.time_at(end_index)
    W = cfg.window_samples
    if end_index < W - 1:
        return warmup_estimate(x.values[end_index], t_end)
    return estimate_window(x.values[end_index - W + 1 : end_index + 1], x.dt, t_end, cfg)


def decompose(x: TimeSeries, cfg: EstimatorConfig) -> tuple[TimeSeries, TimeSeries]:
    """Split ``x`` into trend and quickly fluctuating residual."""
    W = cfg.window_samples
    if len(x) < W:
        raise ValueError(f"series of length {len(x)} shorter than one window ({W})")
    trend = x.values.copy()
    a = discrete_weights(W, x.dt, cfg.integration_order)
    windows = np.lib.stride_tricks.sliding_window_view(x.values, W)
    coef = windows @ a.T
    trend[W - 1 :] = coef[:, 0] + coef[:, 1] * (W - 1) * x.dt
    trend_ts = TimeSeries(x.start_time, x.dt, trend)
    return trend_ts, TimeSeries(x.start_time, x.dt, x.values - trend)
