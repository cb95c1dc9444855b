"""Smith-predictor P control and model-free iP control for delayed inventories.

Both laws act on the tracking error predicted one lead time ahead,
``e_hat(t+L) = y_hat(t+L) - y*(t+L)``::

    smith_p:        u = (dy*/dt(t+L) + d_hat(t+L) - Kp e_hat) / k_model
    model_free_ip:  u = (dy*/dt(t+L) + F_hat(t+L) - Kp e_hat) / alpha

The iP rests on the ultra-local model ``dy/dt = alpha u(t-L) - F(t)`` where
``F`` lumps everything unknown and is re-estimated from measurements at
every sample.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimation import (
    EstimatorConfig,
    TrendEstimate,
    estimate_trend,
    estimate_window,
    increment_weights,
    warmup_estimate,
)
from .forecasting import forecast, forecast_path
from .timeseries import DelayLine, TimeSeries, steps_for

SMITH_P = "smith_p"
MODEL_FREE_IP = "model_free_ip"
VARIANTS = (SMITH_P, MODEL_FREE_IP)


@dataclass(frozen=True)
class ControllerParams:
    variant: str = SMITH_P
    k_model: float = 1.0
    sigma_model: float = 0.0
    alpha: float = 1.0
    gain_Kp: float = 0.1
    clamp_u: bool = True

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}")
        if not self.k_model > 0:
            raise ValueError(f"k_model must be > 0, got {self.k_model}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.sigma_model >= 0:
            raise ValueError("sigma_model must be >= 0")
        if not self.gain_Kp >= 0:
            raise ValueError("gain_Kp must be >= 0")

    @property
    def input_gain(self) -> float:
        return self.k_model if self.variant == SMITH_P else self.alpha

    @property
    def believed_decay(self) -> float:
        # The ultra-local model has no decay term; F absorbs it.
        return self.sigma_model if self.variant == SMITH_P else 0.0


@dataclass(frozen=True)
class Reference:
    """Piecewise-linear reference through ``points``, held flat outside them."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(t), float(y)) for t, y in self.points)
        if not pts:
            raise ValueError("reference needs at least one point")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("reference times must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def constant(cls, level: float) -> Reference:
        return cls(((0.0, level),))

    @property
    def amplitude(self) -> float:
        ys = [y for _, y in self.points]
        return max(ys) - min(ys)

    def __call__(self, t: float) -> tuple[float, float]:
        """Return ``(y*(t), dy*/dt(t))``; the derivative is the right-hand one."""
        times = [p[0] for p in self.points]
        i = bisect.bisect_right(times, t)
        if i == 0:
            return self.points[0][1], 0.0
        if i == len(self.points):
            return self.points[-1][1], 0.0
        (t0, y0), (t1, y1) = self.points[i - 1], self.points[i]
        slope = (y1 - y0) / (t1 - t0)
        return y0 + slope * (t - t0), slope

    def sample(self, times: np.ndarray) -> np.ndarray:
        return np.array([self(t)[0] for t in times])


@dataclass
class ControllerState:
    """Mutable per-run controller memory.

    ``history`` holds the last ``L/dt`` issued controls, oldest first, i.e.
    exactly the supply still in transit.
    """

    dt: float
    lead_time: float
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    fill: float = 0.0
    history: DelayLine = field(init=False)
    u_values: list[float] = field(init=False, default_factory=list)
    f_values: list[float] = field(init=False, default_factory=list)
    f_warmup: list[bool] = field(init=False, default_factory=list)
    steps: int = field(init=False, default=0)
    # Diagnostics from the latest decision.
    last_y_hat: float = field(init=False, default=float("nan"))
    last_forecast: float = field(init=False, default=float("nan"))
    last_warmup: bool = field(init=False, default=True)

    def __post_init__(self) -> None:
        self.fill = float(self.fill)
        self.depth = steps_for(self.lead_time, self.dt, "lead time")
        self.history = DelayLine(self.depth, self.fill)

    @property
    def f_series(self) -> TimeSeries:
        return TimeSeries(0.0, self.dt, np.array(self.f_values))

    def commit(self, u: float) -> None:
        self.history.push_read(u)
        self.u_values.append(u)
        self.steps += 1

    def delayed_controls(self, count: int) -> np.ndarray:
        """``u(t - L - (count - j) dt)`` for ``j = 0..count-1``, oldest first."""
        first = self.steps - self.depth - count
        out = np.full(count, self.fill)
        lo = max(first, 0)
        hi = first + count
        if hi > lo:
            out[lo - first :] = self.u_values[lo:hi]
        return out


def predict_output(
    state: ControllerState,
    y_now: float,
    params: ControllerParams,
    demand_or_F_path: Sequence[float] | TimeSeries,
) -> float:
    """Predict ``y(t+L)`` by Euler-integrating the believed model over the horizon.

    ``demand_or_F_path[j]`` is the demand (smith_p) or ``F`` (iP) acting
    during the step starting at ``t + j*dt``, ``j = 0..L/dt-1``. The supply
    arriving in that window is the controls already issued.
    """
    path = np.asarray(
        demand_or_F_path.values if isinstance(demand_or_F_path, TimeSeries) else demand_or_F_path,
        dtype=float,
    )
    if len(path) != state.depth:
        raise ValueError(f"horizon path has {len(path)} samples, expected {state.depth}")
    gain, decay, dt = params.input_gain, params.believed_decay, state.dt
    y = float(y_now)
    for u, w in zip(state.history.buffer, path):
        y += dt * (-decay * y + gain * u - w)
    return y


def horizon_path(est: TrendEstimate, dt: float, steps: int) -> np.ndarray:
    """Per-step values at ``t, t+dt, ..., t+L-dt`` from one frozen estimate."""
    out = np.empty(steps)
    out[0] = est.mean_at_end
    if steps > 1:
        out[1:] = forecast_path(est, dt, steps - 1).values
    return out


def _law(ydot_ref: float, feedforward: float, e_hat: float, params: ControllerParams) -> float:
    u = (ydot_ref + feedforward - params.gain_Kp * e_hat) / params.input_gain
    return max(u, 0.0) if params.clamp_u else u


def control_smith_p(
    y_now: float,
    ref: Reference,
    t: float,
    state: ControllerState,
    params: ControllerParams,
    d_estimate: TrendEstimate,
    *,
    demand_path: Sequence[float] | None = None,
    feedforward_error: float = 0.0,
) -> float:
    """Model-based P law with Smith prediction; commits and returns ``u(t)``.

    Demand forecasts are clamped at zero before use. ``demand_path`` replaces
    the forecasts with known demand at ``t, t+dt, ..., t+L`` (``L/dt + 1``
    values); ``feedforward_error`` is added to the ``d_hat(t+L)`` term.
    """
    if params.variant != SMITH_P:
        raise ValueError("control_smith_p needs a smith_p parameter set")
    L, D = state.lead_time, state.depth
    y_ref, ydot_ref = ref(t + L)
    if demand_path is not None:
        known = np.asarray(demand_path, dtype=float)
        if len(known) != D + 1:
            raise ValueError(f"demand_path needs {D + 1} samples")
        path, d_point = known[:D], float(known[D])
        state.last_forecast = d_point
        warm = state.steps < D
    else:
        raw = forecast(d_estimate, L).value
        state.last_forecast = raw
        d_point = max(raw, 0.0)
        path = np.maximum(horizon_path(d_estimate, state.dt, D), 0.0)
        warm = state.steps < D or d_estimate.warmup
    y_hat = predict_output(state, y_now, params, path)
    e_hat = 0.0 if warm else y_hat - y_ref
    u = _law(ydot_ref, d_point + feedforward_error, e_hat, params)
    state.last_y_hat, state.last_warmup = y_hat, warm
    state.commit(u)
    return u


def estimate_F(state: ControllerState, y: TimeSeries, params: ControllerParams, t: float) -> float:
    """Estimate ``F(t)`` of the ultra-local model from measured ``y``.

    ``y`` holds the measurements up to and including ``t``. The slope of
    ``y`` over the estimator window is a weighted mean of per-step
    derivatives; the delayed control is averaged with the same weights, so
    ``F = alpha * <u(t-L)> - slope``. For a control constant over the window
    this is ``alpha u(t-L) - dy/dt``. During warm-up the slope is taken as
    zero and the latest delayed control is used. The value is appended to
    the controller's F record.
    """
    est = estimate_trend(y, len(y) - 1, state.estimator)
    if est.warmup:
        u_avg = state.history.head
    else:
        W = state.estimator.window_samples
        h = increment_weights(W, state.dt, state.estimator.integration_order)
        u_avg = float(h @ state.delayed_controls(W - 1))
    F = params.alpha * u_avg - est.slope
    state.f_values.append(F)
    state.f_warmup.append(est.warmup)
    return F


def f_trend(state: ControllerState, t: float) -> TrendEstimate:
    """Trend of the F record; warm-up until a full window of settled F exists."""
    W = state.estimator.window_samples
    if not state.f_values:
        raise ValueError("no F estimates recorded yet")
    if len(state.f_values) < W or any(state.f_warmup[-W:]):
        return warmup_estimate(state.f_values[-1], t)
    return estimate_window(np.asarray(state.f_values[-W:]), state.dt, t, state.estimator)


def control_model_free_ip(
    y_now: float,
    ref: Reference,
    t: float,
    state: ControllerState,
    params: ControllerParams,
    *,
    feedforward_error: float = 0.0,
) -> float:
    """Intelligent proportional law; commits and returns ``u(t)``.

    Call :func:`estimate_F` for the current sample first.
    """
    if params.variant != MODEL_FREE_IP:
        raise ValueError("control_model_free_ip needs a model_free_ip parameter set")
    L, D = state.lead_time, state.depth
    y_ref, ydot_ref = ref(t + L)
    est = f_trend(state, t)
    F_point = forecast(est, L).value
    path = horizon_path(est, state.dt, D)
    warm = state.steps < D or est.warmup
    y_hat = predict_output(state, y_now, params, path)
    e_hat = 0.0 if warm else y_hat - y_ref
    u = _law(ydot_ref, F_point + feedforward_error, e_hat, params)
    state.last_y_hat, state.last_forecast, state.last_warmup = y_hat, F_point, warm
    state.commit(u)
    return u
