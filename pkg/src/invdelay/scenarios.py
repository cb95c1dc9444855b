"""Closed-loop scenario runs and the experiments built on them, with their metrics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .control import (
    MODEL_FREE_IP,
    SMITH_P,
    ControllerParams,
    ControllerState,
    Reference,
    control_model_free_ip,
    control_smith_p,
    estimate_F,
)
from .estimation import EstimatorConfig, estimate_trend
from .forecasting import forecast
from .plant import PlantParams, PlantState, plant_step, run_open_loop
from .timeseries import NoiseSource, TimeSeries, steps_for

ESTIMATED = "estimated"
ORACLE = "oracle"
FORECAST_MODES = (ESTIMATED, ORACLE)

#: Fraction of the run, counted from the end, used for steady-state metrics.
STEADY_FRACTION = 0.2

# Stream ids for deriving independent generators from one scenario seed.
_DEMAND_STREAM = 0
_FORECAST_ERROR_STREAM = 1


class ScenarioError(RuntimeError):
    """A scenario failed; the message names the scenario."""


def stream_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DemandProgram:
    """Piecewise-constant base demand plus seeded white noise.

    ``levels`` are ``(start_time, level)`` steps; noise is added from
    ``noise_start`` on.
    """

    levels: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    noise: str = "none"
    noise_a: float = 0.0
    noise_b: float = 0.0
    noise_start: float = 0.0

    def __post_init__(self) -> None:
        lv = tuple(sorted((float(t), float(v)) for t, v in self.levels))
        if not lv:
            raise ValueError("demand needs at least one level")
        object.__setattr__(self, "levels", lv)
        NoiseSource(self.noise, self.noise_a, self.noise_b)  # validates

    def base(self, t: np.ndarray) -> np.ndarray:
        starts = np.array([s for s, _ in self.levels])
        values = np.array([v for _, v in self.levels])
        idx = np.searchsorted(starts, t + 1e-9, side="right") - 1
        return np.where(idx >= 0, values[np.clip(idx, 0, None)], values[0])

    def sample(self, start_time: float, dt: float, n: int, seed: int) -> TimeSeries:
        t = start_time + dt * np.arange(n)
        d = self.base(t)
        src = NoiseSource(self.noise, self.noise_a, self.noise_b, stream_seed(seed, _DEMAND_STREAM))
        for i in np.flatnonzero(t >= self.noise_start - 1e-9):
            d[i] += src.next()
        return TimeSeries(start_time, dt, d)


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    plant: PlantParams
    controller: ControllerParams
    estimator: EstimatorConfig
    reference: Reference
    demand: DemandProgram
    duration: float
    seed: int = 0
    forecast_mode: str = ESTIMATED
    forecast_error_bound: float = 0.0
    description: str = ""

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        steps_for(self.duration, self.plant.dt, "duration")
        if self.forecast_mode not in FORECAST_MODES:
            raise ValueError(f"unknown forecast_mode {self.forecast_mode!r}")
        if self.forecast_mode == ORACLE and self.controller.variant != SMITH_P:
            raise ValueError("oracle forecasts only apply to the smith_p controller")
        if not self.forecast_error_bound >= 0:
            raise ValueError("forecast_error_bound must be >= 0")

    @property
    def n_samples(self) -> int:
        return steps_for(self.duration, self.plant.dt, "duration") + 1

    def with_overrides(self, **changes) -> ScenarioConfig:
        return replace(self, **changes)


@dataclass(frozen=True)
class Metrics:
    """Summary of a run, computed on post-warm-up samples.

    ``bullwhip_ratio`` is ``None`` when demand variance is zero.
    """

    tracking_rmse: float
    steady_state_error: float
    bullwhip_ratio: float | None
    control_variance: float
    drift_slope: float
    steady_envelope: float = 0.0
    tracking_sup: float = 0.0
    window_start: float = 0.0
    steady_start: float = 0.0

    @property
    def bullwhip_defined(self) -> bool:
        return self.bullwhip_ratio is not None

    def as_dict(self) -> dict[str, float | str]:
        out: dict[str, float | str] = asdict(self)
        if self.bullwhip_ratio is None:
            out["bullwhip_ratio"] = "undefined"
        return out


@dataclass
class RunResult:
    """Aligned series of a run; ``metrics`` is ``None`` if the run never leaves warm-up."""

    id: str
    variant: str
    series: dict[str, TimeSeries]
    warmup_mask: np.ndarray
    metrics: Metrics | None = None
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return self.series["y"].dt

    def __len__(self) -> int:
        return len(self.series["y"])


def _ls_slope(t: np.ndarray, v: np.ndarray) -> float:
    if len(t) < 2:
        return 0.0
    tc = t - t.mean()
    return float(tc @ (v - v.mean()) / (tc @ tc))


def compute_metrics(
    series: dict[str, TimeSeries],
    warmup_mask: np.ndarray,
    steady_fraction: float = STEADY_FRACTION,
) -> Metrics:
    """Tracking, steady-state, bullwhip and drift metrics.

    The steady window is the last ``steady_fraction`` of the run, minus any
    warm-up samples in it.
    """
    y, y_ref = series["y"], series["y_ref"]
    n = len(y)
    post = ~np.asarray(warmup_mask, dtype=bool)
    if n == 0 or not post.any():
        raise ValueError("no post-warm-up samples to compute metrics on")
    t = y.times
    e = y.values - y_ref.values
    steady = post.copy()
    steady[: n - max(1, math.ceil(steady_fraction * n))] = False
    if not steady.any():
        raise ValueError("steady-state window lies entirely in warm-up")
    u, d = series["u"].values[post], series["d"].values[post]
    var_d = float(np.var(d))
    return Metrics(
        tracking_rmse=float(np.sqrt(np.mean(e[post] ** 2))),
        steady_state_error=float(np.mean(e[steady])),
        bullwhip_ratio=float(np.var(u) / var_d) if var_d > 0 else None,
        control_variance=float(np.var(u)),
        drift_slope=_ls_slope(t[post], e[post]),
        steady_envelope=float(np.max(np.abs(e[steady]))),
        tracking_sup=float(np.max(np.abs(e[post]))),
        window_start=float(t[post][0]),
        steady_start=float(t[steady][0]),
    )


def run_scenario(cfg: ScenarioConfig) -> RunResult:
    """Simulate the closed loop of ``cfg``; deterministic for a fixed seed."""
    try:
        return _run(cfg)
    except (ValueError, ArithmeticError) as exc:
        raise ScenarioError(f"scenario {cfg.id}: {exc}") from exc


def _run(cfg: ScenarioConfig) -> RunResult:
    plant, ctrl = cfg.plant, cfg.controller
    dt, n, L = plant.dt, cfg.n_samples, plant.lead_time_L
    D = plant.delay_steps
    # Demand is drawn past the horizon so oracle forecasts can look ahead.
    demand = cfg.demand.sample(0.0, dt, n + D, cfg.seed)
    d_all = demand.values
    err_src = NoiseSource(
        "uniform" if cfg.forecast_error_bound > 0 else "none",
        -cfg.forecast_error_bound,
        cfg.forecast_error_bound,
        stream_seed(cfg.seed, _FORECAST_ERROR_STREAM),
    )

    pstate = PlantState.initial(plant)
    cstate = ControllerState(dt, L, cfg.estimator, fill=plant.pipeline_fill)
    t = dt * np.arange(n)
    y = np.empty(n)
    u = np.empty(n)
    d_fc = np.empty(n)
    f_fc = np.full(n, np.nan)
    y_hat = np.empty(n)
    warm = np.empty(n, dtype=bool)
    ip = ctrl.variant == MODEL_FREE_IP

    for k in range(n):
        y[k] = pstate.y
        d_seen = TimeSeries(0.0, dt, d_all[: k + 1])
        d_est = estimate_trend(d_seen, k, cfg.estimator)
        eps = err_src.next()
        if ip:
            estimate_F(cstate, TimeSeries(0.0, dt, y[: k + 1]), ctrl, t[k])
            u[k] = control_model_free_ip(y[k], cfg.reference, t[k], cstate, ctrl, feedforward_error=eps)
            f_fc[k] = cstate.last_forecast
            d_fc[k] = forecast(d_est, L).value
        else:
            path = d_all[k : k + D + 1] if cfg.forecast_mode == ORACLE else None
            u[k] = control_smith_p(
                y[k], cfg.reference, t[k], cstate, ctrl, d_est,
                demand_path=path, feedforward_error=eps,
            )
            d_fc[k] = cstate.last_forecast
        warm[k] = cstate.last_warmup
        y_hat[k] = cstate.last_y_hat
        if k + 1 < n:
            plant_step(pstate, plant, u[k], d_all[k])

    series = {
        "u": TimeSeries(0.0, dt, u),
        "y": TimeSeries(0.0, dt, y),
        "y_ref": TimeSeries(0.0, dt, cfg.reference.sample(t)),
        "d": TimeSeries(0.0, dt, d_all[:n]),
        "d_forecast": TimeSeries(0.0, dt, d_fc),
        # Prediction of y(t + L) made at t.
        "y_hat": TimeSeries(0.0, dt, y_hat),
    }
    if ip:
        series["F_forecast"] = TimeSeries(0.0, dt, f_fc)
    result = RunResult(cfg.id, ctrl.variant, series, warm)
    if (~warm).any() and (~warm[n - max(1, math.ceil(STEADY_FRACTION * n)) :]).any():
        result.metrics = compute_metrics(series, warm)
    return result


def bias_drift_experiment(
    bias: float,
    plant: PlantParams,
    duration: float,
    demand_level: float = 20.0,
) -> Metrics:
    """Open-loop feedforward ``u = (d + bias) / k`` against constant demand.

    The inventory clamp is switched off and the pipeline starts empty. The
    returned ``drift_slope`` is the least-squares slope of ``y - y0`` over
    ``t >= L``; it should equal ``bias``.
    """
    if not duration > plant.lead_time_L:
        raise ValueError("duration must exceed the lead time")
    u_level = (demand_level + bias) / plant.yield_k
    if u_level < 0:
        raise ValueError("bias makes the supply negative")
    p = replace(plant, clamp_inventory=False, pipeline_fill=0.0)
    n = steps_for(duration, p.dt, "duration") + 1
    u = TimeSeries(0.0, p.dt, np.full(n, u_level))
    d = TimeSeries(0.0, p.dt, np.full(n, float(demand_level)))
    y = run_open_loop(p, u, d)
    series = {"u": u, "y": y, "y_ref": TimeSeries(0.0, p.dt, np.full(n, p.y0)), "d": d}
    # Samples before the first delivery are treated as warm-up.
    before = y.times < p.lead_time_L - 1e-9
    return compute_metrics(series, before)


def _sweep_point(args: tuple[ScenarioConfig, float]) -> Metrics:
    cfg, gain = args
    res = run_scenario(cfg.with_overrides(controller=replace(cfg.controller, gain_Kp=gain)))
    if res.metrics is None:
        raise ScenarioError(f"scenario {cfg.id}: run ends inside warm-up, no metrics")
    return res.metrics


def gain_sweep(
    cfg: ScenarioConfig,
    gains: Sequence[float],
    forecast_error_bound: float,
    *,
    forecast_mode: str | None = ORACLE,
    jobs: int = 1,
) -> list[tuple[float, Metrics]]:
    """Run ``cfg`` once per gain under a bounded feedforward forecast error.

    The error is uniform on ``[-M, M]`` and drawn from the same seeded stream
    for every gain. By default the smith_p demand forecast is the true demand
    so the injected error is the only forecast error; pass
    ``forecast_mode=None`` to keep the configured mode.
    """
    if not gains:
        raise ValueError("gain list is empty")
    base = cfg.with_overrides(forecast_error_bound=forecast_error_bound)
    if forecast_mode is not None and cfg.controller.variant == SMITH_P:
        base = base.with_overrides(forecast_mode=forecast_mode)
    tasks = [(base, float(g)) for g in gains]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            metrics = list(pool.map(_sweep_point, tasks))
    else:
        metrics = [_sweep_point(task) for task in tasks]
    return list(zip([float(g) for g in gains], metrics))


@dataclass(frozen=True)
class ShockRecovery:
    step_time: float
    pre_envelope: float
    peak_error: float
    #: Days from the step until ``|y - y*|`` stays below ``pre_envelope``; ``None`` if never.
    recovery_time: float | None


def shock_recovery(
    result: RunResult,
    step_times: Sequence[float],
    pre_window: float = 20.0,
    floor_fraction: float = 0.01,
) -> list[ShockRecovery]:
    """Recovery after each demand step.

    The pre-shock envelope is ``max |y - y*|`` over ``pre_window`` days before
    the step, floored at ``floor_fraction`` of the reference amplitude. The
    error must stay below it until the next step or the end of the run.
    """
    y, y_ref = result.series["y"], result.series["y_ref"]
    t = y.times
    e = np.abs(y.values - y_ref.values)
    floor = floor_fraction * float(np.ptp(y_ref.values))
    bounds = list(step_times) + [float(t[-1]) + y.dt]
    out = []
    for ts, te in zip(bounds, bounds[1:]):
        before = (t >= ts - pre_window - 1e-9) & (t < ts - 1e-9)
        seg = (t >= ts - 1e-9) & (t < te - 1e-9)
        if not before.any() or not seg.any():
            raise ValueError(f"step at t={ts} has no samples before or after it")
        env = max(float(e[before].max()), floor)
        above = np.flatnonzero(e[seg] > env)
        if above.size == 0:
            rec: float | None = 0.0
        elif above[-1] + 1 < seg.sum():
            rec = float(t[seg][above[-1] + 1] - ts)
        else:
            rec = None
        out.append(ShockRecovery(float(ts), env, float(e[seg].max()), rec))
    return out
