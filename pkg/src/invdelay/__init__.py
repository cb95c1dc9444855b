"""Inventory control of delay systems: Smith-predictor P and model-free iP."""

from .control import ControllerParams, Reference
from .estimation import EstimatorConfig, TrendEstimate, estimate_trend
from .forecasting import forecast, forecast_path
from .plant import PlantParams, run_open_loop
from .scenarios import ScenarioConfig, run_scenario
from .timeseries import DelayLine, NoiseSource, TimeSeries

__all__ = [
    "ControllerParams", "DelayLine", "EstimatorConfig", "NoiseSource", "PlantParams",
    "Reference", "ScenarioConfig", "TimeSeries", "TrendEstimate", "estimate_trend",
    "forecast", "forecast_path", "run_open_loop", "run_scenario",
]
__version__ = "0.1.0"
