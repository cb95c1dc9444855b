"""INI scenario files: loading, validation and the bundled fixtures.

A scenario file has the sections ``[scenario]``, ``[plant]``,
``[controller]``, ``[estimator]``, ``[reference]`` and ``[demand]``; a key
``k`` in section ``s`` is referred to as ``s.k``. Unknown sections or keys
are errors. Lists of ``time:value`` pairs are comma separated, for example
``levels = 0:20, 110:40``.
"""

from __future__ import annotations

import configparser
from importlib import resources
from pathlib import Path

import numpy as np

from .control import ControllerParams, Reference
from .estimation import EstimatorConfig
from .plant import PlantParams
from .scenarios import DemandProgram, ScenarioConfig

FIXTURE_PACKAGE = "invdelay.fixtures"
EQUILIBRIUM = "equilibrium"


class ConfigError(ValueError):
    """A scenario file is missing, unreadable or invalid."""


_KEYS = {
    "scenario": {"id", "description", "duration", "seed", "forecast_mode", "forecast_error_bound"},
    "plant": {
        "yield_k", "decay_sigma", "lead_time_L", "dt", "y0", "pipeline_fill", "clamp_inventory",
    },
    "controller": {"variant", "k_model", "sigma_model", "alpha", "gain_Kp", "clamp_u"},
    "estimator": {"window_samples", "integration_order", "warmup_policy"},
    "reference": {"points", "smoothstep", "knots"},
    "demand": {"levels", "noise", "noise_a", "noise_b", "noise_start"},
}
_REQUIRED = {
    "scenario": {"duration"},
    "plant": {"yield_k", "lead_time_L", "dt"},
    "controller": {"variant"},
    "reference": set(),
    "demand": {"levels"},
}


def parse_pairs(text: str) -> tuple[tuple[float, float], ...]:
    """Parse ``"t0:v0, t1:v1"`` into float pairs."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"bad time:value pair {item!r}") from None
    if not out:
        raise ConfigError("empty list of time:value pairs")
    return tuple(out)


def smoothstep_points(
    start: float, rise: float, low: float, high: float, knots: int = 21
) -> tuple[tuple[float, float], ...]:
    """Piecewise-linear samples of ``3x^2 - 2x^3`` from ``low`` to ``high``."""
    if not rise > 0 or knots < 2:
        raise ConfigError("smoothstep needs a positive rise time and at least 2 knots")
    x = np.linspace(0.0, 1.0, knots)
    return tuple(
        (float(start + rise * xi), float(low + (high - low) * (3 * xi**2 - 2 * xi**3))) for xi in x
    )


def _section(cp: configparser.ConfigParser, name: str) -> dict[str, str]:
    return dict(cp[name]) if cp.has_section(name) else {}


def _float(sec: dict[str, str], key: str, where: str, default: float | None = None) -> float:
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {where}.{key}")
        return default
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"{where}.{key}: not a number: {sec[key]!r}") from None


def _int(sec: dict[str, str], key: str, where: str, default: int) -> int:
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError:
        raise ConfigError(f"{where}.{key}: not an integer: {sec[key]!r}") from None


def _bool(sec: dict[str, str], key: str, where: str, default: bool) -> bool:
    if key not in sec:
        return default
    v = sec[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}.{key}: not a boolean: {sec[key]!r}")


def _check_keys(cp: configparser.ConfigParser) -> None:
    for name in cp.sections():
        if name not in _KEYS:
            raise ConfigError(f"unknown section [{name}]")
        # configparser lower-cases keys; compare case-insensitively.
        allowed = {k.lower() for k in _KEYS[name]}
        for key in cp[name]:
            if key not in allowed:
                raise ConfigError(f"unknown key {name}.{key}")
    for name, keys in _REQUIRED.items():
        if not cp.has_section(name):
            raise ConfigError(f"missing section [{name}]")
        for key in keys:
            if key.lower() not in cp[name]:
                raise ConfigError(f"missing key {name}.{key}")


def _reference(sec: dict[str, str]) -> Reference:
    if ("points" in sec) == ("smoothstep" in sec):
        raise ConfigError("reference needs exactly one of reference.points, reference.smoothstep")
    if "points" in sec:
        return Reference(parse_pairs(sec["points"]))
    try:
        start, rise, low, high = (float(v) for v in sec["smoothstep"].split(","))
    except ValueError:
        raise ConfigError("reference.smoothstep must be 'start, rise, low, high'") from None
    return Reference(smoothstep_points(start, rise, low, high, _int(sec, "knots", "reference", 21)))


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig` from INI text."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        _check_keys(cp)
        sc, pl, co = _section(cp, "scenario"), _section(cp, "plant"), _section(cp, "controller")
        es, rf, de = _section(cp, "estimator"), _section(cp, "reference"), _section(cp, "demand")

        demand = DemandProgram(
            parse_pairs(de["levels"]),
            de.get("noise", "none").strip(),
            _float(de, "noise_a", "demand", 0.0),
            _float(de, "noise_b", "demand", 0.0),
            _float(de, "noise_start", "demand", 0.0),
        )
        k = _float(pl, "yield_k", "plant")
        sigma = _float(pl, "decay_sigma", "plant", 0.0)
        y0 = _float(pl, "y0", "plant", 0.0)
        fill_text = pl.get("pipeline_fill", "0").strip()
        if fill_text.lower() == EQUILIBRIUM:
            # Supply that holds y0 against the initial base demand.
            fill = (sigma * y0 + demand.levels[0][1]) / k
        else:
            fill = _float(pl, "pipeline_fill", "plant", 0.0)
        plant = PlantParams(
            yield_k=k,
            decay_sigma=sigma,
            lead_time_L=_float(pl, "lead_time_l", "plant"),
            dt=_float(pl, "dt", "plant"),
            y0=y0,
            pipeline_fill=fill,
            clamp_inventory=_bool(pl, "clamp_inventory", "plant", True),
        )
        controller = ControllerParams(
            variant=co["variant"].strip(),
            k_model=_float(co, "k_model", "controller", 1.0),
            sigma_model=_float(co, "sigma_model", "controller", 0.0),
            alpha=_float(co, "alpha", "controller", 1.0),
            gain_Kp=_float(co, "gain_kp", "controller", 0.1),
            clamp_u=_bool(co, "clamp_u", "controller", True),
        )
        estimator = EstimatorConfig(
            _int(es, "window_samples", "estimator", 10),
            _int(es, "integration_order", "estimator", 2),
            es.get("warmup_policy", "hold_last_sample_zero_slope").strip(),
        )
        return ScenarioConfig(
            id=sc.get("id", Path(source).stem).strip(),
            plant=plant,
            controller=controller,
            estimator=estimator,
            reference=_reference(rf),
            demand=demand,
            duration=_float(sc, "duration", "scenario"),
            seed=_int(sc, "seed", "scenario", 0),
            forecast_mode=sc.get("forecast_mode", "estimated").strip(),
            forecast_error_bound=_float(sc, "forecast_error_bound", "scenario", 0.0),
            description=sc.get("description", "").strip(),
        )
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def list_fixtures() -> list[str]:
    files = resources.files(FIXTURE_PACKAGE).iterdir()
    return sorted(f.name[:-4] for f in files if f.name.endswith(".ini"))


def load_fixture(fixture_id: str) -> ScenarioConfig:
    res = resources.files(FIXTURE_PACKAGE).joinpath(f"{fixture_id}.ini")
    if not res.is_file():
        raise ConfigError(f"unknown scenario {fixture_id!r}; known: {', '.join(list_fixtures())}")
    return parse_config(res.read_text(encoding="utf-8"), f"{fixture_id}.ini")


def resolve(scenario: str) -> ScenarioConfig:
    """A fixture id, or else a path to a scenario file."""
    if scenario in list_fixtures():
        return load_fixture(scenario)
    if Path(scenario).suffix or Path(scenario).exists():
        return load_config(scenario)
    return load_fixture(scenario)
