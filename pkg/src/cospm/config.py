"""INI run configuration: one file drives every CLI workflow.

Angles are stored in degrees and converted to radians on load. Rates,
frequencies, times and controller coefficients keep their SI units.
Missing keys fall back to the built-in defaults; unknown sections or keys
are rejected.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .control import TE_DEFAULT, ActuatorParameters, ControllerCoefficients
from .kinematics import HOME_THETA, DesignParameters
from .simulation import DisturbanceProfile, SimulationConfig
from .singularity import FIGURE_BOX, PRESCRIBED_WORKSPACE, WorkspaceBox

DEG = math.pi / 180


class ConfigError(ValueError):
    """Unreadable, malformed or inconsistent configuration file."""


@dataclass(frozen=True)
class ScanSettings:
    box: WorkspaceBox = FIGURE_BOX
    grid: tuple[int, int] = (200, 200)
    certify_step: float = 1 * DEG
    workers: int = 1


@dataclass(frozen=True)
class FrequencyGrid:
    w_min: float = 1e-2
    w_max: float = 1e5
    n_points: int = 1000

    def omegas(self) -> np.ndarray:
        return np.logspace(math.log10(self.w_min), math.log10(self.w_max), self.n_points)


@dataclass(frozen=True)
class RunConfig:
    design: DesignParameters = field(default_factory=DesignParameters)
    workspace: WorkspaceBox = PRESCRIBED_WORKSPACE
    scan: ScanSettings = field(default_factory=ScanSettings)
    controller: ControllerCoefficients = field(default_factory=ControllerCoefficients)
    actuator: ActuatorParameters = field(default_factory=ActuatorParameters)
    disturbance: DisturbanceProfile = field(default_factory=DisturbanceProfile)
    frequency: FrequencyGrid = field(default_factory=FrequencyGrid)
    duration: float = 30.0
    Te: float = TE_DEFAULT
    reference: tuple[float, float, float] = (0.0, 0.0, 0.0)
    chi0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    theta0: tuple[float, float, float] = tuple(HOME_THETA)
    substeps: int = 10
    t_start: float = 15.0

    def simulation(self) -> SimulationConfig:
        return SimulationConfig(
            duration=self.duration,
            Te=self.Te,
            design=self.design,
            actuator=self.actuator,
            controller=self.controller,
            disturbance=self.disturbance,
            reference=self.reference,
            chi0=self.chi0,
            theta0=self.theta0,
            substeps=self.substeps,
        )


# (kind, unit) per key; kind is 'float', 'vec3', 'range', 'int', 'grid' or 'str',
# unit 'deg' marks angles stored in degrees
_SCHEMA = {
    "design": {
        "alpha1": ("vec3", "deg"),
        "alpha2": ("vec3", "deg"),
        "eta": ("vec3", "deg"),
        "beta1": ("float", "deg"),
        "beta2": ("float", "deg"),
    },
    "workspace": {
        "chi1_range": ("range", "deg"),
        "chi2_range": ("range", "deg"),
        "chi3": ("float", "deg"),
    },
    "scan": {
        "chi1_range": ("range", "deg"),
        "chi2_range": ("range", "deg"),
        "chi3": ("float", "deg"),
        "grid": ("grid", None),
        "certify_step": ("float", "deg"),
        "workers": ("int", None),
    },
    "controller": {f.name: ("float", None) for f in fields(ControllerCoefficients)},
    "actuator": {
        "tau_m": ("float", None),
        "friction": ("vec3", None),
        "mode": ("str", None),
    },
    "disturbance": {
        "amplitude": ("vec3", "deg"),
        "frequency": ("vec3", None),
        "phase": ("vec3", "deg"),
    },
    "frequency": {
        "w_min": ("float", None),
        "w_max": ("float", None),
        "n_points": ("int", None),
    },
    "simulation": {
        "duration": ("float", None),
        "te": ("float", None),
        "reference": ("vec3", None),
        "chi0": ("vec3", "deg"),
        "theta0": ("vec3", "deg"),
        "substeps": ("int", None),
        "t_start": ("float", None),
    },
}


def _parse_floats(text: str, n: int, key: str) -> tuple[float, ...]:
    parts = [s for s in text.replace(",", " ").split()]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} value(s), got {len(parts)}")
    try:
        vals = tuple(float(s) for s in parts)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{key}: values must be finite")
    return vals


def parse_grid(text: str) -> tuple[int, int]:
    """``"200x150"`` -> ``(200, 150)``."""
    try:
        a, b = text.lower().split("x")
        n1, n2 = int(a), int(b)
    except ValueError:
        raise ConfigError(f"grid must look like N1xN2, got {text!r}") from None
    if n1 < 2 or n2 < 2:
        raise ConfigError("grid needs at least 2 nodes per axis")
    return n1, n2


def _convert(section: str, key: str, raw: str):
    kind, unit = _SCHEMA[section][key]
    name = f"[{section}] {key}"
    scale = DEG if unit == "deg" else 1.0
    if kind == "float":
        return _parse_floats(raw, 1, name)[0] * scale
    if kind == "vec3":
        return tuple(v * scale for v in _parse_floats(raw, 3, name))
    if kind == "range":
        return tuple(v * scale for v in _parse_floats(raw, 2, name))
    if kind == "int":
        try:
            return int(raw.strip())
        except ValueError:
            raise ConfigError(f"{name}: not an integer: {raw!r}") from None
    if kind == "grid":
        return parse_grid(raw.strip())
    return raw.strip()


def _read_values(text: str, source: str) -> dict[str, dict]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values: dict[str, dict] = {}
    for section in parser.sections():
        key_section = section.lower()
        if key_section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        values[key_section] = {}
        canonical = {k.lower(): k for k in _SCHEMA[key_section]}
        for key, raw in parser.items(section):
            if key not in canonical:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key_section][canonical[key]] = _convert(key_section, canonical[key], raw)
    return values


def _box(vals: dict, base: WorkspaceBox) -> WorkspaceBox:
    return WorkspaceBox(
        vals.get("chi1_range", base.chi1_range),
        vals.get("chi2_range", base.chi2_range),
        vals.get("chi3", base.chi3),
    )


def loads(text: str, source: str = "<string>") -> RunConfig:
    """Build a :class:`RunConfig` from INI text."""
    v = _read_values(text, source)
    d = RunConfig()
    try:
        design = DesignParameters(**v.get("design", {}))
        workspace = _box(v.get("workspace", {}), d.workspace)
        s = v.get("scan", {})
        scan = ScanSettings(
            box=_box(s, d.scan.box),
            grid=s.get("grid", d.scan.grid),
            certify_step=s.get("certify_step", d.scan.certify_step),
            workers=s.get("workers", d.scan.workers),
        )
        controller = ControllerCoefficients(**v.get("controller", {}))
        actuator = ActuatorParameters(**v.get("actuator", {}))
        disturbance = DisturbanceProfile(**v.get("disturbance", {}))
        frequency = FrequencyGrid(**v.get("frequency", {}))
        sim = dict(v.get("simulation", {}))
        if "te" in sim:
            sim["Te"] = sim.pop("te")
        cfg = RunConfig(
            design=design,
            workspace=workspace,
            scan=scan,
            controller=controller,
            actuator=actuator,
            disturbance=disturbance,
            frequency=frequency,
            **sim,
        )
        if not 0 < frequency.w_min < frequency.w_max or frequency.n_points < 2:
            raise ValueError("frequency grid needs 0 < w_min < w_max and n_points >= 2")
        if not (cfg.duration > 0 and cfg.Te > 0 and cfg.substeps >= 1):
            raise ValueError("duration, te and substeps must be positive")
        if scan.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0 <= cfg.t_start < cfg.duration:
            raise ValueError("t_start must lie in [0, duration)")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    return loads(text, source=str(path))


def _fmt(x: float, unit) -> str:
    """Shortest decimal that reloads to exactly ``x``."""
    if unit != "deg":
        return repr(float(x))
    deg = x / DEG
    for digits in range(12, 18):
        s = f"{deg:.{digits}g}"
        if float(s) * DEG == x:
            return s
    return repr(deg)


def _as_text(section: str, key: str, value) -> str:
    kind, unit = _SCHEMA[section][key]
    if kind in ("vec3", "range"):
        return ", ".join(_fmt(v, unit) for v in value)
    if kind == "float":
        return _fmt(value, unit)
    if kind == "grid":
        return f"{value[0]}x{value[1]}"
    return str(value)


def dumps(cfg: RunConfig = RunConfig()) -> str:
    """INI text that :func:`loads` maps back to ``cfg`` exactly."""
    box = cfg.scan.box
    data = {
        "design": {f: getattr(cfg.design, f) for f in _SCHEMA["design"]},
        "workspace": {
            "chi1_range": cfg.workspace.chi1_range,
            "chi2_range": cfg.workspace.chi2_range,
            "chi3": cfg.workspace.chi3,
        },
        "scan": {
            "chi1_range": box.chi1_range,
            "chi2_range": box.chi2_range,
            "chi3": box.chi3,
            "grid": cfg.scan.grid,
            "certify_step": cfg.scan.certify_step,
            "workers": cfg.scan.workers,
        },
        "controller": {f: getattr(cfg.controller, f) for f in _SCHEMA["controller"]},
        "actuator": {f: getattr(cfg.actuator, f) for f in _SCHEMA["actuator"]},
        "disturbance": {f: getattr(cfg.disturbance, f) for f in _SCHEMA["disturbance"]},
        "frequency": {f: getattr(cfg.frequency, f) for f in _SCHEMA["frequency"]},
        "simulation": {
            "duration": cfg.duration,
            "te": cfg.Te,
            "reference": cfg.reference,
            "chi0": cfg.chi0,
            "theta0": cfg.theta0,
            "substeps": cfg.substeps,
            "t_start": cfg.t_start,
        },
    }
    lines = [
        "# cospm run configuration",
        "# angles in degrees; rates in rad/s; frequencies in Hz (disturbance) or rad/s (grid); times in s",
    ]
    for section, items in data.items():
        lines.append("")
        lines.append(f"[{section}]")
        for key, value in items.items():
            lines.append(f"{key} = {_as_text(section, key, value)}")
    return "\n".join(lines) + "\n"
