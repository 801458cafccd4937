"""Sampled closed-loop LOS stabilization on a wave-disturbed carrier.

One sample of the loop (period ``Te``):

1. carrier disturbance and true inertial LOS rate from the current state;
2. the gyro returns the previous sample's true rate (one-sample delay);
3. speed error against the reference;
4. discrete K0 filters and the ``J^-1 T^-1`` map give the joint-rate command;
5. the actuators (first-order lag plus input disturbance) are integrated
   with RK4 across the sample, and the orientation is re-solved from the
   joints by Newton so the closure holds at every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .control import (
    ActuatorParameters,
    ControllerCoefficients,
    SpeedController,
    TE_DEFAULT,
)
from .kinematics import (
    HOME_THETA,
    DesignParameters,
    KinematicsError,
    carrier_disturbance,
    closure,
    fgm,
    jacobians,
)

DEG = math.pi / 180
COULOMB_SMOOTHING = 1e-4

TRACE_HEADER = (
    "t,om1,om2,om3,eps1,eps2,eps3,epsw1,epsw2,epsw3,th1,th2,th3,"
    "dth1,dth2,dth3,chi1,chi2,chi3,dist1,dist2,dist3"
)


class SimulationError(RuntimeError):
    def __init__(self, sample: int, cause: Exception):
        super().__init__(f"sample {sample}: {type(cause).__name__}: {cause}")
        self.sample = sample
        self.cause = cause


@dataclass(frozen=True)
class DisturbanceProfile:
    """Carrier roll/pitch/yaw waves ``nu_i(t) = amp_i cos(2 pi f_i t + phase_i)``."""

    amplitude: tuple[float, float, float] = (10 * DEG, 10 * DEG, 0.0)
    frequency: tuple[float, float, float] = (0.1, 0.075, 0.0)
    phase: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("amplitude", "frequency", "phase"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3:
                raise ValueError(f"{name} needs three entries")
            object.__setattr__(self, name, vals)
        if any(f < 0 for f in self.frequency):
            raise ValueError("frequencies must be non-negative")


def disturbance_at(profile: DisturbanceProfile, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Carrier angles and their rates at time ``t``."""
    amp = np.asarray(profile.amplitude)
    om = 2 * math.pi * np.asarray(profile.frequency)
    arg = om * t + np.asarray(profile.phase)
    return amp * np.cos(arg), -om * amp * np.sin(arg)


@dataclass(frozen=True)
class SimulationConfig:
    duration: float = 30.0
    Te: float = TE_DEFAULT
    design: DesignParameters = field(default_factory=DesignParameters)
    actuator: ActuatorParameters = field(default_factory=ActuatorParameters)
    controller: ControllerCoefficients = field(default_factory=ControllerCoefficients)
    disturbance: DisturbanceProfile = field(default_factory=DisturbanceProfile)
    reference: tuple[float, float, float] = (0.0, 0.0, 0.0)
    chi0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    theta0: tuple[float, float, float] = tuple(HOME_THETA)
    substeps: int = 10

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.Te > 0:
            raise ValueError("Te must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        res = np.max(np.abs(closure(self.design, self.theta0, self.chi0)))
        if res > 1e-10:
            raise ValueError(f"initial pose violates the closure (|f| = {res:.2e})")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.Te)) + 1


@dataclass
class PlantState:
    theta: np.ndarray
    theta_dot: np.ndarray
    chi: np.ndarray


def _input_disturbance(actuator: ActuatorParameters, theta_dot):
    f = np.asarray(actuator.friction)
    if actuator.mode == "unit_step":
        return f
    return -f * np.tanh(theta_dot / COULOMB_SMOOTHING)


def plant_step(
    state: PlantState,
    command,
    dt: float,
    p: DesignParameters = DesignParameters(),
    actuator: ActuatorParameters = ActuatorParameters(),
    substeps: int = 1,
) -> PlantState:
    """Advance the joints by ``dt`` under a held rate command, then re-solve chi.

    Each actuator obeys ``tau_m d(theta_dot)/dt = command + d - theta_dot``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(command, dtype=float)
    tau = actuator.tau_m
    h = dt / substeps

    def rhs(w):
        return (u + _input_disturbance(actuator, w) - w) / tau

    th = np.array(state.theta, dtype=float)
    w = np.array(state.theta_dot, dtype=float)
    for _ in range(substeps):
        k1w = rhs(w)
        k2w = rhs(w + 0.5 * h * k1w)
        k3w = rhs(w + 0.5 * h * k2w)
        k4w = rhs(w + h * k3w)
        # theta' = w, so its stages are the w stages
        th = th + h / 6 * (w + 2 * (w + 0.5 * h * k1w) + 2 * (w + 0.5 * h * k2w) + (w + h * k3w))
        w = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
    chi = fgm(p, th, state.chi)
    return PlantState(th, w, chi)


@dataclass
class SimulationTrace:
    t: np.ndarray
    omega: np.ndarray  # true inertial LOS rate, LOS frame
    eps: np.ndarray  # stabilization residual
    eps_omega: np.ndarray  # speed error seen by the controller
    theta: np.ndarray
    theta_dot: np.ndarray
    chi: np.ndarray
    dist: np.ndarray  # carrier rate in LOS frame

    def as_array(self) -> np.ndarray:
        return np.column_stack(
            [self.t, self.omega, self.eps, self.eps_omega, self.theta, self.theta_dot, self.chi, self.dist]
        )

    def write_csv(self, path) -> None:
        np.savetxt(path, self.as_array(), fmt="%.17g", delimiter=",", header=TRACE_HEADER, comments="")


def run(config: SimulationConfig = SimulationConfig()) -> SimulationTrace:
    p = config.design
    Te = config.Te
    n = config.n_samples
    ref = np.asarray(config.reference, dtype=float)
    ctrl = SpeedController.from_coefficients(config.controller, Te)

    out = {k: np.zeros((n, 3)) for k in ("omega", "eps_omega", "theta", "theta_dot", "chi", "dist")}
    state = PlantState(np.array(config.theta0, float), np.zeros(3), np.array(config.chi0, float))
    measured_prev = np.zeros(3)

    for k in range(n):
        t = k * Te
        try:
            nu, nu_dot = disturbance_at(config.disturbance, t)
            maps = jacobians(p, state.theta, state.chi)
            omega_sb = maps.T @ (maps.J @ state.theta_dot)
            dist = carrier_disturbance(state.chi, nu, nu_dot)
            omega = omega_sb + dist
            eps_omega = ref - measured_prev
            measured_prev = omega

            out["omega"][k] = omega
            out["eps_omega"][k] = eps_omega
            out["theta"][k] = state.theta
            out["theta_dot"][k] = state.theta_dot
            out["chi"][k] = state.chi
            out["dist"][k] = dist
            if k == n - 1:
                break

            cmd = maps.J_inv @ np.linalg.solve(maps.T, ctrl.filter(eps_omega))
            state = plant_step(state, cmd, Te, p, config.actuator, config.substeps)
        except (KinematicsError, np.linalg.LinAlgError) as exc:
            raise SimulationError(k, exc) from exc

    e = out["eps_omega"]
    eps = np.zeros_like(e)
    eps[1:] = np.cumsum(0.5 * Te * (e[1:] + e[:-1]), axis=0)
    return SimulationTrace(t=np.arange(n) * Te, eps=eps, **out)


@dataclass(frozen=True)
class SteadyStateMetrics:
    max_abs_residual: float
    max_abs_speed_error: float
    max_abs_joint_rate: float


def steady_state_metrics(trace: SimulationTrace, t_start: float) -> SteadyStateMetrics:
    """Worst-case magnitudes over ``[t_start, end]``."""
    if not t_start < trace.t[-1]:
        raise ValueError("t_start must precede the end of the trace")
    sel = trace.t >= t_start
    return SteadyStateMetrics(
        max_abs_residual=float(np.abs(trace.eps[sel]).max()),
        max_abs_speed_error=float(np.abs(trace.eps_omega[sel]).max()),
        max_abs_joint_rate=float(np.abs(trace.theta_dot[sel]).max()),
    )
