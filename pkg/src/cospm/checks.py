"""Numerical self-checks of the kinematic model, shared by the CLI and tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import (
    HOME_THETA,
    DesignParameters,
    KinematicsError,
    closure,
    closure_partials,
    fgm,
    igm,
)
from .singularity import PRESCRIBED_WORKSPACE, WorkspaceBox

FD_STEP = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float  # worst observed error
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tolerance)


def check_home(p: DesignParameters, tol: float = 1e-12) -> CheckResult:
    err = float(np.max(np.abs(closure(p, HOME_THETA, np.zeros(3)))))
    return CheckResult("closure at home", err, tol)


def check_coaxiality(p: DesignParameters, n: int = 1000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Shift all joints by eps versus shift the bearing by eps."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        theta = rng.uniform(-math.pi, math.pi, 3)
        chi = rng.uniform(-math.pi, math.pi, 3)
        eps = rng.uniform(-math.pi, math.pi)
        lhs = closure(p, theta + eps, chi)
        rhs = closure(p, theta, chi + np.array([0.0, 0.0, eps]))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return CheckResult("coaxiality", worst, tol, f"{n} random samples")


def _workspace_grid(box: WorkspaceBox, n: int):
    for a in np.linspace(*box.chi1_range, n):
        for b in np.linspace(*box.chi2_range, n):
            yield np.array([a, b, box.chi3])


def check_roundtrip(
    p: DesignParameters, box: WorkspaceBox = PRESCRIBED_WORKSPACE, n: int = 50, tol: float = 1e-9
) -> CheckResult:
    """fgm(igm(chi)) == chi over an ``n x n`` grid, Newton seeded at the box center."""
    seed = np.array([np.mean(box.chi1_range), np.mean(box.chi2_range), box.chi3])
    worst, failures = 0.0, 0
    for chi in _workspace_grid(box, n):
        try:
            back = fgm(p, igm(p, chi), seed)
        except KinematicsError:
            failures += 1
            continue
        worst = max(worst, float(np.max(np.abs(back - chi))))
    if failures:
        return CheckResult("igm/fgm roundtrip", math.inf, tol, f"{failures} solver failures")
    return CheckResult("igm/fgm roundtrip", worst, tol, f"{n}x{n} grid")


def finite_difference_partials(p: DesignParameters, theta, chi, h: float = FD_STEP):
    """Central-difference estimates of ``(J1, J2) = (df/dchi, df/dtheta)``."""
    theta = np.asarray(theta, dtype=float)
    chi = np.asarray(chi, dtype=float)
    J1 = np.empty((3, 3))
    J2 = np.empty((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        J1[:, k] = (closure(p, theta, chi + e) - closure(p, theta, chi - e)) / (2 * h)
        J2[:, k] = (closure(p, theta + e, chi) - closure(p, theta - e, chi)) / (2 * h)
    return J1, J2


def check_jacobians(
    p: DesignParameters, box: WorkspaceBox = PRESCRIBED_WORKSPACE, n: int = 100, seed: int = 1, tol: float = 1e-5
) -> CheckResult:
    """Analytic closure partials against central differences at random poses in ``box``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        chi = np.array([rng.uniform(*box.chi1_range), rng.uniform(*box.chi2_range), box.chi3])
        try:
            theta = igm(p, chi)
        except KinematicsError:
            return CheckResult("jacobians vs finite differences", math.inf, tol, "igm failed")
        J1, J2 = closure_partials(p, theta, chi)
        F1, F2 = finite_difference_partials(p, theta, chi)
        worst = max(worst, float(np.max(np.abs(J1 - F1))), float(np.max(np.abs(J2 - F2))))
    return CheckResult("jacobians vs finite differences", worst, tol, f"{n} random poses")


def kinematic_checks(p: DesignParameters, box: WorkspaceBox = PRESCRIBED_WORKSPACE) -> list[CheckResult]:
    return [
        check_home(p),
        check_coaxiality(p),
        check_roundtrip(p, box),
        check_jacobians(p, box),
    ]
