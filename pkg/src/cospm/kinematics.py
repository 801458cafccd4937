"""Geometric and first-order kinematic model of the 3-RRR coaxial SPM.

Orientation is the ZYX Tait-Bryan vector ``chi = (bank, elevation, bearing)``
and the platform frame is ``R(chi) = Rz(chi3) @ Ry(chi2) @ Rx(chi1)``.
Each leg closes through ``w_i(theta_i) . v_i(chi) = cos(alpha2_i)``.

All angles are radians and are kept unwrapped; wrapping happens only in the
tan-half conversions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HOME_THETA = np.full(3, math.pi / 2)

_Z = np.array([0.0, 0.0, 1.0])
_SQRT2 = math.sqrt(2.0)

SINGULAR_DET = 1e-12
FGM_TOL = 1e-12
FGM_MAX_ITER = 25


class KinematicsError(Exception):
    """Base class for kinematic failures."""


class SingularJ1(KinematicsError):
    """dF/dchi is (numerically) singular: Type-2 proximity."""


class SingularJ2(KinematicsError):
    """dF/dtheta is (numerically) singular: Type-1 proximity."""


class SingularT(KinematicsError):
    """Euler rate map is singular (elevation at +/- pi/2)."""


class NoRealSolution(KinematicsError):
    """Negative IGM discriminant: orientation outside the reachable set."""


class DegenerateQuadratic(KinematicsError):
    """IGM quadratic collapsed to a constant."""


class NoConvergence(KinematicsError):
    """Forward geometric model Newton iteration ran out of budget."""


class AngleAtBranchPoint(ValueError):
    """Tan-half map undefined at +/- pi."""


@dataclass(frozen=True)
class DesignParameters:
    """Link and platform angles of one SPM instance (radians).

    Defaults are the coaxial instance studied here.
    """

    alpha1: tuple[float, float, float] = (math.pi / 4, math.pi / 4, math.pi / 2)
    alpha2: tuple[float, float, float] = (math.pi / 2, math.pi / 2, math.pi / 2)
    eta: tuple[float, float, float] = (math.pi / 4, -math.pi / 4, 0.0)
    beta1: float = 0.0
    beta2: float = math.pi / 2

    # cached leg constants, see _leg_constants
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "eta"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3:
                raise ValueError(f"{name} needs three entries, got {len(vals)}")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "beta1", float(self.beta1))
        object.__setattr__(self, "beta2", float(self.beta2))
        angles = self.alpha1 + self.alpha2 + self.eta + (self.beta1, self.beta2)
        if not all(math.isfinite(a) for a in angles):
            raise ValueError("design angles must be finite")
        for a in self.alpha1 + self.alpha2:
            if not 0.0 < a < math.pi:
                raise ValueError(f"link angle {a} outside (0, pi)")

    @property
    def coaxial(self) -> bool:
        return self.beta1 == 0.0


@dataclass(frozen=True)
class LegConstants:
    """Pose-independent pieces of the closure, stacked over legs.

    ``w_i(theta) = base[i] @ Rz(theta) @ prox[i]`` and
    ``v_i(chi) = R(chi) @ plat[i]``.
    """

    base: np.ndarray  # (3, 3, 3)
    prox: np.ndarray  # (3, 3)
    plat: np.ndarray  # (3, 3)
    cos_alpha2: np.ndarray  # (3,)


def _leg_constants(p: DesignParameters) -> LegConstants:
    lc = p._cache.get("legs")
    if lc is None:
        base = np.stack([rot_z(e) @ rot_x(p.beta1 - math.pi) for e in p.eta])
        prox = np.stack([rot_x(a) @ _Z for a in p.alpha1])
        plat = np.stack([rot_z(e) @ rot_x(-p.beta2) @ _Z for e in p.eta])
        lc = LegConstants(base, prox, plat, np.cos(np.asarray(p.alpha2)))
        for arr in (base, prox, plat, lc.cos_alpha2):
            arr.setflags(write=False)
        p._cache["legs"] = lc
    return lc


# --------------------------------------------------------------------------
# rotations


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


_ROT = {"x": rot_x, "y": rot_y, "z": rot_z}


def elementary_rotation(axis: str, angle: float) -> np.ndarray:
    """Right-handed rotation matrix about a local ``x``, ``y`` or ``z`` axis."""
    try:
        return _ROT[axis.lower()](float(angle))
    except KeyError:
        raise ValueError(f"unknown axis {axis!r}") from None


def platform_rotation(chi) -> np.ndarray:
    """``Rz(chi3) Ry(chi2) Rx(chi1)``."""
    return rot_z(chi[2]) @ rot_y(chi[1]) @ rot_x(chi[0])


def _platform_rotation_partials(chi):
    """R(chi) and its three partial derivatives w.r.t. chi1..chi3."""
    Rx, Ry, Rz = rot_x(chi[0]), rot_y(chi[1]), rot_z(chi[2])
    c1, s1 = math.cos(chi[0]), math.sin(chi[0])
    c2, s2 = math.cos(chi[1]), math.sin(chi[1])
    c3, s3 = math.cos(chi[2]), math.sin(chi[2])
    dRx = np.array([[0.0, 0.0, 0.0], [0.0, -s1, -c1], [0.0, c1, -s1]])
    dRy = np.array([[-s2, 0.0, c2], [0.0, 0.0, 0.0], [-c2, 0.0, -s2]])
    dRz = np.array([[-s3, -c3, 0.0], [c3, -s3, 0.0], [0.0, 0.0, 0.0]])
    RzRy = Rz @ Ry
    R = RzRy @ Rx
    return R, (RzRy @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx)


# --------------------------------------------------------------------------
# geometric model


@dataclass(frozen=True)
class UnitVectorSet:
    u: np.ndarray  # (3, 3), row i is u_i
    w: np.ndarray
    v: np.ndarray


def unit_vectors(p: DesignParameters, theta, chi) -> UnitVectorSet:
    """Joint axes u_i, w_i, v_i expressed in the base frame."""
    lc = _leg_constants(p)
    u = lc.base @ _Z
    w = np.stack([lc.base[i] @ rot_z(theta[i]) @ lc.prox[i] for i in range(3)])
    v = lc.plat @ platform_rotation(chi).T
    return UnitVectorSet(u, w, v)


def closure(p: DesignParameters, theta, chi) -> np.ndarray:
    """Loop-closure residual ``f(theta, chi)``; zero on the geometric model."""
    vs = unit_vectors(p, theta, chi)
    return np.einsum("ij,ij->i", vs.w, vs.v) - _leg_constants(p).cos_alpha2


def closure_expanded(theta, chi) -> np.ndarray:
    """Hand-expanded closure of the default instance, in trigonometric monomials.

    This is the dot-product closure with legs 1 and 2 scaled by 2*sqrt(2).
    """
    x1, x2, x3 = (math.cos(a) for a in chi)
    y1, y2, y3 = (math.sin(a) for a in chi)
    c1, c2, c3 = (math.cos(a) for a in theta)
    s1, s2, s3 = (math.sin(a) for a in theta)
    r2 = _SQRT2
    f1 = (-c1 * x3 * y2 * y1 + s1 * x3 * y2 * y1 + c1 * y3 * y2 * y1 + s1 * y3 * y2 * y1
          - x2 * y1 * r2 + c1 * x3 * x1 + s1 * x3 * x1 + c1 * y3 * x1
          - s1 * y3 * x1 + c1 * x3 * x2 - s1 * x3 * x2
          - c1 * y3 * x2 - s1 * y3 * x2 - y2 * r2)
    f2 = (c2 * x3 * y2 * y1 + s2 * x3 * y2 * y1 + c2 * y3 * y2 * y1 - s2 * y3 * y2 * y1
          - x2 * y1 * r2 + c2 * x3 * x1 - s2 * x3 * x1 - c2 * y3 * x1
          - s2 * y3 * x1 + c2 * x3 * x2 + s2 * x3 * x2
          + c2 * y3 * x2 - s2 * y3 * x2 + y2 * r2)
    f3 = c3 * y1 * y2 * y3 + s3 * x3 * y1 * y2 + c3 * x1 * x3 - s3 * x1 * y3
    return np.array([f1, f2, f3])


EXPANDED_ROW_SCALE = np.array([2 * _SQRT2, 2 * _SQRT2, 1.0])


# --------------------------------------------------------------------------
# first-order kinematics


def closure_partials(p: DesignParameters, theta, chi) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(J1, J2) = (df/dchi, df/dtheta)`` with no singularity checks."""
    lc = _leg_constants(p)
    R, dR = _platform_rotation_partials(chi)
    J1 = np.empty((3, 3))
    J2 = np.zeros((3, 3))
    for i in range(3):
        th = theta[i]
        c, s = math.cos(th), math.sin(th)
        rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        drz = np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
        w = lc.base[i] @ rz @ lc.prox[i]
        dw = lc.base[i] @ drz @ lc.prox[i]
        q = lc.plat[i]
        J2[i, i] = dw @ (R @ q)
        for k in range(3):
            J1[i, k] = w @ (dR[k] @ q)
    return J1, J2


@dataclass(frozen=True)
class KinematicMaps:
    J1: np.ndarray
    J2: np.ndarray
    J: np.ndarray
    T: np.ndarray
    cond1: float
    cond2: float

    @property
    def J_inv(self) -> np.ndarray:
        """Inverse Jacobian ``-J2^-1 J1`` (joint rates from Euler rates)."""
        return -np.linalg.solve(self.J2, self.J1)


def jacobians(p: DesignParameters, theta, chi) -> KinematicMaps:
    """Evaluate J1, J2, J = -J1^-1 J2 and T(chi) at a pose.

    Raises SingularJ1 / SingularJ2 when the corresponding determinant falls
    below 1e-12 in magnitude.
    """
    J1, J2 = closure_partials(p, theta, chi)
    if abs(np.linalg.det(J1)) < SINGULAR_DET:
        raise SingularJ1(f"det J1 ~ 0 at theta={np.asarray(theta)}, chi={np.asarray(chi)}")
    if abs(np.linalg.det(J2)) < SINGULAR_DET:
        raise SingularJ2(f"det J2 ~ 0 at theta={np.asarray(theta)}, chi={np.asarray(chi)}")
    J = -np.linalg.solve(J1, J2)
    return KinematicMaps(J1, J2, J, euler_rate_map(chi), np.linalg.cond(J1), np.linalg.cond(J2))


def _rate_map(a1: float, a2: float) -> np.ndarray:
    c1, s1 = math.cos(a1), math.sin(a1)
    c2, s2 = math.cos(a2), math.sin(a2)
    return np.array([[1.0, 0.0, -s2], [0.0, c1, s1 * c2], [0.0, -s1, c1 * c2]])


def euler_rate_map(chi) -> np.ndarray:
    """T(chi): ZYX Euler rates to platform angular velocity in the LOS frame."""
    return _rate_map(chi[0], chi[1])


def disturbance_rate_map(nu) -> np.ndarray:
    """T'(nu): carrier roll/pitch/yaw rates to carrier angular velocity."""
    return _rate_map(nu[0], nu[1])


def platform_velocity(chi, chi_dot) -> np.ndarray:
    return euler_rate_map(chi) @ np.asarray(chi_dot, dtype=float)


def carrier_disturbance(chi, nu, nu_dot) -> np.ndarray:
    """Carrier angular velocity w.r.t. inertial space, seen in the LOS frame."""
    return platform_rotation(chi) @ (disturbance_rate_map(nu) @ np.asarray(nu_dot, dtype=float))


# --------------------------------------------------------------------------
# tan-half substitution


def wrap_angle(a):
    """Map to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.remainder(a + math.pi, 2 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def tan_half_forward(angles) -> np.ndarray:
    w = wrap_angle(angles)
    if np.any(np.abs(w) >= math.pi - 1e-12):
        raise AngleAtBranchPoint(f"tan-half undefined at +/-pi: {np.asarray(angles)}")
    return np.tan(w / 2)


def tan_half_inverse(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("tan-half inverse needs finite input")
    return 2 * np.arctan(t)


# --------------------------------------------------------------------------
# inverse geometric model


def quadratic_coefficients(p: DesignParameters, chi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-leg ``(a, b, c)`` of ``(1 + T^2) f_i = a T^2 + b T + c``, ``T = tan(theta_i/2)``.

    Fitted exactly from the samples T in {0, 1, -1}.
    """
    f0 = closure(p, np.zeros(3), chi)
    fp = 2.0 * closure(p, np.full(3, math.pi / 2), chi)
    fm = 2.0 * closure(p, np.full(3, -math.pi / 2), chi)
    c = f0
    b = 0.5 * (fp - fm)
    a = 0.5 * (fp + fm) - c
    return a, b, c


def default_reference(p: DesignParameters, chi) -> np.ndarray:
    """Home joint vector carried along the bearing for coaxial designs."""
    if p.coaxial:
        return HOME_THETA - chi[2]
    return HOME_THETA.copy()


def igm(p: DesignParameters, chi, reference=None) -> np.ndarray:
    """Joint vector reaching orientation ``chi``.

    Of the two roots per leg, the one nearest ``reference`` (mod 2 pi) is kept
    and returned unwrapped next to it.
    """
    chi = np.asarray(chi, dtype=float)
    ref = default_reference(p, chi) if reference is None else np.asarray(reference, dtype=float)
    a, b, c = quadratic_coefficients(p, chi)
    theta = np.empty(3)
    for i in range(3):
        if abs(a[i]) < 1e-12:
            if abs(b[i]) < 1e-12:
                raise DegenerateQuadratic(f"leg {i + 1}: a, b ~ 0 at chi={chi}")
            roots = [2 * math.atan(-c[i] / b[i]), math.pi]
        else:
            disc = b[i] * b[i] - 4 * a[i] * c[i]
            if disc < 0:
                raise NoRealSolution(f"leg {i + 1}: discriminant {disc:.3e} < 0 at chi={chi}")
            sq = math.sqrt(disc)
            # cancellation-free pair of roots
            q = -0.5 * (b[i] + math.copysign(sq, b[i]))
            t1 = q / a[i]
            roots = [2 * math.atan(t1)]
            roots.append(2 * math.atan(c[i] / q) if q != 0.0 else 2 * math.atan(-b[i] / (2 * a[i])))
        offsets = [float(wrap_angle(r - ref[i])) for r in roots]
        theta[i] = ref[i] + min(offsets, key=abs)
    return theta


# --------------------------------------------------------------------------
# forward geometric model


def fgm(p: DesignParameters, theta, chi0, tol: float = FGM_TOL, max_iter: int = FGM_MAX_ITER) -> np.ndarray:
    """Newton solve of ``closure(p, theta, chi) = 0`` for ``chi`` from seed ``chi0``."""
    theta = np.asarray(theta, dtype=float)
    chi = np.array(chi0, dtype=float)
    for _ in range(max_iter + 1):
        f = closure(p, theta, chi)
        if np.max(np.abs(f)) < tol:
            return chi
        J1, _ = closure_partials(p, theta, chi)
        if abs(np.linalg.det(J1)) < SINGULAR_DET:
            raise SingularJ1(f"det J1 ~ 0 during FGM at chi={chi}")
        chi = chi - np.linalg.solve(J1, f)
    raise NoConvergence(f"FGM did not reach |f| < {tol:g} in {max_iter} iterations (theta={theta})")
