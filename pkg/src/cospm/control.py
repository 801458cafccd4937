"""Speed-loop controller, actuator and sensor models.

The open loop of each decoupled axis is ``K0(s) * Hm(s) * exp(-Te s)`` with
``Hm(s) = 1 / (1 + tau_m s)``. The controller runs as three identical SISO
filters followed by the static kinematic map ``J^-1 T^-1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .kinematics import DesignParameters, SingularT, euler_rate_map, jacobians

TE_DEFAULT = 1e-3
TAU_M_DEFAULT = 1.6e-3


class NoCrossing(ArithmeticError):
    """A stability margin is undefined inside the search band."""


@dataclass(frozen=True)
class ControllerCoefficients:
    K0bar: float = 25884.0
    a1: float = 4644.0
    a2: float = 628.3
    a3: float = 52.97
    b1: float = 7356.0
    b2: float = 2.584e7
    c1: float = 3.39e4
    d1: float = 2.943e8
    c2: float = 2899.0
    d2: float = 2.169e7


@dataclass(frozen=True)
class ActuatorParameters:
    """Closed-loop actuator lag and its input disturbance.

    ``friction`` is the step magnitude per axis in ``unit_step`` mode and the
    Coulomb coefficient ``f_k`` in ``coulomb`` mode, both in commanded-rate
    units (rad/s) at the actuator input.
    """

    tau_m: float = TAU_M_DEFAULT
    friction: tuple[float, float, float] = (1.0, 1.0, 1.0)
    mode: str = "unit_step"

    def __post_init__(self):
        if not self.tau_m > 0:
            raise ValueError("tau_m must be positive")
        if self.mode not in ("unit_step", "coulomb"):
            raise ValueError(f"unknown actuator disturbance mode {self.mode!r}")
        object.__setattr__(self, "friction", tuple(float(f) for f in self.friction))
        if len(self.friction) != 3:
            raise ValueError("friction needs three entries")


@dataclass(frozen=True)
class RationalTransferFunction:
    """``num(s) / den(s)``, coefficients in descending powers of s."""

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("denominator is zero")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise ValueError("transfer function is improper")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def __mul__(self, other: "RationalTransferFunction") -> "RationalTransferFunction":
        return RationalTransferFunction(np.polymul(self.num, other.num), np.polymul(self.den, other.den))

    @property
    def order(self) -> tuple[int, int]:
        return self.num.size - 1, self.den.size - 1

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)

    def dc_gain(self) -> float:
        return float(self.num[-1] / self.den[-1])


def k0_continuous(c: ControllerCoefficients = ControllerCoefficients()) -> RationalTransferFunction:
    """Linear controller part ``K0(s)``; five zeros over a double integrator and two quadratic pole pairs."""
    num = c.K0bar * np.polymul([1.0, c.b1, c.b2], np.poly([-c.a1, -c.a2, -c.a3]))
    den = np.polymul([1.0, 0.0, 0.0], np.polymul([1.0, c.c1, c.d1], [1.0, c.c2, c.d2]))
    return RationalTransferFunction(num, den)


def actuator_tf(tau_m: float = TAU_M_DEFAULT) -> RationalTransferFunction:
    return RationalTransferFunction([1.0], [tau_m, 1.0])


def open_loop_response(c: ControllerCoefficients, tau_m: float, Te: float, w):
    """``K0(jw) Hm(jw) exp(-jw Te)``."""
    w = np.asarray(w, dtype=float)
    s = 1j * w
    return k0_continuous(c)(s) / (1.0 + tau_m * s) * np.exp(-s * Te)


def disturbance_transfer(c: ControllerCoefficients, tau_m: float, Te: float, w):
    """Output-disturbance to speed-error transfer ``beta / (1 + K0 Hm beta)`` at ``jw``."""
    w = np.asarray(w, dtype=float)
    return np.exp(-1j * w * Te) / (1.0 + open_loop_response(c, tau_m, Te, w))


# --------------------------------------------------------------------------
# margins


@dataclass(frozen=True)
class StabilityMargins:
    gain_margin_db: float
    phase_margin_deg: float
    gain_crossover: float  # rad/s, |L| = 1
    phase_crossover: float  # rad/s, arg L = -180 deg (mod 360)


def _bisect(fun, lo, hi, rtol):
    flo = fun(lo)
    while hi - lo > rtol * lo:
        mid = math.sqrt(lo * hi)
        fm = fun(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return math.sqrt(lo * hi)


def loop_margins(
    loop: Callable[[np.ndarray], np.ndarray],
    band: tuple[float, float] = (1e-2, 1e5),
    n_seeds: int = 2000,
    rtol: float = 1e-6,
    require: bool = True,
) -> StabilityMargins:
    """Gain and phase margins of a SISO loop given as ``w -> L(jw)``.

    Crossings are bracketed on ``n_seeds`` log-spaced frequencies and refined
    by bisection in log-frequency. When several crossings exist the smallest
    margin is kept. Missing crossings raise NoCrossing if ``require``,
    otherwise the margin is reported as infinite.
    """
    w = np.logspace(math.log10(band[0]), math.log10(band[1]), n_seeds)
    L = np.asarray(loop(w), dtype=complex)
    logmag = np.log(np.abs(L))
    phase = np.unwrap(np.angle(L))

    def local_phase(i):
        # phase continued from seed i, valid inside [w[i], w[i+1]]
        return lambda x: phase[i] + np.angle(complex(loop(np.array([x]))[0]) / L[i])

    pm, wgc = math.inf, math.nan
    for i in np.nonzero(np.diff(np.sign(logmag)) != 0)[0]:
        wc = _bisect(lambda x: math.log(abs(complex(loop(np.array([x]))[0]))), w[i], w[i + 1], rtol)
        ph = math.degrees(local_phase(i)(wc))
        m = (ph + 180.0 + 180.0) % 360.0 - 180.0
        if abs(m) < abs(pm):
            pm, wgc = m, wc

    gm, wpc = math.inf, math.nan
    k_lo = np.floor((phase + math.pi) / (2 * math.pi))
    for i in np.nonzero(np.diff(k_lo) != 0)[0]:
        # target -pi + 2 pi k between the two seeds
        k = max(k_lo[i], k_lo[i + 1])
        target = -math.pi + 2 * math.pi * k
        f = local_phase(i)
        wc = _bisect(lambda x: f(x) - target, w[i], w[i + 1], rtol)
        g = -20.0 * math.log10(abs(complex(loop(np.array([wc]))[0])))
        if abs(g) < abs(gm):
            gm, wpc = g, wc

    if require and (math.isnan(wgc) or math.isnan(wpc)):
        which = "gain crossover" if math.isnan(wgc) else "phase crossover"
        raise NoCrossing(f"no {which} in band {band}")
    return StabilityMargins(gm, pm, wgc, wpc)


def margins(
    c: ControllerCoefficients = ControllerCoefficients(),
    tau_m: float = TAU_M_DEFAULT,
    Te: float = TE_DEFAULT,
    band: tuple[float, float] = (1e-2, 1e5),
) -> StabilityMargins:
    """Margins of the continuous speed open loop."""
    return loop_margins(lambda w: open_loop_response(c, tau_m, Te, w), band=band)


def write_frequency_csv(path, w, response) -> None:
    """Write ``omega, magnitude_dB, phase_deg`` rows (unwrapped phase)."""
    w = np.asarray(w, dtype=float)
    response = np.asarray(response, dtype=complex)
    mag = 20.0 * np.log10(np.abs(response))
    ph = np.degrees(np.unwrap(np.angle(response)))
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["omega", "magnitude_dB", "phase_deg"])
        for row in zip(w, mag, ph):
            out.writerow([repr(float(x)) for x in row])


# --------------------------------------------------------------------------
# discretization


def controllable_canonical(tf: RationalTransferFunction):
    """Continuous ``(A, B, C, D)`` in controllable canonical form."""
    den = tf.den / tf.den[0]
    num = tf.num / tf.den[0]
    n = den.size - 1
    num = np.concatenate([np.zeros(n + 1 - num.size), num])
    D = num[0]
    # strictly proper remainder
    rem = num[1:] - D * den[1:]
    A = np.zeros((n, n))
    if n:
        A[0, :] = -den[1:]
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    if n:
        B[0, 0] = 1.0
    C = rem.reshape(1, n)
    return A, B, C, np.array([[D]])


@dataclass
class DiscreteStateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            raise ValueError("inconsistent state-space dimensions")
        if not self.dt > 0:
            raise ValueError("sample period must be positive")

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def frequency_response(self, w):
        """Transfer evaluated on the unit circle at ``z = exp(j w dt)``."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        n = self.order
        out = np.empty(w.shape, dtype=complex)
        I = np.eye(n)
        for k, z in enumerate(np.exp(1j * w * self.dt)):
            out[k] = (self.C @ np.linalg.solve(z * I - self.A, self.B) + self.D)[0, 0]
        return out

    def simulate(self, u, x0=None) -> np.ndarray:
        """SISO response to the input sequence ``u``."""
        x = np.zeros(self.order) if x0 is None else np.array(x0, dtype=float)
        c, b, d = self.C[0], self.B[:, 0], self.D[0, 0]
        y = np.empty(len(u))
        for k, uk in enumerate(u):
            y[k] = c @ x + d * uk
            x = self.A @ x + b * uk
        return y

    def dc_gain(self) -> float:
        n = self.order
        return float((self.C @ np.linalg.solve(np.eye(n) - self.A, self.B) + self.D)[0, 0])


def discretize_zoh(tf: RationalTransferFunction, Te: float) -> DiscreteStateSpace:
    """Exact zero-order-hold equivalent via the augmented matrix exponential."""
    if not Te > 0:
        raise ValueError("sample period must be positive")
    A, B, C, D = controllable_canonical(tf)
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(M * Te)
    return DiscreteStateSpace(E[:n, :n], E[:n, n:], C, D, Te)


# --------------------------------------------------------------------------
# controller


@dataclass
class SpeedController:
    """Discrete ``K_v = J^-1 T^-1 K0`` acting on the speed error.

    Three identical K0 filters (one per LOS axis) share the same discrete
    realization; their states are the rows of ``state``.
    """

    k0: DiscreteStateSpace
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = np.zeros((3, self.k0.order))

    @classmethod
    def from_coefficients(cls, c: ControllerCoefficients = ControllerCoefficients(), Te: float = TE_DEFAULT):
        return cls(discretize_zoh(k0_continuous(c), Te))

    def reset(self) -> None:
        self.state[:] = 0.0

    def filter(self, eps_omega) -> np.ndarray:
        """Advance the three K0 filters by one sample and return their outputs."""
        e = np.asarray(eps_omega, dtype=float)
        y = self.state @ self.k0.C[0] + self.k0.D[0, 0] * e
        self.state = self.state @ self.k0.A.T + np.outer(e, self.k0.B[:, 0])
        return y

    @staticmethod
    def kinematic_map(p: DesignParameters, chi_hat, theta_hat) -> np.ndarray:
        """``J^-1 T^-1`` at the estimated pose."""
        T = euler_rate_map(chi_hat)
        if abs(math.cos(chi_hat[1])) < 1e-12:
            raise SingularT(f"T(chi) singular at elevation {chi_hat[1]}")
        maps = jacobians(p, theta_hat, chi_hat)
        return maps.J_inv @ np.linalg.inv(T)

    def step(self, eps_omega, chi_hat, theta_hat, p: DesignParameters = DesignParameters()) -> np.ndarray:
        """Commanded joint rates for one sample."""
        return self.kinematic_map(p, chi_hat, theta_hat) @ self.filter(eps_omega)
