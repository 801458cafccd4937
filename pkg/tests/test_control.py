import csv
import math

import numpy as np
import pytest
from scipy.linalg import matrix_balance

from cospm.control import (
    TAU_M_DEFAULT,
    TE_DEFAULT,
    ActuatorParameters,
    ControllerCoefficients,
    NoCrossing,
    RationalTransferFunction,
    SpeedController,
    actuator_tf,
    controllable_canonical,
    discretize_zoh,
    disturbance_transfer,
    k0_continuous,
    loop_margins,
    margins,
    open_loop_response,
    write_frequency_csv,
)
from cospm.kinematics import HOME_THETA, DesignParameters, jacobians

C = ControllerCoefficients()


# ---------------------------------------------------------------- transfer functions


def test_transfer_function_validation_and_product():
    with pytest.raises(ValueError):
        RationalTransferFunction([1, 0, 0], [1, 1])
    with pytest.raises(ValueError):
        RationalTransferFunction([1], [0, 0])
    g = RationalTransferFunction([1], [1, 2]) * RationalTransferFunction([3], [1, 0])
    assert g.order == (0, 2)
    assert g(1j) == pytest.approx(3 / ((1j + 2) * 1j))


def test_k0_structure():
    k0 = k0_continuous(C)
    assert k0.order == (5, 6)
    poles = k0.poles()
    assert np.sum(np.abs(poles) < 1e-9) == 2
    zeros = np.sort_complex(k0.zeros())
    for z in (-4644.0, -628.3, -52.97):
        assert np.min(np.abs(zeros - z)) < 1e-6 * abs(z)


def test_actuator_parameter_validation():
    with pytest.raises(ValueError):
        ActuatorParameters(tau_m=0.0)
    with pytest.raises(ValueError):
        ActuatorParameters(mode="viscous")
    with pytest.raises(ValueError):
        ActuatorParameters(friction=(1.0, 1.0))


def test_open_loop_low_frequency_and_delay():
    assert abs(open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, 1e-4)) > 1e10
    w = np.logspace(-1, 4, 50)
    with_delay = open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, w)
    no_delay = open_loop_response(C, TAU_M_DEFAULT, 0.0, w)
    ratio = with_delay / no_delay
    np.testing.assert_allclose(np.abs(ratio), 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.angle(ratio), np.angle(np.exp(-1j * w * TE_DEFAULT)), atol=1e-12)


# ---------------------------------------------------------------- margins


def test_margins_default_loop():
    m = margins(C)
    assert m.gain_margin_db == pytest.approx(14.2, abs=0.5)
    assert m.phase_margin_deg > 0
    L = open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, m.gain_crossover)
    assert abs(abs(L) - 1) < 1e-5
    L = open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, m.phase_crossover)
    assert abs(np.angle(L)) == pytest.approx(math.pi, abs=1e-5)


def test_margins_integrator_toy_loop():
    m = loop_margins(lambda w: 10.0 / (1j * w), require=False)
    assert m.phase_margin_deg == pytest.approx(90.0, abs=1e-9)
    assert m.gain_crossover == pytest.approx(10.0, rel=1e-5)
    assert math.isinf(m.gain_margin_db)
    with pytest.raises(NoCrossing):
        loop_margins(lambda w: 10.0 / (1j * w))


def test_slower_actuator_reduces_phase_margin():
    assert margins(C, tau_m=10 * TAU_M_DEFAULT).phase_margin_deg < margins(C).phase_margin_deg


# ---------------------------------------------------------------- disturbance transfer


def test_disturbance_transfer_identity():
    w = np.logspace(-2, 5, 1000)
    D = disturbance_transfer(C, TAU_M_DEFAULT, TE_DEFAULT, w)
    L = open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, w)
    residual = D * (1 + L) - np.exp(-1j * w * TE_DEFAULT)
    assert np.max(np.abs(residual)) < 1e-12
    np.testing.assert_allclose(np.abs(D) * np.abs(1 + L), 1.0, rtol=1e-12)


def test_disturbance_transfer_values():
    d = abs(disturbance_transfer(C, TAU_M_DEFAULT, TE_DEFAULT, 2 * math.pi * 0.1))
    assert 20 * math.log10(d) == pytest.approx(-90, abs=3)
    assert abs(disturbance_transfer(C, TAU_M_DEFAULT, TE_DEFAULT, 1e7)) == pytest.approx(1.0, abs=1e-3)


def test_frequency_csv(tmp_path):
    w = np.logspace(0, 3, 37)
    path = tmp_path / "bode.csv"
    write_frequency_csv(path, w, open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, w))
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["omega", "magnitude_dB", "phase_deg"]
    assert len(rows) == 38
    assert float(rows[1][0]) == 1.0


# ---------------------------------------------------------------- discretization


def test_canonical_realization_reproduces_tf():
    tf = k0_continuous(C)
    A, B, Cm, D = controllable_canonical(tf)
    for s in (1j, 50j, 3000j):
        g = (Cm @ np.linalg.solve(s * np.eye(A.shape[0]) - A, B) + D)[0, 0]
        assert g == pytest.approx(tf(s), rel=1e-9)


def test_zoh_integrator():
    d = discretize_zoh(RationalTransferFunction([1.0], [1.0, 0.0]), 0.01)
    assert d.A[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert d.B[0, 0] == pytest.approx(0.01, rel=1e-14)


def test_zoh_first_order_pole_and_dc_gain():
    d = discretize_zoh(actuator_tf(TAU_M_DEFAULT), TE_DEFAULT)
    assert d.A[0, 0] == pytest.approx(math.exp(-TE_DEFAULT / TAU_M_DEFAULT), rel=1e-14)
    for k, tau in ((1.0, 1.6e-3), (3.5, 0.2), (-2.0, 5e-4)):
        g = discretize_zoh(RationalTransferFunction([k], [tau, 1.0]), TE_DEFAULT)
        assert abs(g.dc_gain() - k) < 1e-12


def test_zoh_rejects_bad_period():
    with pytest.raises(ValueError):
        discretize_zoh(actuator_tf(), 0.0)


def test_discrete_k0_has_two_poles_at_one():
    d = discretize_zoh(k0_continuous(C), TE_DEFAULT)
    eig = np.linalg.eigvals(d.A)
    assert np.sum(np.abs(eig - 1) < 1e-9) == 2
    assert np.all(np.abs(eig) <= 1 + 1e-12)


def _rk4_step_response(tf, Te, n_samples, h=1e-7):
    """Continuous unit-step response sampled at k Te, RK4 with step h.

    For x' = A x + b (constant input) one RK4 step is exactly
    x <- P x + Q b with the degree-4 Taylor polynomials below.
    """
    A, B, Cm, D = controllable_canonical(tf)
    # balance for conditioning; the similarity cancels in C x
    A_bal, T = matrix_balance(A, permute=False)
    Ti = np.linalg.inv(T)
    A2, B2, C2 = A_bal, Ti @ B, Cm @ T
    n = A2.shape[0]
    hA = h * A2
    I = np.eye(n)
    P = I + hA + hA @ hA / 2 + hA @ hA @ hA / 6 + hA @ hA @ hA @ hA / 24
    Q = h * (I + hA / 2 + hA @ hA / 6 + hA @ hA @ hA / 24)
    steps = int(round(Te / h))
    Pn = np.linalg.matrix_power(P, steps)
    # geometric sum of P^k Q b for k < steps
    acc = np.zeros((n, 1))
    Pk = I
    for _ in range(steps):
        acc += Pk @ Q @ B2
        Pk = Pk @ P
    x = np.zeros((n, 1))
    y = np.empty(n_samples)
    for k in range(n_samples):
        y[k] = (C2 @ x)[0, 0] + D[0, 0]
        x = Pn @ x + acc
    return y


def test_zoh_step_response_matches_rk4():
    tf = k0_continuous(C)
    n = 101  # 0.1 s
    zoh = discretize_zoh(tf, TE_DEFAULT).simulate(np.ones(n))
    ref = _rk4_step_response(tf, TE_DEFAULT, n)
    scale = np.maximum(np.abs(ref), 1e-300)
    assert np.max(np.abs(zoh - ref) / scale) < 1e-6


def _discrete_and_continuous_loops(w):
    k = discretize_zoh(k0_continuous(C), TE_DEFAULT)
    h = discretize_zoh(actuator_tf(TAU_M_DEFAULT), TE_DEFAULT)
    Ld = k.frequency_response(w) * h.frequency_response(w) * np.exp(-1j * w * TE_DEFAULT)
    Lc = open_loop_response(C, TAU_M_DEFAULT, TE_DEFAULT, w)
    return Ld, Lc


def _mismatch(ratio):
    return np.max(np.abs(20 * np.log10(np.abs(ratio)))), np.max(np.abs(np.degrees(np.angle(ratio))))


@pytest.mark.xfail(strict=True, reason="ZOH adds about one sample of lag; 2.3 dB / 56 deg at 0.1*2pi/Te")
def test_discrete_open_loop_matches_continuous_literal():
    w = np.logspace(-2, math.log10(0.1 * 2 * math.pi / TE_DEFAULT), 400)
    Ld, Lc = _discrete_and_continuous_loops(w)
    db, deg = _mismatch(Ld / Lc)
    assert db < 0.5 and deg < 2.0


def test_discrete_open_loop_matches_continuous_with_hold_lag():
    w = np.logspace(-2, math.log10(0.03 * 2 * math.pi / TE_DEFAULT), 400)
    Ld, Lc = _discrete_and_continuous_loops(w)
    db, deg = _mismatch(Ld / (Lc * np.exp(-1j * w * TE_DEFAULT)))
    assert db < 0.5 and deg < 2.0


# ---------------------------------------------------------------- speed controller


def test_speed_controller_zero_and_home_map():
    ctrl = SpeedController.from_coefficients(C, TE_DEFAULT)
    p = DesignParameters()
    out = ctrl.step(np.zeros(3), np.zeros(3), HOME_THETA, p)
    np.testing.assert_array_equal(out, 0.0)
    M = SpeedController.kinematic_map(p, np.zeros(3), HOME_THETA)
    np.testing.assert_allclose(M, jacobians(p, HOME_THETA, np.zeros(3)).J_inv, atol=1e-15)


def test_speed_controller_linearity():
    p = DesignParameters()
    chi = np.array([0.05, 0.2, 0.0])
    from cospm.kinematics import igm

    theta = igm(p, chi)
    rng = np.random.default_rng(7)
    errs = rng.normal(size=(20, 3)) * 1e-3
    a = SpeedController.from_coefficients(C, TE_DEFAULT)
    b = SpeedController.from_coefficients(C, TE_DEFAULT)
    for e in errs:
        np.testing.assert_allclose(b.step(-2.5 * e, chi, theta, p), -2.5 * a.step(e, chi, theta, p), rtol=1e-10, atol=1e-14)
    a.reset()
    assert not a.state.any()


def test_speed_controller_filters_match_siso_simulation():
    k = discretize_zoh(k0_continuous(C), TE_DEFAULT)
    ctrl = SpeedController(k)
    rng = np.random.default_rng(8)
    u = rng.normal(size=(50, 3))
    y = np.array([ctrl.filter(e) for e in u])
    for axis in range(3):
        np.testing.assert_allclose(y[:, axis], k.simulate(u[:, axis]), rtol=1e-12, atol=1e-9)
