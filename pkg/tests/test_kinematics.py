import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DEG, random_workspace_chi
from cospm.checks import finite_difference_partials
from cospm.kinematics import (
    EXPANDED_ROW_SCALE,
    HOME_THETA,
    AngleAtBranchPoint,
    DesignParameters,
    NoConvergence,
    NoRealSolution,
    SingularJ1,
    SingularJ2,
    carrier_disturbance,
    closure,
    closure_expanded,
    closure_partials,
    disturbance_rate_map,
    elementary_rotation,
    euler_rate_map,
    fgm,
    igm,
    jacobians,
    platform_rotation,
    platform_velocity,
    quadratic_coefficients,
    tan_half_forward,
    tan_half_inverse,
    unit_vectors,
    wrap_angle,
)

angle = st.floats(-math.pi, math.pi, allow_nan=False)
vec3 = st.tuples(angle, angle, angle).map(np.array)


# ---------------------------------------------------------------- design


def test_default_design_values():
    p = DesignParameters()
    assert p.alpha1 == (math.pi / 4, math.pi / 4, math.pi / 2)
    assert p.alpha2 == (math.pi / 2,) * 3
    assert p.eta == (math.pi / 4, -math.pi / 4, 0.0)
    assert p.beta1 == 0.0 and p.beta2 == math.pi / 2
    assert p.coaxial


@pytest.mark.parametrize(
    "kwargs",
    [
        {"alpha1": (0.0, 1.0, 1.0)},
        {"alpha2": (1.0, math.pi, 1.0)},
        {"eta": (1.0, 2.0)},
        {"beta2": math.nan},
    ],
)
def test_design_validation(kwargs):
    with pytest.raises(ValueError):
        DesignParameters(**kwargs)


# ---------------------------------------------------------------- rotations


def test_elementary_rotation_cases():
    assert np.array_equal(elementary_rotation("x", 0.0), np.eye(3))
    np.testing.assert_allclose(elementary_rotation("z", math.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    a = 0.37
    c, s = math.cos(a), math.sin(a)
    np.testing.assert_array_equal(elementary_rotation("y", a), [[c, 0, s], [0, 1, 0], [-s, 0, c]])
    with pytest.raises(ValueError):
        elementary_rotation("w", 0.1)


@given(st.sampled_from("xyz"), angle)
def test_elementary_rotation_proper_orthogonal(axis, a):
    R = elementary_rotation(axis, a)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-14)
    assert abs(np.linalg.det(R) - 1) < 1e-14


def test_platform_rotation_order():
    chi = np.array([0.1, -0.2, 0.3])
    expected = elementary_rotation("z", 0.3) @ elementary_rotation("y", -0.2) @ elementary_rotation("x", 0.1)
    np.testing.assert_allclose(platform_rotation(chi), expected, atol=1e-15)


# ---------------------------------------------------------------- unit vectors and closure


@settings(max_examples=200)
@given(vec3, vec3)
def test_unit_vector_invariants(theta, chi):
    p = DesignParameters()
    vs = unit_vectors(p, theta, chi)
    for arr in (vs.u, vs.w, vs.v):
        np.testing.assert_allclose(np.linalg.norm(arr, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(vs.u, np.tile([0.0, 0.0, -1.0], (3, 1)), atol=1e-15)
    np.testing.assert_allclose(np.einsum("ij,ij->i", vs.u, vs.w), np.cos(p.alpha1), atol=1e-12)


def test_home_closure(design):
    vs = unit_vectors(design, HOME_THETA, np.zeros(3))
    np.testing.assert_allclose(np.einsum("ij,ij->i", vs.w, vs.v), 0.0, atol=1e-15)
    assert np.max(np.abs(closure(design, HOME_THETA, np.zeros(3)))) < 1e-12


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
def test_pure_bearing_pose_closes(design, eps):
    assert np.max(np.abs(closure(design, HOME_THETA - eps, [0.0, 0.0, eps]))) < 1e-12


@settings(max_examples=300)
@given(vec3, vec3)
def test_expanded_closure_matches_dot_product(theta, chi):
    f = closure(DesignParameters(), theta, chi)
    np.testing.assert_allclose(closure_expanded(theta, chi), EXPANDED_ROW_SCALE * f, atol=1e-12)


@settings(max_examples=300)
@given(vec3, vec3, angle)
def test_coaxiality(theta, chi, eps):
    p = DesignParameters()
    lhs = closure(p, theta + eps, chi)
    rhs = closure(p, theta, chi + np.array([0.0, 0.0, eps]))
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_coaxiality_breaks_without_coaxial_platform():
    p = DesignParameters(beta1=0.3)
    theta, chi = HOME_THETA, np.array([0.1, 0.2, 0.0])
    diff = closure(p, theta + 0.4, chi) - closure(p, theta, chi + [0, 0, 0.4])
    assert np.max(np.abs(diff)) > 1e-3


# ---------------------------------------------------------------- jacobians


def test_jacobians_against_finite_differences(design, rng):
    worst = 0.0
    for chi in random_workspace_chi(rng, 100):
        theta = igm(design, chi)
        J1, J2 = closure_partials(design, theta, chi)
        F1, F2 = finite_difference_partials(design, theta, chi, h=1e-6)
        worst = max(worst, np.abs(J1 - F1).max(), np.abs(J2 - F2).max())
    assert worst < 1e-5


def test_home_jacobians(design):
    maps = jacobians(design, HOME_THETA, np.zeros(3))
    assert abs(np.linalg.det(maps.J)) > 1e-6
    np.testing.assert_allclose(maps.J @ maps.J_inv, np.eye(3), atol=1e-9)
    np.testing.assert_array_equal(maps.T, np.eye(3))


def test_jacobian_inverse_identity(design, rng):
    for chi in random_workspace_chi(rng, 50):
        maps = jacobians(design, igm(design, chi), chi)
        np.testing.assert_allclose(maps.J @ maps.J_inv, np.eye(3), atol=1e-9)


def test_row_scaling_leaves_J_unchanged(design):
    chi = np.array([0.05, 0.3, 0.0])
    theta = igm(design, chi)
    J1, J2 = closure_partials(design, theta, chi)
    S = np.diag([2.0, -0.5, 7.0])
    J = -np.linalg.solve(J1, J2)
    np.testing.assert_allclose(-np.linalg.solve(S @ J1, S @ J2), J, atol=1e-12)


def test_all_joints_equal_rate_is_pure_bearing(design, rng):
    # J 1 = -e3 wherever J exists
    for chi in random_workspace_chi(rng, 20):
        chi[2] = rng.uniform(-3, 3)
        maps = jacobians(design, igm(design, chi), chi)
        np.testing.assert_allclose(maps.J @ np.ones(3), [0, 0, -1], atol=1e-10)


def test_singular_j2_raised_at_folded_leg(design):
    # f_1 = A cos(theta_1) + B sin(theta_1) + C; its theta_1-derivative vanishes at atan2(B, A)
    chi = np.array([0.0, 0.2, 0.0])
    theta = igm(design, chi)

    def f1(t):
        return closure(design, np.array([t, theta[1], theta[2]]), chi)[0]

    C = 0.5 * (f1(0.0) + f1(math.pi))
    A, B = f1(0.0) - C, f1(math.pi / 2) - C
    folded = np.array([math.atan2(B, A), theta[1], theta[2]])
    with pytest.raises(SingularJ2):
        jacobians(design, folded, chi)


def test_singular_j1_raised():
    # all platform axes parallel: beta2 = 0 puts every v_i on the z axis
    p = DesignParameters(beta2=0.0)
    with pytest.raises(SingularJ1):
        jacobians(p, HOME_THETA, np.zeros(3))


# ---------------------------------------------------------------- rate maps


def test_euler_rate_map_basics(rng):
    np.testing.assert_array_equal(euler_rate_map(np.zeros(3)), np.eye(3))
    for chi in rng.uniform(-math.pi, math.pi, (100, 3)):
        assert abs(np.linalg.det(euler_rate_map(chi)) - math.cos(chi[1])) < 1e-12
    assert np.linalg.matrix_rank(euler_rate_map([0.3, math.pi / 2, 0.0])) == 2


def test_disturbance_rate_map_equals_euler_map(rng):
    np.testing.assert_array_equal(disturbance_rate_map(np.zeros(3)), np.eye(3))
    for nu in rng.uniform(-math.pi, math.pi, (50, 3)):
        np.testing.assert_array_equal(disturbance_rate_map(nu), euler_rate_map(nu))
    assert np.linalg.matrix_rank(disturbance_rate_map([0.2, -math.pi / 2, 0.0])) == 2


def test_platform_velocity(rng):
    np.testing.assert_array_equal(platform_velocity(np.zeros(3), [1, 0, 0]), [1, 0, 0])
    np.testing.assert_array_equal(platform_velocity([0.3, 0.2, 0.1], np.zeros(3)), 0.0)
    chi, rate = rng.normal(size=3), rng.normal(size=3)
    T = euler_rate_map(chi)
    expected = [sum(T[i, k] * rate[k] for k in range(3)) for i in range(3)]
    np.testing.assert_allclose(platform_velocity(chi, rate), expected, atol=1e-15)


def test_carrier_disturbance(rng):
    nu_dot = np.array([0.3, -0.1, 0.2])
    np.testing.assert_array_equal(carrier_disturbance(np.zeros(3), np.zeros(3), nu_dot), nu_dot)
    np.testing.assert_array_equal(carrier_disturbance([0.1, 0.2, 0.3], [0.3, 0.1, 0.0], np.zeros(3)), 0.0)
    for _ in range(20):
        chi = rng.uniform(-1, 1, 3)
        out = carrier_disturbance(chi, np.zeros(3), nu_dot)
        assert abs(np.linalg.norm(out) - np.linalg.norm(nu_dot)) < 1e-14


# ---------------------------------------------------------------- tan-half


def test_tan_half_values():
    assert tan_half_forward([0.0, 0.0, 0.0]).tolist() == [0.0, 0.0, 0.0]
    np.testing.assert_allclose(tan_half_forward([math.pi / 2] * 3), 1.0, rtol=1e-15)
    with pytest.raises(AngleAtBranchPoint):
        tan_half_forward([0.0, math.pi, 0.0])
    with pytest.raises(AngleAtBranchPoint):
        tan_half_forward([-math.pi, 0.0, 0.0])
    with pytest.raises(ValueError):
        tan_half_inverse([np.inf, 0, 0])


def test_tan_half_roundtrip(rng):
    a = rng.uniform(-math.pi + 0.01, math.pi - 0.01, (1000, 3))
    np.testing.assert_allclose(tan_half_inverse(tan_half_forward(a)), a, atol=1e-14, rtol=0)


def test_wrap_angle_range():
    a = np.array([math.pi, -math.pi, 3 * math.pi, 0.5 - 4 * math.pi])
    w = wrap_angle(a)
    assert np.all((w > -math.pi) & (w <= math.pi))
    np.testing.assert_allclose(w, [math.pi, math.pi, math.pi, 0.5], atol=1e-12)


# ---------------------------------------------------------------- IGM / FGM


def test_quadratic_coefficients_reproduce_closure(design, rng):
    chi = np.array([0.1, -0.3, 0.2])
    a, b, c = quadratic_coefficients(design, chi)
    for T in rng.uniform(-3, 3, 10):
        theta = np.full(3, 2 * math.atan(T))
        np.testing.assert_allclose((1 + T * T) * closure(design, theta, chi), a * T * T + b * T + c, atol=1e-12)


def test_igm_home_and_bearing(design):
    np.testing.assert_allclose(igm(design, np.zeros(3)), HOME_THETA, atol=1e-14)
    for eps in (0.1, -0.7, 2.0):
        np.testing.assert_allclose(igm(design, [0, 0, eps]), HOME_THETA - eps, atol=1e-12)


def test_igm_residual_over_workspace(design, rng):
    for chi in random_workspace_chi(rng, 500):
        assert np.max(np.abs(closure(design, igm(design, chi), chi))) < 1e-10


def test_igm_reference_selects_other_branch(design):
    chi = np.array([0.05, 0.2, 0.0])
    near = igm(design, chi)
    far = igm(design, chi, reference=near + math.pi)
    assert np.max(np.abs(closure(design, far, chi))) < 1e-10
    assert np.all(np.abs(wrap_angle(far - near)) > 1e-3)


def test_igm_unreachable(design):
    with pytest.raises(NoRealSolution):
        igm(design, [60 * DEG, 60 * DEG, 0.0])


def test_fgm_cases(design):
    np.testing.assert_array_equal(fgm(design, HOME_THETA, np.zeros(3)), np.zeros(3))
    np.testing.assert_allclose(fgm(design, HOME_THETA - 0.3, np.zeros(3)), [0, 0, 0.3], atol=1e-12)


def test_fgm_igm_roundtrip(design, rng):
    for chi in random_workspace_chi(rng, 500):
        seed = chi + rng.uniform(-0.02, 0.02, 3)
        np.testing.assert_allclose(fgm(design, igm(design, chi), seed), chi, atol=1e-9)


def test_fgm_iteration_budget(design):
    with pytest.raises(NoConvergence):
        fgm(design, igm(design, [0.1, 0.5, 0.0]), np.zeros(3), max_iter=1)


def test_determinant_bearing_invariance(design, rng):
    for chi in random_workspace_chi(rng, 30):
        shifted = chi + [0, 0, rng.uniform(-3, 3)]
        a = jacobians(design, igm(design, chi), chi)
        b = jacobians(design, igm(design, shifted), shifted)
        assert abs(abs(np.linalg.det(a.J1)) - abs(np.linalg.det(b.J1))) < 1e-9
        assert abs(abs(np.linalg.det(a.J2)) - abs(np.linalg.det(b.J2))) < 1e-9
