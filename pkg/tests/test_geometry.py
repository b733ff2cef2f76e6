import numpy as np
import numpy.testing as npt
import pytest

from mechlift import (
    AngleAtPi,
    AngularVelocity,
    CoordState,
    DimensionMismatch,
    DoubleTangent,
    NonFinite,
    NotSkew,
    Rotation,
    devectorize,
    hat,
    kappa,
    numeric_jacobian,
    so3_exp,
    so3_log,
    vectorize,
    vee,
)

PAPER_R0 = np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


def rodrigues(w):
    # independent oracle: explicit Rodrigues formula
    th = np.linalg.norm(w)
    if th == 0:
        return np.eye(3)
    k = np.asarray(w) / th
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(th) * kx + (1 - np.cos(th)) * (kx @ kx)


class TestKappa:
    def test_component_swap(self):
        w = DoubleTangent([1.0], [2.0], [3.0], [4.0])
        out = kappa(w)
        assert (out.x[0], out.y[0], out.xdot[0], out.ydot[0]) == (1.0, 3.0, 2.0, 4.0)

    def test_fixed_point_when_middle_entries_vanish(self):
        w = DoubleTangent([0.7, -0.2], [0, 0], [0, 0], [0, 0])
        out = kappa(w)
        npt.assert_array_equal(out.x, w.x)
        npt.assert_array_equal(out.y, np.zeros(2))
        npt.assert_array_equal(out.xdot, np.zeros(2))

    def test_involution_bit_exact(self, rng):
        for _ in range(100):
            n = rng.integers(1, 6)
            w = DoubleTangent(*rng.normal(size=(4, n)))
            out = kappa(kappa(w))
            for a, b in zip((out.x, out.y, out.xdot, out.ydot),
                            (w.x, w.y, w.xdot, w.ydot)):
                npt.assert_array_equal(a, b)


class TestHatVee:
    def test_first_basis_vector(self):
        npt.assert_array_equal(
            hat([1.0, 0.0, 0.0]),
            np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float),
        )

    def test_zero(self):
        npt.assert_array_equal(hat(np.zeros(3)), np.zeros((3, 3)))

    def test_matches_cross_product(self, rng):
        for _ in range(50):
            w, v = rng.normal(size=3), rng.normal(size=3)
            npt.assert_allclose(hat(w) @ v, np.cross(w, v), atol=1e-14)

    def test_vee_round_trip(self):
        npt.assert_array_equal(vee(hat([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])

    def test_vee_zero(self):
        npt.assert_array_equal(vee(np.zeros((3, 3))), np.zeros(3))

    def test_vee_rejects_symmetric(self):
        with pytest.raises(NotSkew):
            vee(np.diag([1.0, 2.0, 3.0]))

    def test_mutually_inverse_bit_exact(self, rng):
        for _ in range(20):
            w = rng.normal(size=3)
            npt.assert_array_equal(vee(hat(w)), w)


class TestExpLog:
    def test_exp_zero_is_identity(self):
        npt.assert_array_equal(so3_exp(np.zeros(3)).r, np.eye(3))

    def test_exp_reproduces_benchmark_initial_rotation(self):
        w = np.array([0.0, -np.pi / 2, 0.0])
        npt.assert_allclose(so3_exp(w).r, rodrigues(w), atol=1e-15)
        npt.assert_allclose(so3_exp(w).r, PAPER_R0, atol=1e-15)

    def test_exp_orthogonality(self, rng):
        for _ in range(100):
            w = rng.normal(size=3)
            w *= rng.uniform(0, np.pi) / max(np.linalg.norm(w), 1e-12)
            r = so3_exp(w).r
            assert np.abs(r.T @ r - np.eye(3)).max() < 1e-12
            assert abs(np.linalg.det(r) - 1) < 1e-12

    def test_log_identity(self):
        npt.assert_array_equal(so3_log(Rotation(np.eye(3))), np.zeros(3))

    def test_log_benchmark_rotation(self):
        # oracle: extract axis-angle by hand; angle pi/2 about -y
        xi = so3_log(Rotation(PAPER_R0))
        npt.assert_allclose(xi, [0.0, -np.pi / 2, 0.0], atol=1e-12)

    def test_log_rejects_angle_pi(self):
        half_turn = rodrigues(np.array([0.0, 0.0, np.pi]))
        with pytest.raises(AngleAtPi):
            so3_log(Rotation(half_turn))

    def test_log_exp_round_trip(self, rng):
        for _ in range(100):
            w = rng.normal(size=3)
            w *= rng.uniform(1e-3, np.pi - 1e-3) / np.linalg.norm(w)
            npt.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-10)

    def test_small_angle_series_branch(self):
        w = np.array([1e-6, -2e-6, 5e-7])
        npt.assert_allclose(so3_exp(w).r, rodrigues(w), atol=1e-18)
        npt.assert_allclose(so3_log(so3_exp(w)), w, atol=1e-18)


class TestVectorize:
    def test_row_major_order(self):
        m = np.arange(1.0, 10.0).reshape(3, 3)
        npt.assert_array_equal(vectorize(m), np.arange(1.0, 10.0))

    def test_identity(self):
        npt.assert_array_equal(vectorize(np.eye(3)),
                               [1, 0, 0, 0, 1, 0, 0, 0, 1])

    def test_round_trip(self, rng):
        for _ in range(20):
            m = rng.normal(size=(3, 3))
            npt.assert_array_equal(devectorize(vectorize(m)), m)


class TestNumericJacobian:
    def test_identity_map(self, rng):
        x0 = rng.normal(size=4)
        npt.assert_allclose(numeric_jacobian(lambda x: x, x0), np.eye(4),
                            atol=1e-10)

    def test_quadratic_against_analytic(self):
        f = lambda x: np.array([x[0] ** 2, x[0] * x[1]])
        jac = numeric_jacobian(f, np.array([1.0, 1.0]), step=1e-5)
        npt.assert_allclose(jac, [[2.0, 0.0], [1.0, 1.0]], atol=1e-8)

    def test_constant_map(self):
        jac = numeric_jacobian(lambda x: np.array([3.0, -1.0]), np.zeros(3))
        npt.assert_allclose(jac, np.zeros((2, 3)), atol=1e-10)

    def test_quadratic_error_bound(self, rng):
        # invariant: quadratic polynomials are exact up to 10 * step**2
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3))
        f = lambda x: a @ x + (x @ b @ x) * np.ones(3)
        x0 = rng.normal(size=3)
        analytic = a + np.outer(np.ones(3), (b + b.T) @ x0)
        for step in (1e-6, 1e-4):
            jac = numeric_jacobian(f, x0, step=step)
            assert np.abs(jac - analytic).max() < 10 * step**2 + 1e-9

    def test_non_finite_detection(self):
        f = lambda x: np.array([np.inf if x[0] < 0 else x[0]])
        with pytest.raises(NonFinite):
            numeric_jacobian(f, np.zeros(1))


class TestStateTypes:
    def test_coord_state_validation(self):
        with pytest.raises(DimensionMismatch):
            CoordState([1.0, 2.0], [1.0])
        with pytest.raises(NonFinite):
            CoordState([np.nan], [1.0])
        s = CoordState([1.0, 2.0], [3.0, 4.0])
        npt.assert_array_equal(s.stacked(), [1, 2, 3, 4])
        s2 = CoordState.from_stacked([1.0, 2.0, 3.0, 4.0])
        npt.assert_array_equal(s2.x, s.x)

    def test_double_tangent_validation(self):
        with pytest.raises(DimensionMismatch):
            DoubleTangent([1.0], [1.0], [1.0, 2.0], [1.0])

    def test_rotation_accepts_exact(self):
        Rotation(np.eye(3))

    def test_rotation_polar_projection_band(self):
        # defect in (1e-12, 1e-9] gets re-orthonormalized
        noisy = PAPER_R0 + 1e-10 * np.ones((3, 3))
        r = Rotation(noisy).r
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-14

    def test_rotation_rejects_large_defect(self):
        with pytest.raises(ValueError):
            Rotation(PAPER_R0 + 1e-7 * np.ones((3, 3)))

    def test_rotation_rejects_reflection(self):
        with pytest.raises(ValueError):
            Rotation(np.diag([1.0, 1.0, -1.0]))

    def test_angular_velocity_validation(self):
        npt.assert_array_equal(AngularVelocity([1.0, 2.0, 3.0]).w, [1, 2, 3])
        with pytest.raises(DimensionMismatch):
            AngularVelocity([1.0, 2.0])
        with pytest.raises(NonFinite):
            AngularVelocity([np.inf, 0.0, 0.0])
