import numpy as np
import numpy.testing as npt
import pytest

from conftest import PARAMS
from mechlift import (
    LinearMechanicalSystem,
    MechanicalSystem,
    WrongDimensions,
    check_general,
    check_planar,
    covariant_derivative,
    curvature_tensor,
    lie_bracket,
    second_covariant_derivative,
    so3_exp,
    vectorize,
)

M0, MD = PARAMS["m0"], PARAMS["md"]


def pendulum_fields(pendulum):
    sys = pendulum.system
    g = lambda x: np.asarray(sys.g(x))[:, 0]
    e = lambda x: np.asarray(sys.e(x))
    ad = lambda x: lie_bracket(e, g, x)
    return sys, g, e, ad


def flat(n, gamma=None, e=None, g=None):
    return MechanicalSystem(
        n, 1,
        gamma=gamma or (lambda x: np.zeros((n, n, n))),
        e=e or (lambda x: np.zeros(n)),
        g=g or (lambda x: np.ones((n, 1))),
    )


class TestLieBracket:
    def test_constant_fields(self, rng):
        c1, c2 = rng.normal(size=2), rng.normal(size=2)
        out = lie_bracket(lambda x: c1, lambda x: c2, rng.normal(size=2))
        assert np.abs(out).max() < 1e-9

    def test_pendulum_drift_bracket_value(self, pendulum):
        # arithmetic oracle: (m0/md^2) cos(x1) in both slots, opposite signs
        _, g, e, ad = pendulum_fields(pendulum)
        expected = M0 / MD**2
        out = ad(np.zeros(2))
        npt.assert_allclose(out, [expected, -expected], rtol=1e-6)
        npt.assert_allclose(expected, 15960.0166, rtol=1e-7)

    def test_antisymmetry_on_polynomial_fields(self, rng):
        a, b = rng.normal(size=(2, 3, 3))
        f1 = lambda x: a @ x + x[0] * x[1] * np.ones(3)
        f2 = lambda x: b @ x + np.array([x[2] ** 2, x[0], x[1] * x[2]])
        for _ in range(10):
            x = rng.normal(size=3)
            lhs = lie_bracket(f1, f2, x)
            rhs = lie_bracket(f2, f1, x)
            assert np.abs(lhs + rhs).max() < 1e-9 * (1 + np.abs(lhs).max())

    def test_bilinearity(self, rng):
        a, b = rng.normal(size=(2, 2, 2))
        f1 = lambda x: a @ x
        f2 = lambda x: b @ x + x[0] * x[1] * np.ones(2)
        x = rng.normal(size=2)
        combo = lambda x_: 2.0 * f1(x_) + 0.5 * f2(x_)
        g_ = lambda x_: np.array([np.sin(x_[0]), x_[1]])
        lhs = lie_bracket(combo, g_, x)
        rhs = 2.0 * lie_bracket(f1, g_, x) + 0.5 * lie_bracket(f2, g_, x)
        assert np.abs(lhs - rhs).max() < 1e-7 * (1 + np.abs(rhs).max())


class TestCovariantDerivative:
    def test_pendulum_control_self_derivative_vanishes(self, pendulum):
        sys, g, _, _ = pendulum_fields(pendulum)
        out = covariant_derivative(sys, g, g, np.array([0.3, -0.5]))
        npt.assert_array_equal(out, np.zeros(2))

    def test_flat_directional_derivative(self, rng):
        a = rng.normal(size=(3, 3))
        c = rng.normal(size=3)
        sys = flat(3)
        out = covariant_derivative(sys, lambda x: c, lambda x: a @ x,
                                   rng.normal(size=3))
        npt.assert_allclose(out, a @ c, atol=1e-8)

    def test_torsion_free(self, rng):
        # both sides computed independently; symmetric connection
        def gamma(x):
            G = np.zeros((2, 2, 2))
            G[0, 0, 1] = G[0, 1, 0] = np.sin(x[0])
            G[1, 1, 1] = x[0] * x[1]
            return G

        sys = flat(2, gamma=gamma)
        f1 = lambda x: np.array([np.cos(x[1]), x[0] ** 2])
        f2 = lambda x: np.array([x[1], np.sin(x[0])])
        for _ in range(10):
            x = rng.normal(size=2)
            lhs = (covariant_derivative(sys, f1, f2, x)
                   - covariant_derivative(sys, f2, f1, x))
            rhs = lie_bracket(f1, f2, x)
            assert np.abs(lhs - rhs).max() < 1e-7


class TestSecondCovariantDerivative:
    def test_pendulum_ordering_commutator_vanishes(self, pendulum):
        sys, g, _, ad = pendulum_fields(pendulum)
        for x1 in (0.0, 0.5, -0.5, 1.0, -1.0):
            x = np.array([x1, 0.0])
            d1 = second_covariant_derivative(sys, g, ad, ad, x)
            d2 = second_covariant_derivative(sys, ad, g, ad, x)
            scale = max(np.abs(d1).max(), np.abs(d2).max(), 1.0)
            assert np.abs(d1 - d2).max() < 1e-4 * scale

    def test_flat_constant_field(self, rng):
        sys = flat(2)
        c = rng.normal(size=2)
        out = second_covariant_derivative(sys, lambda x: c, lambda x: c,
                                          lambda x: np.array([1.0, -2.0]),
                                          rng.normal(size=2))
        assert np.abs(out).max() < 1e-9

    def test_flat_matches_nested_oracle(self, rng):
        # oracle: direct nested differencing of D(DZ . Y) . X - DZ . (DY . X)
        sys = flat(2)
        a = rng.normal(size=(2, 2))
        x_f = lambda p: np.array([np.sin(p[1]), p[0]])
        y_f = lambda p: a @ p
        z_f = lambda p: np.array([p[0] ** 2 * p[1], np.cos(p[0])])

        def nested_oracle(p, s=1e-5):
            def dz_dot_y(q):
                dz = np.column_stack([
                    (z_f(q + s * e) - z_f(q - s * e)) / (2 * s) for e in np.eye(2)
                ])
                return dz @ y_f(q)

            xv = x_f(p)
            first = (dz_dot_y(p + s * xv) - dz_dot_y(p - s * xv)) / (2 * s)
            dy = np.column_stack([
                (y_f(p + s * e) - y_f(p - s * e)) / (2 * s) for e in np.eye(2)
            ])
            dz = np.column_stack([
                (z_f(p + s * e) - z_f(p - s * e)) / (2 * s) for e in np.eye(2)
            ])
            return first - dz @ (dy @ xv)

        for _ in range(5):
            p = rng.normal(size=2)
            mine = second_covariant_derivative(sys, x_f, y_f, z_f, p)
            npt.assert_allclose(mine, nested_oracle(p), atol=1e-5)


class TestCurvature:
    def test_flat_connection(self, rng):
        sys = flat(3)
        assert np.abs(curvature_tensor(sys, rng.normal(size=3))).max() == 0.0

    def test_last_pair_antisymmetry(self, rng):
        def gamma(x):
            G = np.zeros((2, 2, 2))
            G[0, 1, 1] = np.sin(x[0]) * x[1]
            G[1, 0, 1] = G[1, 1, 0] = np.cos(x[0] * x[1])
            G[0, 0, 0] = x[0] ** 2
            return G

        sys = flat(2, gamma=gamma)
        for _ in range(5):
            r = curvature_tensor(sys, rng.normal(size=2))
            assert np.abs(r + r.transpose(0, 1, 3, 2)).max() < 1e-9 * (1 + np.abs(r).max())

    def test_round_sphere_sectional_component(self):
        # symbolic-formula oracle for the unit round sphere:
        # R^1_212 = sin(x1)^2
        def gamma(x):
            G = np.zeros((2, 2, 2))
            G[0, 1, 1] = -np.sin(x[0]) * np.cos(x[0])
            G[1, 0, 1] = G[1, 1, 0] = 1.0 / np.tan(x[0])
            return G

        sys = MechanicalSystem(2, 1, gamma=gamma, e=lambda x: np.zeros(2),
                               g=lambda x: np.ones((2, 1)))
        r = curvature_tensor(sys, np.array([np.pi / 4, 0.3]))
        npt.assert_allclose(r[0, 1, 0, 1], 0.5, atol=1e-5)


class TestCheckPlanar:
    def test_pendulum_grid_passes(self, pendulum):
        samples = [np.array([x1, 0.0]) for x1 in np.linspace(-1.3, 1.3, 21)]
        report = check_planar(pendulum.system, samples)
        assert report.passed
        for name in ("MD1", "MD2", "MD3"):
            assert report[name].verdict == "pass"

    def test_degenerate_point_fails_with_witness(self, pendulum):
        samples = [np.array([x1, 0.0])
                   for x1 in np.linspace(-np.pi / 2, np.pi / 2, 21)]
        report = check_planar(pendulum.system, samples)
        assert not report.passed
        md1 = report["MD1"]
        assert md1.verdict == "fail"
        assert min(abs(abs(md1.witness[0]) - np.pi / 2), 0.1) < 1e-9

    def test_double_integrator_passes(self):
        lms = LinearMechanicalSystem(A=np.array([[0.0, 1.0], [0.0, 0.0]]),
                                     B=np.array([[0.0], [1.0]]))
        samples = [np.array([x, 0.3]) for x in np.linspace(-1, 1, 11)]
        report = check_planar(lms.as_mechanical_system(), samples)
        assert report.passed

    def test_wrong_dimensions(self, rigid_body):
        with pytest.raises(WrongDimensions):
            check_planar(rigid_body.exp_chart_system(), [np.zeros(3)])


class TestCheckGeneral:
    def test_pendulum_passes(self, pendulum):
        samples = [np.array([x1, 0.0]) for x1 in np.linspace(-1.3, 1.3, 21)]
        report = check_general(pendulum.system, samples)
        assert report.passed

    def test_rigid_body_exp_chart_passes(self, rigid_body, rng):
        samples = []
        for _ in range(13):
            xi = rng.normal(size=3)
            xi *= rng.uniform(0.05, np.pi - 0.15) / np.linalg.norm(xi)
            samples.append(xi)
        report = check_general(rigid_body.exp_chart_system(), samples)
        assert report.passed

    def test_vector_chart_drift_condition_trivial(self, rigid_body, rng):
        # zero drift makes the second-derivative condition hold identically
        sys9 = rigid_body.vector_chart_system()
        samples = [vectorize(so3_exp(rng.normal(size=3) * 0.6).r)
                   for _ in range(3)]
        report = check_general(sys9, samples)
        ml5 = report["ML5"]
        assert ml5.verdict == "pass"
        assert ml5.defect == 0.0

    def test_linear_system_passes(self, rng):
        lms = LinearMechanicalSystem(
            A=np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -2.0, -3.0]]),
            B=np.array([[0.0], [0.0], [1.0]]),
        )
        samples = [rng.normal(size=3) for _ in range(8)]
        report = check_general(lms.as_mechanical_system(), samples)
        assert report.passed

    def test_rank_change_detected(self, pendulum):
        samples = [np.array([x1, 0.0])
                   for x1 in (-1.0, 0.0, 1.0, np.pi / 2)]
        report = check_general(pendulum.system, samples)
        assert report["ML1"].verdict == "fail"
        assert report["ML1"].witness is not None
