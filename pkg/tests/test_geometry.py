import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from natmap import geometry as geo
from conftest import random_ball_point, random_sphere_point
import _oracles as oracles

O3 = geo.HPoint.origin(3)


class TestDistance:
    def test_identity_case(self):
        assert geo.distance(O3, O3) == 0.0

    def test_radial_closed_form_vs_integration_oracle(self):
        # frozen from the oracle: log((1+r)/(1-r)) at r = 0.5
        x = geo.HPoint(np.array([0.5, 0.0, 0.0]))
        d = geo.distance(O3, x)
        assert d == pytest.approx(1.0986122886681098, abs=1e-14)
        assert d == pytest.approx(oracles.radial_length_numeric(0.5), abs=1e-12)

    def test_isometry_invariance(self, rng):
        for _ in range(10):
            g = geo.random_isometry(rng, 3)
            x, y = random_ball_point(rng), random_ball_point(rng)
            assert geo.distance(g.apply(x), g.apply(y)) == pytest.approx(
                geo.distance(x, y), abs=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(geo.DimensionMismatchError):
            geo.distance(O3, geo.HPoint.origin(4))

    def test_triangle_inequality_and_symmetry(self, rng):
        for _ in range(20):
            x, y, z = (random_ball_point(rng, max_radius=2.0) for _ in range(3))
            dxy = geo.distance(x, y)
            assert dxy == pytest.approx(geo.distance(y, x), abs=1e-13)
            assert dxy <= geo.distance(x, z) + geo.distance(z, y) + 1e-12


class TestBusemann:
    def test_normalized_at_origin(self, rng):
        # zero up to the rounding of the unit normalization itself
        for _ in range(5):
            assert abs(geo.busemann(O3, random_sphere_point(rng))) < 1e-15

    def test_on_ray_toward_equals_minus_distance(self):
        th = geo.BoundaryPoint(np.array([0.0, 1.0, 0.0]))
        x = geo.HPoint(0.5 * th.direction)
        val = geo.busemann(x, th)
        assert val == pytest.approx(np.log(1.0 / 3.0), abs=1e-14)
        # limit-definition oracle at t = 20
        assert val == pytest.approx(
            oracles.busemann_limit_value(x.coords, th.direction, 20.0), abs=1e-7)

    def test_on_opposite_ray(self):
        th = geo.BoundaryPoint(np.array([0.0, 1.0, 0.0]))
        x = geo.HPoint(-0.5 * th.direction)
        assert geo.busemann(x, th) == pytest.approx(np.log(3.0), abs=1e-14)
        assert geo.busemann(x, th) == pytest.approx(
            oracles.busemann_limit_value(x.coords, th.direction, 20.0), abs=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**9))
    def test_one_lipschitz(self, seed):
        r = np.random.default_rng(seed)
        x = random_ball_point(r, max_radius=2.5)
        y = random_ball_point(r, max_radius=2.5)
        th = random_sphere_point(r)
        assert abs(geo.busemann(x, th) - geo.busemann(y, th)) <= \
            geo.distance(x, y) + 1e-12


class TestBusemannGradient:
    def test_unit_norm(self, rng):
        for _ in range(20):
            v = geo.busemann_gradient(random_ball_point(rng), random_sphere_point(rng))
            assert v.riemannian_norm == pytest.approx(1.0, abs=1e-12)

    def test_points_away_on_ray(self):
        th = geo.BoundaryPoint(np.array([1.0, 0.0, 0.0]))
        x = geo.HPoint(np.array([0.3, 0.0, 0.0]))
        g = geo.busemann_gradient(x, th)
        # unit tangent toward theta is +e1 in the frame; gradient is -e1
        frame = g.frame_components()
        assert np.allclose(frame, [-1.0, 0.0, 0.0], atol=1e-13)

    def test_finite_difference_oracle(self, rng):
        h = 1e-5
        for _ in range(5):
            x = random_ball_point(rng)
            th = random_sphere_point(rng)
            u = rng.standard_normal(3)
            u /= geo.conformal_factor(x.coords) * np.linalg.norm(u)  # unit
            fd = (geo.busemann(geo.exp_map(x, geo.TangentVector(x, h * u)), th)
                  - geo.busemann(geo.exp_map(x, geo.TangentVector(x, -h * u)), th)) / (2 * h)
            inner = geo.riemannian_inner(
                geo.busemann_gradient(x, th), geo.TangentVector(x, u))
            assert fd == pytest.approx(inner, abs=1e-6)


class TestBusemannHessian:
    def test_trace_and_kernel(self, rng):
        for _ in range(10):
            x, th = random_ball_point(rng), random_sphere_point(rng)
            H = geo.busemann_hessian(x, th)
            assert np.trace(H) == pytest.approx(2.0, abs=1e-13)
            b = geo.busemann_gradient(x, th).frame_components()
            assert np.max(np.abs(H @ b)) < 1e-12

    def test_identity_minus_outer_product(self, rng):
        for _ in range(10):
            x, th = random_ball_point(rng), random_sphere_point(rng)
            b = geo.busemann_gradient(x, th).frame_components()
            lhs = geo.busemann_hessian(x, th)
            assert np.max(np.abs(lhs - (np.eye(3) - np.outer(b, b)))) < 1e-8

    def test_second_difference_orthogonal_geodesic(self, rng):
        h = 1e-4
        for _ in range(5):
            x, th = random_ball_point(rng), random_sphere_point(rng)
            b = geo.busemann_gradient(x, th).frame_components()
            # frame vector orthogonal to the gradient
            v = rng.standard_normal(3)
            v -= np.dot(v, b) * b
            v /= np.linalg.norm(v)
            chart = (1.0 - np.dot(x.coords, x.coords)) / 2.0 * v
            plus = geo.busemann(geo.exp_map(x, geo.TangentVector(x, h * chart)), th)
            minus = geo.busemann(geo.exp_map(x, geo.TangentVector(x, -h * chart)), th)
            second = (plus - 2.0 * geo.busemann(x, th) + minus) / h**2
            assert second == pytest.approx(1.0, abs=1e-5)


class TestExpLogTransport:
    def test_exp_of_zero(self):
        assert np.array_equal(
            geo.exp_map(O3, geo.TangentVector(O3, np.zeros(3))).coords, O3.coords)

    def test_round_trip(self, rng):
        for _ in range(20):
            x, y = random_ball_point(rng, max_radius=2.0), random_ball_point(rng, max_radius=2.0)
            back = geo.exp_map(x, geo.log_map(x, y))
            assert np.max(np.abs(back.coords - y.coords)) < 1e-9

    def test_transport_is_isometric(self, rng):
        for _ in range(10):
            x, y = random_ball_point(rng), random_ball_point(rng)
            v = geo.TangentVector(x, 0.05 * rng.standard_normal(3))
            w = geo.parallel_transport(x, y, v)
            assert w.riemannian_norm == pytest.approx(v.riemannian_norm, abs=1e-12)


class TestIsometries:
    def test_form_closure(self, rng):
        J = geo.minkowski(4)
        for _ in range(10):
            g = geo.random_isometry(rng, 3)
            h = geo.random_isometry(rng, 3)
            for m in (g.compose(h).lorentz, g.inverse().lorentz):
                assert np.max(np.abs(m.T @ J @ m - J)) < 1e-9

    def test_boundary_action_identity_and_composition(self, rng):
        th = random_sphere_point(rng)
        assert np.allclose(
            geo.boundary_action(geo.Isometry.identity(3), th).direction,
            th.direction)
        g, h = geo.random_isometry(rng, 3), geo.random_isometry(rng, 3)
        lhs = geo.boundary_action(g.compose(h), th).direction
        rhs = geo.boundary_action(g, geo.boundary_action(h, th)).direction
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_loxodromic_fixes_two_points(self, rng):
        g0 = geo.hyperbolic_translation(3, 1.2)
        h = geo.random_isometry(rng, 3)
        g = h @ g0 @ h.inverse()
        att, repl = geo.loxodromic_fixed_points(g)
        for p in (att, repl):
            img = geo.boundary_action(g, p)
            assert np.max(np.abs(img.direction - p.direction)) < 1e-9
        assert np.max(np.abs(att.direction - repl.direction)) > 0.1


class TestModelConversions:
    def test_ball_hyperboloid_round_trip(self, rng):
        for _ in range(10):
            x = random_ball_point(rng, max_radius=3.0).coords
            X = geo.ball_to_hyperboloid(x)
            assert X[0] ** 2 - np.dot(X[1:], X[1:]) == pytest.approx(1.0, abs=1e-10)
            assert np.max(np.abs(geo.hyperboloid_to_ball(X) - x)) < 1e-14

    def test_tangent_round_trip(self, rng):
        x = random_ball_point(rng).coords
        u = 0.1 * rng.standard_normal(3)
        X = geo.ball_to_hyperboloid(x)
        U = geo.tangent_to_hyperboloid(x, u)
        assert X[0] * U[0] - np.dot(X[1:], U[1:]) == pytest.approx(0.0, abs=1e-12)
        assert np.max(np.abs(geo.tangent_to_ball(X, U) - u)) < 1e-14

    def test_orientation_sign(self):
        assert geo.Isometry.identity(3).orientation == 1
        refl = np.diag([1.0, -1.0, 1.0, 1.0])
        assert geo.Isometry(refl).orientation == -1


class TestTranslationLength:
    def test_identity(self):
        assert geo.translation_length(geo.Isometry.identity(3)) == 0.0

    def test_axis_translation(self):
        assert geo.translation_length(geo.hyperbolic_translation(3, 2.0)) == \
            pytest.approx(2.0, abs=1e-12)

    def test_conjugation_invariance(self, rng):
        g = geo.hyperbolic_translation(3, 1.3)
        for _ in range(5):
            h = geo.random_isometry(rng, 3)
            assert geo.translation_length(h @ g @ h.inverse()) == \
                pytest.approx(1.3, abs=1e-10)

    def test_lower_bounds_displacement(self, rng):
        for _ in range(5):
            g = geo.random_isometry(rng, 3)
            ell = geo.translation_length(g)
            for _ in range(10):
                y = random_ball_point(rng, max_radius=2.0)
                assert ell <= geo.distance(g.apply(y), y) + 1e-9

    def test_parabolic_classification(self):
        par = geo.psl2_to_lorentz(np.array([[1, 1], [0, 1]], dtype=complex))
        assert geo.classify(par) == "parabolic"
        assert geo.translation_length(par) == 0.0
        # same matrix without the spin shortcut
        bare = geo.Isometry(par.lorentz)
        assert geo.classify(bare) == "parabolic"
        assert geo.translation_length(bare) == 0.0

    def test_elliptic(self):
        rot = geo.psl2_to_lorentz(np.diag([np.exp(0.4j), np.exp(-0.4j)]))
        assert geo.classify(rot) == "elliptic"
        assert geo.translation_length(rot) == 0.0


class TestSpinModel:
    def test_mobius_vs_lorentz_boundary_action(self, rng):
        for _ in range(5):
            A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            iso = geo.psl2_to_lorentz(A)
            z = complex(*rng.standard_normal(2))
            th = geo.sphere_from_complex(z)
            lhs = geo.boundary_action(iso, th).direction
            rhs = geo.sphere_from_complex(geo.mobius_apply(A, z)).direction
            assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_sphere_chart_round_trip(self, rng):
        for _ in range(10):
            th = random_sphere_point(rng)
            back = geo.sphere_from_complex(geo.complex_from_sphere(th))
            assert np.max(np.abs(back.direction - th.direction)) < 1e-12

    def test_spin_length_matches_lorentz(self):
        g = geo.psl2_to_lorentz(np.diag([2.0 + 0j, 0.5 + 0j]))
        assert geo.translation_length(g) == pytest.approx(2 * np.log(2), abs=1e-12)
        assert geo.translation_length(geo.Isometry(g.lorentz)) == \
            pytest.approx(2 * np.log(2), abs=1e-9)
