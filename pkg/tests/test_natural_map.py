import numpy as np
import pytest

from natmap import geometry as geo
from natmap import measures as ms
from natmap import natural_map as nm
from natmap import triangulation as tr
from conftest import random_ball_point

O3 = geo.HPoint.origin(3)


@pytest.fixture(scope="module")
def fig8_path():
    return tr.deformation_path(tr.figure_eight(), steps=8, t_end=0.5)


@pytest.fixture(scope="module")
def holonomy(fig8_path):
    return fig8_path[0].representation


class TestRepresentation:
    def test_relators_validated(self, holonomy):
        for r in holonomy.relators:
            assert holonomy.relator_residual(r) <= 1e-8
        with pytest.raises(ValueError):
            nm.Representation((geo.hyperbolic_translation(3, 1.0),), ("a",), 3)

    def test_word_evaluation(self, holonomy):
        a = holonomy.evaluate("a")
        ainv = holonomy.evaluate("A")
        prod = (a @ ainv).lorentz
        assert np.max(np.abs(prod - np.eye(4))) < 1e-12

    def test_conjugate(self, holonomy, rng):
        g = geo.random_isometry(rng, 3, 0.5, 0.5)
        conj = holonomy.conjugate(g)
        w = "abAB"
        assert geo.translation_length(conj.evaluate(w)) == pytest.approx(
            geo.translation_length(holonomy.evaluate(w)), abs=1e-9)

    def test_elementary_detection(self):
        # two powers of one boost share an axis
        g = geo.hyperbolic_translation(3, 0.7)
        rep = nm.Representation((g, g @ g), (), 3)
        assert rep.is_elementary()

    def test_holonomy_not_elementary(self, holonomy):
        assert not holonomy.is_elementary()

    def test_embedding(self, holonomy):
        emb = nm.embed_representation(holonomy, 5)
        assert emb.target_dim == 5
        assert emb.relator_residual(emb.relators[0]) <= 1e-8


class TestBoundaryMaps:
    def test_mobius_exact_equivariance(self, rng, fam2000):
        g = geo.random_isometry(rng, 3, 0.5, 0.5)
        D = nm.MobiusBoundaryMap(g)
        pts = rng.standard_normal((100, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        # D intertwines gamma with g gamma g^-1 exactly
        gamma = geo.random_isometry(rng, 3, 0.4, 0.4)
        lhs = D.map_points(gamma.apply_boundary_many(pts))
        rho = (g @ gamma @ g.inverse())
        rhs = rho.apply_boundary_many(D.map_points(pts))
        assert np.max(np.abs(lhs - rhs)) < 1e-6

    def test_totally_geodesic_shape(self):
        D = nm.TotallyGeodesicBoundaryMap(3, 5)
        pts = np.eye(3)
        out = D.map_points(pts)
        assert out.shape == (3, 5)
        assert np.allclose(out[:, :3], pts)
        assert np.allclose(out[:, 3:], 0.0)

    def test_orbit_table(self, holonomy, fig8_path, rng):
        target = fig8_path[4].representation
        D = nm.OrbitBoundaryMap.build(holonomy, target,
                                      max_word_length=8, min_table=5000)
        assert D.table_source.shape[0] >= 5000
        assert D.approximate
        dev = D.equivariance_report(
            [holonomy.evaluate(c) for c in "ab"],
            [target.evaluate(c) for c in "ab"], rng)
        assert np.isfinite(dev)      # reported, not asserted small


class TestNaturalMapExactCases:
    def test_identity_boundary_map(self, fam2000, rng):
        pushed = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        for _ in range(10):
            x = random_ball_point(rng)
            F = nm.natural_map(None, pushed, fam2000, x)
            assert geo.distance(F, x) <= 5e-4

    def test_identity_with_holonomy_gate(self, fam2000, holonomy):
        x = geo.HPoint(np.array([0.1, 0.2, -0.1]))
        F = nm.natural_map(holonomy, nm.identity_boundary_map(3), fam2000, x)
        assert geo.distance(F, x) <= 5e-4

    def test_conjugated_representation_gives_the_isometry(self, fam2000, rng):
        g = geo.random_isometry(rng, 3, 0.5, 0.5)
        pushed = nm.PushedFamily(nm.MobiusBoundaryMap(g), fam2000)
        for _ in range(5):
            x = random_ball_point(rng)
            F = nm.natural_map(None, pushed, fam2000, x)
            assert geo.distance(F, g.apply(x)) <= 5e-4

    def test_totally_geodesic_confinement(self, fam2000, rng):
        D = nm.TotallyGeodesicBoundaryMap(3, 5)
        pushed = nm.PushedFamily(D, fam2000)
        pushed3 = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        for _ in range(5):
            x = random_ball_point(rng)
            F5 = nm.natural_map(None, pushed, fam2000, x)
            assert np.linalg.norm(F5.coords[3:]) <= 5e-4
            F3 = nm.natural_map(None, pushed3, fam2000, x)
            assert np.linalg.norm(F5.coords[:3] - F3.coords) <= 5e-4

    def test_elementary_rejected(self, fam2000):
        g = geo.hyperbolic_translation(3, 0.7)
        rep = nm.Representation((g, g @ g), (), 3)
        with pytest.raises(nm.ElementaryRepresentationError):
            nm.natural_map(rep, nm.identity_boundary_map(3), fam2000, O3)

    def test_concentrating_map_rejected(self, fam2000):
        D = nm.identity_boundary_map(3)

        class Collapse:
            source_dim = 3
            target_dim = 3
            kind = "test"
            approximate = True

            def map_points(self, p):
                return np.tile([0.0, 0.0, 1.0], (p.shape[0], 1))

        with pytest.raises(nm.ElementaryRepresentationError):
            nm.natural_map(None, Collapse(), fam2000, O3)


class TestOperators:
    def test_identity_isotropy(self, fam2000):
        pushed = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        pair = nm.operators_at(None, pushed, fam2000,
                               geo.HPoint(np.array([0.2, -0.1, 0.3])))
        assert np.linalg.norm(pair.H - np.eye(3) / 3) <= 1e-3
        assert np.linalg.norm(pair.K - 2 * np.eye(3) / 3) <= 1e-3

    def test_trace_one(self, fam2000, holonomy, fig8_path):
        target = fig8_path[3].representation
        D = nm.OrbitBoundaryMap.build(holonomy, target, min_table=5000)
        pair = nm.operators_at(target, nm.PushedFamily(D, fam2000), fam2000,
                               geo.HPoint(np.array([0.15, 0.1, -0.2])))
        assert pair.trace_error <= 1e-6
        assert np.trace(pair.H_prime) == pytest.approx(1.0, abs=1e-6)
        assert np.max(np.abs(pair.K - (np.eye(3) - pair.H))) <= 1e-8

    def test_stationarity_at_image(self, fam2000, rng):
        pushed = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        for _ in range(5):
            x = random_ball_point(rng)
            F = nm.natural_map(None, pushed, fam2000, x)
            assert nm.stationarity_residual(pushed, x.coords, F) <= 1e-8


class TestJacobian:
    def test_identity_case(self, fam2000):
        pushed = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        x = geo.HPoint(np.array([0.25, 0.05, -0.15]))
        pair = nm.operators_at(None, pushed, fam2000, x)
        for method in ("implicit", "finite-difference"):
            j = nm.jacobian(None, pushed, fam2000, x, method, pair=pair)
            assert np.max(np.abs(j.DF - np.eye(3))) <= 1e-3
            assert j.jac_k == pytest.approx(1.0, abs=1e-3)

    def test_cross_method_agreement(self, fam2000, holonomy, fig8_path, rng):
        worst = 0.0
        for st in fig8_path[1:5]:
            D = nm.OrbitBoundaryMap.build(holonomy, st.representation,
                                          min_table=5000)
            pushed = nm.PushedFamily(D, fam2000)
            x = random_ball_point(rng, max_radius=0.5)
            ji = nm.jacobian(st.representation, pushed, fam2000, x, "implicit")
            jf = nm.jacobian(st.representation, pushed, fam2000, x,
                             "finite-difference")
            worst = max(worst, float(np.max(np.abs(ji.DF - jf.DF))))
        assert worst <= 1e-3

    def test_deformed_jacobian_below_one(self, fam2000, holonomy, fig8_path, rng):
        for st in fig8_path[1:6]:
            D = nm.OrbitBoundaryMap.build(holonomy, st.representation,
                                          min_table=5000)
            pushed = nm.PushedFamily(D, fam2000)
            x = random_ball_point(rng, max_radius=0.5)
            j = nm.jacobian(st.representation, pushed, fam2000, x, "implicit")
            assert j.jac_k <= 1.0 + 5e-3

    def test_ill_conditioned_fallback(self, fam2000):
        # a synthetic operator pair with nearly singular K exercises the
        # guard; the map itself is benign so the fallback returns ~identity
        pushed = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        x = geo.HPoint(np.array([0.1, 0.0, 0.0]))
        F = nm.natural_map(None, pushed, fam2000, x)
        H = np.diag([1.0 - 2e-7, 1e-7, 1e-7])
        pair = nm.OperatorPair(H, np.eye(3) - H, np.eye(3) / 3, x, F)
        j = nm.jacobian(None, pushed, fam2000, x, "implicit", pair=pair)
        assert j.fell_back
        assert j.method == "finite-difference"
        assert j.k_min_eigenvalue < 1e-6
        assert j.jac_k == pytest.approx(1.0, abs=1e-3)


class TestBoundCheck:
    def test_identity_equality_case(self, fam2000):
        pushed = nm.PushedFamily(nm.identity_boundary_map(3), fam2000)
        x = geo.HPoint(np.array([0.1, -0.3, 0.05]))
        pair = nm.operators_at(None, pushed, fam2000, x)
        j = nm.jacobian(None, pushed, fam2000, x, "implicit", pair=pair)
        rep = nm.jacobian_bound_check(pair, j, 3, 3)
        assert rep.passed
        assert rep.bound == pytest.approx(1.0, abs=1e-3)
        assert rep.psi_link_error <= 1e-12

    def test_deformed_bound(self, fam2000, holonomy, fig8_path, rng):
        st = fig8_path[5]
        D = nm.OrbitBoundaryMap.build(holonomy, st.representation, min_table=5000)
        pushed = nm.PushedFamily(D, fam2000)
        for _ in range(3):
            x = random_ball_point(rng, max_radius=0.5)
            pair = nm.operators_at(st.representation, pushed, fam2000, x)
            j = nm.jacobian(st.representation, pushed, fam2000, x, "implicit",
                            pair=pair)
            rep = nm.jacobian_bound_check(pair, j, 3, 3)
            assert rep.passed
            assert j.jac_k <= rep.bound + 1e-3

    def test_restricted_bound_m5(self, fam2000):
        D = nm.TotallyGeodesicBoundaryMap(3, 5)
        pushed = nm.PushedFamily(D, fam2000)
        x = geo.HPoint(np.array([0.2, 0.1, -0.1]))
        pair = nm.operators_at(None, pushed, fam2000, x)
        j = nm.jacobian(None, pushed, fam2000, x, "implicit", pair=pair)
        rep = nm.jacobian_bound_check(pair, j, 3, 5)
        assert rep.restricted and rep.passed
        Q, _ = np.linalg.qr(j.DF)
        assert np.linalg.norm(Q.T @ pair.H @ Q - np.eye(3) / 3) <= 1e-3


class TestEquivarianceAndDiagnostics:
    def test_natural_map_equivariance_exact_map(self, fam2000, holonomy, rng):
        # with the exact identity boundary map the deviation stays within
        # the solver-plus-quadrature budget
        budget = 2 * (1e-10 + 5e-4)
        x = geo.HPoint(np.array([0.05, 0.1, -0.05]))
        for letter in "ab":
            dev = nm.equivariance_deviation(
                holonomy, nm.identity_boundary_map(3), fam2000, x, letter,
                holonomy.evaluate(letter))
            assert dev <= budget

    def test_discretization_error_estimate(self, fam2000):
        est = nm.discretization_error_estimate(
            nm.identity_boundary_map(3), fam2000,
            geo.HPoint(np.array([0.3, 0.0, 0.1])))
        assert est <= 5e-4

    def test_constant_sequence_diagnostics(self, fam2000, holonomy):
        D = nm.identity_boundary_map(3)
        probes = [geo.HPoint(np.array([0.2, 0.0, 0.0])),
                  geo.HPoint(np.array([0.0, 0.25, 0.1]))]
        entries = [(float(n), holonomy, D, tr.FIG8_VOLUME) for n in range(3)]
        rows = nm.convergence_diagnostics(entries, fam2000, probes,
                                          tr.FIG8_VOLUME)
        for r in rows:
            assert abs(r.jac - 1.0) <= 1e-3
            assert r.h_deviation <= 1e-3
            assert r.volume_deficit == 0.0
            assert r.translation_lengths == rows[0].translation_lengths
        csv = nm.diagnostics_to_csv(rows)
        assert csv.splitlines()[0].startswith("parameter,probe_index,jac")
