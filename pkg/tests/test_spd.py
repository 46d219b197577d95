import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from natmap import spd


class TestPsi:
    def test_maximum_value(self):
        assert spd.psi(spd.TraceOneSPD.isotropic(3)) == pytest.approx(
            27 / 64, abs=1e-14)
        assert spd.psi_max(3) == 27 / 64

    def test_hand_evaluated_diagonal(self):
        H = np.diag([0.5, 0.25, 0.25])
        # eigenvalue product oracle: prod a/(1-a)^2
        oracle = (0.5 * 0.25 * 0.25) / ((0.5 * 0.75 * 0.75) ** 2)
        assert oracle == pytest.approx(32 / 81, abs=1e-15)
        assert spd.psi(H) == pytest.approx(32 / 81, abs=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**9))
    def test_conjugation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        H = spd.random_trace_one_spd(rng, 3, 1)[0]
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert spd.psi(Q @ H @ Q.T) == pytest.approx(spd.psi(H), abs=1e-12)

    def test_eigenvalue_reduction(self, rng):
        H = spd.random_trace_one_spd(rng, 3, 20)
        for h in H:
            eigs = np.sort(np.linalg.eigvalsh(h))
            assert spd.psi(h) == pytest.approx(spd.psi_simplex(eigs), abs=1e-12)

    def test_characteristic_polynomial_identity(self, rng):
        # |p_H(0)| / p_H(1)^2 with p from the characteristic polynomial
        for h in spd.random_trace_one_spd(rng, 3, 10):
            p = np.poly(h)
            val = abs(np.polyval(p, 0.0)) / np.polyval(p, 1.0) ** 2
            assert val == pytest.approx(spd.psi(h), abs=1e-12)


class TestPsiSimplex:
    def test_center_values(self):
        assert spd.psi_simplex(np.full(3, 1 / 3)) == pytest.approx(27 / 64, abs=1e-15)
        assert spd.psi_simplex(np.full(4, 0.25)) == pytest.approx(
            256 / 6561, abs=1e-15)
        assert spd.psi_simplex(np.full(4, 0.25)) == pytest.approx(
            spd.psi_max(4), abs=1e-15)

    def test_permutation_invariance(self, rng):
        for _ in range(10):
            a = rng.dirichlet(np.ones(4))
            b = rng.permutation(a)
            assert spd.psi_simplex(a) == pytest.approx(spd.psi_simplex(b), rel=1e-14)

    def test_validation(self):
        with pytest.raises(ValueError):
            spd.SimplexPoint(np.array([0.5, 0.5, 0.0]))
        with pytest.raises(ValueError):
            spd.TraceOneSPD(np.diag([0.5, 0.6, -0.1]))


class TestRandomSampler:
    def test_samples_are_trace_one_spd(self, rng):
        H = spd.random_trace_one_spd(rng, 4, 200)
        assert np.max(np.abs(np.einsum("sii->s", H) - 1.0)) < 1e-12
        assert np.max(np.abs(H - H.transpose(0, 2, 1))) < 1e-12
        assert min(np.linalg.eigvalsh(h).min() for h in H) > 0

    def test_bound_holds_on_samples(self, rng):
        for k in (3, 4, 5):
            vals = spd.psi(spd.random_trace_one_spd(rng, k, 50_000))
            assert vals.max() <= spd.psi_max(k) + 1e-12

    def test_k2_unbounded_witness(self):
        # psi on diag(a, 1-a) is 1/(a(1-a)), blowing up toward the vertices
        a = np.geomspace(0.4, 1e-9, 30)
        vals = spd.psi_simplex(np.column_stack([a, 1.0 - a]))
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] > 1e8


class TestBoundaryScan:
    def test_k3_collar_and_exact_supremum(self):
        rep = spd.boundary_bound_scan(3, 1e-3, 100_000, seed=1)
        assert rep.passed
        # the measured max approaches the exact collar supremum from below
        assert rep.max_value <= spd.collar_supremum(1e-3) + 1e-12
        assert rep.max_value >= 0.25
        # the supremum exceeds 1/4 by margin/2 up to higher order
        assert spd.collar_supremum(1e-3) == pytest.approx(0.2505, abs=1e-4)

    def test_non_vertex_sequences_vanish(self):
        for alpha in (0.2, 0.5, 0.8):
            vals, limit = spd.edge_limit_values(alpha)
            assert np.all(np.diff(np.abs(vals)) < 0)
            assert abs(limit) <= 1e-4

    def test_k4_vertex_envelope(self):
        rep = spd.boundary_bound_scan(4, 2.5e-3, 10_000, seed=1)
        assert rep.passed
        assert rep.max_value <= 1.01

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            spd.boundary_bound_scan(2, 1e-3, 10)


class TestQuantitativeConverse:
    def test_exact_maximum_recovers_center(self):
        rep = spd.quantitative_converse(3, 0.0, 100_000, seed=2)
        assert rep.delta_max_sampled <= 1e-7

    def test_small_level_certified_by_grid(self):
        rep = spd.quantitative_converse(3, 1e-4, 100_000, seed=2)
        assert rep.delta_max_sampled <= 0.02
        assert rep.delta_max_grid + 2 * rep.grid_step <= 0.02

    def test_monotone_in_eps(self):
        deltas = [spd.quantitative_converse(3, e, 50_000, seed=2).delta_max_sampled
                  for e in (1e-4, 1e-3, 1e-2)]
        assert deltas[0] < deltas[1] < deltas[2]
        assert deltas[2] <= 0.2
