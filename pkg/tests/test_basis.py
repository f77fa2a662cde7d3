import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ctmva import (
    Interval,
    Region,
    basis_integrals,
    constant_rep_vector,
    eval_basis,
    make_basis,
    penalty_matrix,
    piecewise_poly,
    region_moments,
)
from ctmva.basis import BasisSystem, Partition, newton_cotes7
from ctmva.errors import DimensionError, DomainError, ParityError, PartitionError, UnsupportedBasisError

# exact rational moments of the cubic K=6 basis on [0, 1], obtained symbolically
EXACT_PHI_BAR = np.array([1 / 12, 1 / 6, 1 / 4, 1 / 4, 1 / 6, 1 / 12])
EXACT_Q = {(0, 0): 41 / 1008, (2, 3): 19 / 2240, (1, 5): -1 / 72}
EXACT_REGION_PHI_BAR = np.array(
    [2401 / 72000, 7961 / 36000, 14521 / 48000, 14783 / 96000, 44257 / 288000, 203 / 1500]
)
EXACT_REGION_Q = {(0, 0): 28118111 / 5184000000, (2, 3): 428781487 / 32256000000, (4, 4): 31856939609 / 580608000000}
EXACT_P = {(0, 0): 324.0, (0, 1): -891 / 2, (2, 3): -243 / 8, (5, 5): 324.0}


class TestMakeBasis:
    def test_fourier_45(self):
        b = make_basis("fourier", (0, 365), 45)
        assert b.K == 45
        G = basis_integrals(b)[1]
        assert np.allclose(G, np.eye(45), atol=1e-12)

    def test_cubic_k40_has_37_segments(self):
        b = make_basis("bspline", (0, 1), 40)
        assert len(b.knots) == 38
        assert piecewise_poly(b).nseg == 37

    def test_errors(self):
        with pytest.raises(DimensionError):
            make_basis("bspline", (0, 1), 3)
        with pytest.raises(ParityError):
            make_basis("fourier", (0, 1), 4)
        with pytest.raises(DomainError):
            make_basis("bspline", (1, 1), 10)
        with pytest.raises(DomainError):
            Interval(2.0, 1.0)

    def test_knots_equally_spaced(self):
        b = make_basis("bspline", (2, 5), 10)
        assert np.allclose(np.diff(b.knots), 3 / 7)
        assert b.knots[0] == 2 and b.knots[-1] == 5

    def test_round_trip_dict(self):
        b = make_basis("bspline", (0, 2), 11, order=3)
        assert BasisSystem.from_dict(b.to_dict()).same_as(b)


class TestEvalBasis:
    @given(st.floats(0, 1), st.integers(4, 30))
    def test_partition_of_unity(self, t, K):
        b = make_basis("bspline", (0, 1), K)
        assert abs(eval_basis(b, [t]).sum() - 1) < 1e-12

    def test_fourier_constant(self):
        b = make_basis("fourier", (0, 365), 5)
        phi = eval_basis(b, np.linspace(0, 365, 7))
        assert np.allclose(phi[:, 0], 365**-0.5, rtol=0, atol=1e-15)

    def test_outside_interval(self):
        b = make_basis("bspline", (0, 1), 8)
        with pytest.raises(DomainError):
            eval_basis(b, [2.0])

    def test_right_endpoint_is_not_zero(self):
        b = make_basis("bspline", (0, 1), 8)
        row = eval_basis(b, [1.0])[0]
        assert row[-1] == pytest.approx(1.0)

    def test_constant_rep_vector(self):
        grid = np.linspace(0, 365, 1000)
        for b in (make_basis("bspline", (0, 365), 20), make_basis("fourier", (0, 365), 21)):
            w = constant_rep_vector(b)
            assert np.max(np.abs(eval_basis(b, grid) @ w - 1)) < 1e-12
        assert constant_rep_vector(make_basis("fourier", (0, 365), 3))[0] == pytest.approx(365**0.5)


class TestRegionMoments:
    def test_exact_full_interval(self):
        m = region_moments(make_basis("bspline", (0, 1), 6))
        assert np.allclose(m.phi_bar, EXACT_PHI_BAR, atol=1e-15)
        for (i, j), v in EXACT_Q.items():
            assert m.Q[i, j] == pytest.approx(v, abs=1e-15)

    def test_exact_region(self):
        m = region_moments(make_basis("bspline", (0, 1), 6), [(0.1, 0.5), (0.8, 1.0)])
        assert np.allclose(m.phi_bar, EXACT_REGION_PHI_BAR, atol=1e-15)
        for (i, j), v in EXACT_REGION_Q.items():
            assert m.Q[i, j] == pytest.approx(v, abs=1e-15)

    def test_matches_adaptive_quadrature(self):
        b = make_basis("bspline", (0, 2), 9)
        lo, hi = 0.37, 1.61
        m = region_moments(b, [(lo, hi)])

        def entry(i, j):
            f = lambda t: eval_basis(b, [t])[0, i] * eval_basis(b, [t])[0, j]
            return integrate.quad(f, lo, hi, points=b.knots[1:-1], epsabs=1e-13)[0] / (hi - lo)

        for i, j in [(0, 0), (2, 3), (4, 4), (7, 8), (3, 6)]:
            Gij = m.Q[i, j] + m.phi_bar[i] * m.phi_bar[j]
            assert Gij == pytest.approx(entry(i, j), abs=1e-10)

    def test_fourier_closed_form(self):
        b = make_basis("fourier", (0, 365), 7)
        m = region_moments(b)
        assert np.allclose(m.phi_bar, [365**-0.5, 0, 0, 0, 0, 0, 0], atol=1e-15)
        assert np.allclose(m.Q, np.diag([0] + [1 / 365] * 6), atol=1e-15)

    def test_fourier_subregion_by_quadrature(self):
        b = make_basis("fourier", (0, 1), 5)
        m = region_moments(b, [(0.0, 0.25)])
        # phi_2 = sqrt(2) sin(2 pi t): mean over [0, 1/4] is sqrt(2) * 4 / (2 pi)
        assert m.phi_bar[1] == pytest.approx(np.sqrt(2) * 2 / np.pi, abs=1e-13)

    @pytest.mark.parametrize("kind,K", [("bspline", 15), ("fourier", 9)])
    def test_null_direction(self, kind, K):
        b = make_basis(kind, (0, 3), K)
        w = constant_rep_vector(b)
        for region in (None, [(0.2, 1.1)], [(0, 0.5), (2.0, 2.9)]):
            assert np.max(np.abs(region_moments(b, region).Q @ w)) < 1e-12

    @given(st.floats(0.05, 0.95), st.floats(0.01, 0.5))
    @settings(max_examples=30, deadline=None)
    def test_additivity(self, split, gap):
        b = make_basis("bspline", (0, 1), 12)
        s1, s2 = (0.0, split * (1 - gap)), (split * (1 - gap) + gap * split, 1.0)
        m1, m2 = region_moments(b, [s1]), region_moments(b, [s2])
        m = region_moments(b, [s1, s2])
        lhs = m1.length * m1.phi_bar + m2.length * m2.phi_bar
        assert np.allclose(lhs, m.length * m.phi_bar, atol=1e-12)

    def test_q_is_psd_and_symmetric(self):
        m = region_moments(make_basis("bspline", (0, 1), 30), [(0.1, 0.2), (0.5, 0.93)])
        assert np.array_equal(m.Q, m.Q.T)
        assert np.linalg.eigvalsh(m.Q)[0] > -1e-12

    def test_region_errors(self):
        b = make_basis("bspline", (0, 1), 8)
        with pytest.raises(DomainError):
            region_moments(b, [(0.5, 1.5)])
        with pytest.raises(DomainError):
            Region.from_bounds([(0.1, 0.5), (0.4, 0.6)])
        with pytest.raises(DomainError):
            Region.from_bounds([])

    def test_touching_segments_merge(self):
        r = Region.from_bounds([(0.5, 0.7), (0.1, 0.5)])
        assert r.bounds() == [(0.1, 0.7)]


def test_newton_cotes_exact_for_degree_seven():
    x, w = newton_cotes7(0.3, 1.7)
    coeffs = np.arange(1.0, 9.0)
    f = np.polynomial.Polynomial(coeffs)
    F = f.integ()
    assert w @ f(x) == pytest.approx(F(1.7) - F(0.3), rel=1e-14)


class TestPiecewisePoly:
    def test_matches_eval_basis(self):
        b = make_basis("bspline", (0, 4), 25)
        t = np.random.default_rng(3).uniform(0, 4, 10_000)
        assert np.max(np.abs(piecewise_poly(b).evaluate(t) - eval_basis(b, t))) < 1e-10

    def test_segment_midpoints(self):
        b = make_basis("bspline", (0, 1), 40)
        pp = piecewise_poly(b)
        mids = 0.5 * (b.knots[:-1] + b.knots[1:])
        assert np.max(np.abs(pp.evaluate(mids) - eval_basis(b, mids))) < 1e-12

    def test_constant_reproduction(self):
        b = make_basis("bspline", (0, 1), 12)
        pp = piecewise_poly(b)
        w = constant_rep_vector(b)
        assert np.allclose(pp.coeff_blocks @ w, np.tile([1, 0, 0, 0], (pp.nseg, 1)), atol=1e-9)

    def test_fourier_unsupported(self):
        with pytest.raises(UnsupportedBasisError):
            piecewise_poly(make_basis("fourier", (0, 1), 5))


class TestPenalty:
    def test_exact_entries(self):
        P = penalty_matrix(make_basis("bspline", (0, 1), 6))
        for (i, j), v in EXACT_P.items():
            assert P[i, j] == pytest.approx(v, rel=1e-12)

    def test_null_space_is_affine(self):
        b = make_basis("bspline", (0, 1), 20)
        P = penalty_matrix(b)
        w = constant_rep_vector(b)
        assert abs(w @ P @ w) < 1e-8
        # interpolate t on a fine grid to get its coefficients
        grid = np.linspace(0, 1, 400)
        c = np.linalg.lstsq(eval_basis(b, grid), grid, rcond=None)[0]
        assert c @ P @ c < 1e-10
        assert np.allclose(P, P.T, atol=1e-14 * np.abs(P).max())
        assert np.linalg.eigvalsh(P)[0] > -1e-10 * np.abs(P).max()

    def test_fourier_penalty(self):
        b = make_basis("fourier", (0, 2), 5)
        w = (2 * np.pi / 2) ** 4
        assert np.allclose(np.diag(penalty_matrix(b)), [0, w, w, 16 * w, 16 * w])


class TestPartition:
    def test_from_triples_groups_labels(self):
        p = Partition.from_triples([(0, 1, "a"), (1, 2, "b"), (2, 3, "a")], (0, 3))
        assert p.labels == ("a", "b")
        assert p.parts[0].bounds() == [(0.0, 1.0), (2.0, 3.0)]

    def test_gap_and_overlap(self):
        with pytest.raises(PartitionError, match="gap"):
            Partition.from_triples([(0, 1, "a"), (1.5, 3, "b")], (0, 3))
        with pytest.raises(PartitionError, match="overlap"):
            Partition.from_triples([(0, 2, "a"), (1.5, 3, "b")], (0, 3))
        with pytest.raises(PartitionError):
            Partition.from_triples([(0, 2, "a"), (2, 2.5, "b")], (0, 3))

    def test_boundary_goes_to_lower_index(self):
        p = Partition.from_triples([(0, 1, "a"), (1, 2, "b")], (0, 2))
        assert list(p.label_at([0.5, 1.0, 1.5])) == [0, 0, 1]
