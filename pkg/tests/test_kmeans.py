import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctmva import (
    FDataset,
    Partition,
    assign_regions,
    cluster_objective,
    ct_cov,
    ct_kmeans,
    ct_mean,
    eval_basis,
    make_basis,
    silhouette,
)
from ctmva.errors import DegenerateCentersError, DomainError, PartitionError, UnsupportedBasisError
from ctmva.io import parse_long_csv
from ctmva.kmeans import mean_silhouette_by_k, partition_segments, real_roots_in, segment_breakpoints
from ctmva.smoothing import smooth_dataset

from conftest import FIXTURES, random_dataset, trapezoid_weights


def _fit(basis, f, n=2000):
    lo, hi = basis.interval
    grid = np.linspace(lo, hi, n)
    return np.linalg.lstsq(eval_basis(basis, grid), f(grid), rcond=None)[0]


def _cluster_ids(partition, t):
    idx = partition.label_at(t)
    return np.array([int(partition.labels[i]) - 1 for i in idx])


def _breaks(partition):
    return [t for t, _, _ in segment_breakpoints(partition_segments(partition))]


@pytest.fixture(scope="module")
def two_regime():
    series = parse_long_csv(FIXTURES / "two_regime.csv")
    return smooth_dataset(series, make_basis("bspline", (0, 1), 40))


class TestRoots:
    @given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.floats(0.01, 5))
    @settings(max_examples=200, deadline=None)
    def test_against_numpy_roots(self, c, h):
        c = np.array(c)
        got = real_roots_in(c[None, :], np.array([h]))[0]
        # every returned root really is a root
        scale = np.abs(c * h ** np.arange(4)).max()
        if got.size:
            assert np.all(np.abs(np.polynomial.polynomial.polyval(got, c)) <= 1e-7 * max(scale, 1e-300))
        if scale == 0:
            return
        # oracle: drop leading terms that are negligible on [-h, h], then numpy's roots
        scaled = c * h ** np.arange(4) / scale
        deg = max(d for d in range(4) if abs(scaled[d]) > 1e-13 or d == 0)
        if deg == 0:
            return
        ref = np.polynomial.polynomial.polyroots(scaled[: deg + 1]) * h
        ref = np.sort(ref.real[(np.abs(ref.imag) < 1e-12) & (np.abs(ref.real) < h * (1 - 1e-6))])
        for r in ref:
            assert np.min(np.abs(got - r), initial=np.inf) < 1e-6 * max(1.0, h)

    def test_known_cubic(self):
        # (u - 0.2)(u + 0.5)(u - 3)
        c = np.polynomial.polynomial.polyfromroots([0.2, -0.5, 3.0])
        got = real_roots_in(c[None, :], np.array([1.0]))[0]
        assert np.allclose(got, [-0.5, 0.2], atol=1e-12)


class TestAssign:
    def test_single_crossing_exact(self):
        b = make_basis("bspline", (0, 1), 9)
        data = FDataset(b, _fit(b, lambda t: t**3)[:, None])
        part = assign_regions(data, [[0.1], [0.5]])
        assert _breaks(part) == pytest.approx([0.3 ** (1 / 3)], abs=1e-8)

    def test_curve_equal_to_center(self):
        b = make_basis("bspline", (0, 1), 10)
        data = FDataset(b, np.outer(np.ones(10), [2.0, -1.0]))
        part = assign_regions(data, [[2.0, -1.0], [0.0, 0.0]])
        assert part.labels == ("1",)
        assert part.parts[0].bounds() == [(0.0, 1.0)]

    @pytest.mark.parametrize("seed", range(6))
    def test_dense_argmin_oracle(self, seed):
        rng = np.random.default_rng(seed)
        k = 2 + seed % 3
        data = random_dataset(rng, K=20, p=2)
        centers = data(rng.uniform(0, 1, k))
        part = assign_regions(data, centers)
        grid = np.linspace(0, 1, 10_000)
        X = data(grid)
        brute = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
        mismatch = grid[brute != _cluster_ids(part, grid)]
        br = np.array(_breaks(part))
        for t in mismatch:
            assert np.min(np.abs(br - t)) < 1e-6

    def test_errors(self):
        data = random_dataset(np.random.default_rng(0))
        with pytest.raises(DegenerateCentersError):
            assign_regions(data, np.zeros((2, 3)))
        fourier = random_dataset(np.random.default_rng(0), K=7, kind="fourier")
        with pytest.raises(UnsupportedBasisError):
            assign_regions(fourier, np.eye(3)[:2])


class TestObjective:
    def test_single_cluster_is_total(self):
        data = random_dataset(np.random.default_rng(1), K=12, p=3, interval=(0, 2))
        whole = Partition.from_triples([(0, 2, "all")], (0, 2))
        assert cluster_objective(data, whole) == pytest.approx(2 * np.trace(ct_cov(data)), rel=1e-12)

    def test_dense_grid_oracle(self):
        data = random_dataset(np.random.default_rng(2), K=12, p=2)
        part = Partition.from_triples([(0, 0.35, "1"), (0.35, 0.7, "2"), (0.7, 1, "1")], (0, 1))
        total = 0.0
        for region in part.parts:
            gs = [np.linspace(a, b, 100_001) for a, b in region.bounds()]
            ws = [trapezoid_weights(g.size, g[0], g[-1]) for g in gs]
            m = sum(w @ data(g) for g, w in zip(gs, ws)) / region.length
            total += sum(w @ ((data(g) - m) ** 2).sum(axis=1) for g, w in zip(gs, ws))
        assert cluster_objective(data, part) == pytest.approx(total, abs=1e-6)

    def test_within_plus_between(self):
        data = random_dataset(np.random.default_rng(3), K=12, p=3)
        part = Partition.from_triples([(0, 0.2, "1"), (0.2, 0.6, "2"), (0.6, 1, "3")], (0, 1))
        grand = ct_mean(data)
        between = sum(r.length * np.sum((ct_mean(data, r) - grand) ** 2) for r in part.parts)
        assert cluster_objective(data, part) + between == pytest.approx(np.trace(ct_cov(data)), abs=1e-10)

    def test_requires_cover(self):
        data = random_dataset(np.random.default_rng(4))
        with pytest.raises(PartitionError):
            cluster_objective(data, Partition.from_triples([(0, 0.5, "1")]))


class TestKMeans:
    def test_two_regime_recovery(self, two_regime):
        res = ct_kmeans(two_regime, 2, seed=0)
        assert res.converged
        br = _breaks(res.partition)
        assert len(br) == 1 and abs(br[0] - 0.5) < 1 / 37

    def test_history_monotone(self, two_regime):
        for seed in range(5):
            h = np.array(ct_kmeans(two_regime, 3, restarts=1, seed=seed).history)
            assert np.all(np.diff(h) <= 1e-12 * h[0])

    def test_best_of_restarts(self, two_regime):
        res = ct_kmeans(two_regime, 3, restarts=6, seed=1)
        assert all(res.objective <= r["objective"] for r in res.runs)
        assert res.restarts_used == 6

    def test_centers_are_cluster_means(self, two_regime):
        res = ct_kmeans(two_regime, 2, seed=2)
        for region, label in zip(res.partition.parts, res.partition.labels):
            assert np.allclose(res.centers[int(label) - 1], ct_mean(two_regime, region), atol=1e-12)

    def test_seasonal_six_transitions(self):
        b = make_basis("bspline", (0, 3), 60)
        data = FDataset(b, _fit(b, lambda t: np.cos(2 * np.pi * t))[:, None])
        res = ct_kmeans(data, 2, seed=0)
        assert len(res.breakpoints) == 6

    def test_deterministic_and_thread_independent(self, two_regime):
        a = ct_kmeans(two_regime, 3, restarts=4, seed=7)
        b = ct_kmeans(two_regime, 3, restarts=4, seed=7, threads=3)
        assert a.breakpoints == b.breakpoints
        assert a.objective == b.objective

    def test_rejects_k1(self, two_regime):
        with pytest.raises(DomainError):
            ct_kmeans(two_regime, 1)


class TestSilhouette:
    def test_separated_regimes(self, two_regime):
        part = ct_kmeans(two_regime, 2, seed=0).partition
        prof = silhouette(two_regime, part)
        assert prof.grid.size == 6000
        assert np.all((prof.s_values >= -1) & (prof.s_values <= 1))
        assert prof.mean_s > 0.7
        assert prof.mean_s == pytest.approx(prof.s_values.mean())

    def test_perturbed_partition_goes_negative(self, two_regime):
        part = Partition.from_triples([(0, 0.7, "1"), (0.7, 1, "2")], (0, 1))
        prof = silhouette(two_regime, part)
        wrong = (prof.grid > 0.55) & (prof.grid < 0.65)
        assert np.all(prof.s_values[wrong] < 0)

    def test_single_cluster_rejected(self, two_regime):
        with pytest.raises(DomainError):
            silhouette(two_regime, Partition.from_triples([(0, 1, "1")], (0, 1)))

    def test_mean_by_k(self, two_regime):
        table = mean_silhouette_by_k(two_regime, range(2, 5), grid_size=500, restarts=3)
        assert sorted(table) == [2, 3, 4]
        assert all(-1 <= v <= 1 for v in table.values())
