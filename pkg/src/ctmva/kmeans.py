"""Continuous-time k-means: temporal clusters with exact transition points.

With a cubic B-spline basis the squared distance from ``x(t)`` to a center
differs between centers by a cubic polynomial on each inter-knot segment,
so cluster transitions are roots of finitely many cubics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import Partition, Region, piecewise_poly, region_moments
from .errors import (
    CTMVAError,
    DegenerateCentersError,
    DomainError,
    NumericError,
    PartitionError,
    UnsupportedBasisError,
)
from .smoothing import FDataset

ROOT_IMAG_TOL = 1e-10
PROBE_GRID = 1024


@dataclass(frozen=True, eq=False)
class ClusterResult:
    partition: Partition
    centers: np.ndarray
    objective: float
    iterations: int
    converged: bool
    restarts_used: int
    history: tuple[float, ...] = ()
    runs: tuple[dict, ...] = field(default=(), repr=False)

    @property
    def breakpoints(self) -> list[tuple[float, int, int]]:
        """Transition times as ``(t, cluster_before, cluster_after)`` (0-based cluster ids)."""
        return segment_breakpoints(partition_segments(self.partition))


@dataclass(frozen=True, eq=False)
class SilhouetteProfile:
    grid: np.ndarray
    s_values: np.ndarray
    mean_s: float
    labels: np.ndarray | None = None


def _require_spline(data: FDataset):
    if data.basis.kind != "bspline" or data.basis.order > 4:
        raise UnsupportedBasisError(
            "CT k-means needs a B-spline basis of order <= 4; re-smooth Fourier data with B-splines"
        )
    return piecewise_poly(data.basis)


def real_roots_in(coeffs: np.ndarray, half_width: np.ndarray) -> list[np.ndarray]:
    """Real roots in ``[-h, h]`` of a batch of cubics ``sum_d c[:, d] u**d``.

    Roots come from companion-matrix eigenvalues after rescaling each cubic
    to ``v = u / h`` on ``[-1, 1]``.
    """
    n = coeffs.shape[0]
    scaled = coeffs * half_width[:, None] ** np.arange(4)
    mag = np.abs(scaled).max(axis=1)
    out: list[np.ndarray] = [np.empty(0)] * n
    safe = np.where(mag > 0, mag, 1.0)
    c = scaled / safe[:, None]
    small = np.abs(c) <= 1e-13
    degree = np.full(n, 0)
    for d in (1, 2, 3):
        degree = np.where(~small[:, d], d, degree)
    degree[mag == 0] = 0

    for deg in (1, 2, 3):
        rows = np.flatnonzero(degree == deg)
        if rows.size == 0:
            continue
        lead = c[rows, deg]
        comp = np.zeros((rows.size, deg, deg))
        # companion matrix of the monic polynomial v**deg + sum (c_d / lead) v**d
        comp[:, 0, :] = -c[rows, deg - 1 :: -1][:, :deg] / lead[:, None]
        if deg > 1:
            idx = np.arange(deg - 1)
            comp[:, idx + 1, idx] = 1.0
        eig = np.linalg.eigvals(comp)
        for r, vals in zip(rows, eig):
            real = vals.real[np.abs(vals.imag) <= ROOT_IMAG_TOL * max(1.0, np.abs(vals.real).max())]
            real = _polish(c[r, : deg + 1], real[(real >= -1.0 - 1e-6) & (real <= 1.0 + 1e-6)])
            real = real[(real >= -1.0) & (real <= 1.0)]
            out[r] = np.sort(real) * half_width[r]
    return out


def _polish(c: np.ndarray, v: np.ndarray, steps: int = 4) -> np.ndarray:
    """Newton refinement of approximate roots.

    Companion eigenvalues lose accuracy when the leading coefficient is tiny
    relative to the others; a few Newton steps restore full precision.
    """
    if v.size == 0:
        return v
    dc = c[1:] * np.arange(1, c.size)
    for _ in range(steps):
        f = np.polynomial.polynomial.polyval(v, c)
        df = np.polynomial.polynomial.polyval(v, dc)
        ok = np.abs(df) > 1e-14 * np.abs(c).max()
        v = np.where(ok, v - f / np.where(ok, df, 1.0), v)
    return v


def _functionals(pp, C: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Local cubic coefficients of ``A_i(t) = -2 phi(t)^T C m_i + m_i^T m_i`` per segment.

    Shape ``(nseg, 4, k)`` in powers of ``t - pp.centers[j]``.
    """
    A = -2.0 * np.einsum("jdk,kp,ip->jdi", pp.local_blocks, C, centers)
    A[:, 0, :] += np.einsum("ip,ip->i", centers, centers)
    return A


def _winner(values: np.ndarray) -> np.ndarray:
    """Index of the smallest entry per row; near-ties resolve to the lowest index."""
    lo = values.min(axis=1, keepdims=True)
    scale = np.abs(values).max(axis=1, keepdims=True)
    return np.argmax(values <= lo + 1e-13 * np.maximum(scale, 1e-300), axis=1)


def _check_centers(centers: np.ndarray) -> None:
    k = centers.shape[0]
    scale = max(np.abs(centers).max(), 1e-300)
    for i in range(k):
        for j in range(i + 1, k):
            if np.abs(centers[i] - centers[j]).max() <= 1e-12 * scale:
                raise DegenerateCentersError(f"centers {i + 1} and {j + 1} coincide")


def _assign_segments(data: FDataset, centers: np.ndarray) -> list[tuple[float, float, int]]:
    pp = _require_spline(data)
    A = _functionals(pp, data.C, centers)
    k = centers.shape[0]
    bk = pp.breakpoints
    half = 0.5 * np.diff(bk)

    iu, ju = np.triu_indices(k, 1)
    diff = A[:, :, iu] - A[:, :, ju]  # (nseg, 4, npairs)
    nseg, _, npairs = diff.shape
    coeffs = diff.transpose(0, 2, 1).reshape(nseg * npairs, 4)
    roots = real_roots_in(coeffs, np.repeat(half, npairs))

    cuts_all, seg_ids = [], []
    for j in range(nseg):
        local = [-half[j], half[j]]
        for r in roots[j * npairs : (j + 1) * npairs]:
            local.extend(r)
        cuts = np.unique(np.clip(local, -half[j], half[j]))
        cuts_all.append(cuts + pp.centers[j])
        seg_ids.append(j)

    pieces: list[tuple[float, float, int]] = []
    mids, mid_seg, bounds = [], [], []
    for j, cuts in zip(seg_ids, cuts_all):
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b > a:
                mids.append(0.5 * (a + b))
                mid_seg.append(j)
                bounds.append((a, b))
    mids = np.asarray(mids)
    mid_seg = np.asarray(mid_seg)
    u = mids - pp.centers[mid_seg]
    powers = u[:, None] ** np.arange(4)
    values = np.einsum("nd,ndi->ni", powers, A[mid_seg])
    winners = _winner(values)

    for (a, b), w in zip(bounds, winners):
        if pieces and pieces[-1][2] == w:
            pieces[-1] = (pieces[-1][0], b, int(w))
        else:
            pieces.append((a, b, int(w)))
    # snap the ends onto the exact interval bounds
    lo, hi = data.basis.interval
    pieces[0] = (lo, pieces[0][1], pieces[0][2])
    pieces[-1] = (pieces[-1][0], hi, pieces[-1][2])
    return pieces


def segments_to_partition(pieces, k: int) -> Partition:
    by_cluster: dict[int, list[tuple[float, float]]] = {}
    for a, b, i in pieces:
        by_cluster.setdefault(i, []).append((a, b))
    ids = sorted(by_cluster)
    return Partition(tuple(Region.from_bounds(by_cluster[i]) for i in ids), tuple(str(i + 1) for i in ids))


def partition_segments(partition: Partition) -> list[tuple[float, float, int]]:
    """Segments as ``(lo, hi, cluster)`` where ``cluster`` is the 0-based id parsed from the label."""
    out = []
    for region, label in zip(partition.parts, partition.labels):
        try:
            cid = int(label) - 1
        except ValueError:
            cid = partition.labels.index(label)
        out.extend((s.lo, s.hi, cid) for s in region.segments)
    return sorted(out)


def segment_breakpoints(pieces) -> list[tuple[float, int, int]]:
    return [(b0, i0, i1) for (a0, b0, i0), (a1, b1, i1) in zip(pieces[:-1], pieces[1:])]


def assign_regions(data: FDataset, centers) -> Partition:
    """Partition the time interval by nearest center.

    Part labels are the 1-based center indices as strings; centers that win
    nowhere are absent from the result.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[1] != data.p:
        raise DomainError(f"centers must have {data.p} coordinates, got {centers.shape[1]}")
    if centers.shape[0] < 2:
        raise DomainError("need at least two centers")
    _check_centers(centers)
    return segments_to_partition(_assign_segments(data, centers), centers.shape[0])


def cluster_objective(data: FDataset, partition: Partition) -> float:
    """Total within-cluster integrated squared distance to the cluster means."""
    partition.validate(data.basis.interval)
    K = data.basis.K
    acc = np.zeros((K, K))
    for region in partition.parts:
        m = region_moments(data.basis, region)
        acc += m.length * m.Q
    return float(np.trace(data.C.T @ acc @ data.C))


def _objective_from_pieces(data: FDataset, pieces) -> float:
    return cluster_objective(data, segments_to_partition(pieces, 0))


def _symdiff_length(p1, p2) -> float:
    cuts = np.unique([x for a, b, _ in p1 for x in (a, b)] + [x for a, b, _ in p2 for x in (a, b)])

    def labels(pieces, t):
        starts = np.array([a for a, _, _ in pieces])
        ids = np.array([i for _, _, i in pieces])
        return ids[np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(ids) - 1)]

    mids = 0.5 * (cuts[:-1] + cuts[1:])
    differ = labels(p1, mids) != labels(p2, mids)
    return float(np.diff(cuts)[differ].sum())


def _cluster_means(data: FDataset, pieces, k: int) -> tuple[np.ndarray, np.ndarray]:
    means = np.zeros((k, data.p))
    present = np.zeros(k, dtype=bool)
    grouped: dict[int, list[tuple[float, float]]] = {}
    for a, b, i in pieces:
        grouped.setdefault(i, []).append((a, b))
    for i, bounds in grouped.items():
        means[i] = data.C.T @ region_moments(data.basis, bounds).phi_bar
        present[i] = True
    return means, present


def _single_run(data: FDataset, k: int, max_iter: int, tol: float, rng: np.random.Generator) -> dict:
    lo, hi = data.basis.interval
    length = hi - lo
    probe_t = np.linspace(lo, hi, PROBE_GRID)
    probe_x = data(probe_t)

    centers = None
    for _ in range(100):
        t0 = np.sort(rng.uniform(lo, hi, size=k))
        cand = data(t0)
        try:
            _check_centers(cand)
        except DegenerateCentersError:
            continue
        centers = cand
        break
    if centers is None:
        raise DegenerateCentersError("could not draw distinct initial centers")

    history: list[float] = []
    prev = None
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        pieces = _assign_segments(data, centers)
        present = np.zeros(k, dtype=bool)
        present[[i for _, _, i in pieces]] = True
        for _ in range(k):
            if present.all():
                break
            # move an empty cluster's center to the probe point farthest from the live centers
            gone = int(np.flatnonzero(~present)[0])
            live = centers[present]
            d = np.min(((probe_x[:, None, :] - live[None]) ** 2).sum(axis=2), axis=1)
            centers[gone] = probe_x[int(np.argmax(d))]
            _check_centers(centers)
            pieces = _assign_segments(data, centers)
            present[:] = False
            present[[i for _, _, i in pieces]] = True
        if not present.all():
            raise NumericError("empty cluster persists after reinitialization")

        history.append(_objective_from_pieces(data, pieces))
        if prev is not None and _symdiff_length(prev, pieces) < tol * length:
            converged = True
            break
        centers, _ = _cluster_means(data, pieces, k)
        prev = pieces
    centers, _ = _cluster_means(data, pieces, k)
    return {
        "pieces": pieces,
        "centers": centers,
        "objective": history[-1],
        "iterations": iterations,
        "converged": converged,
        "history": tuple(history),
    }


def ct_kmeans(
    data: FDataset,
    k: int,
    restarts: int = 20,
    max_iter: int = 100,
    tol: float = 1e-8,
    seed: int = 0,
    threads: int = 1,
) -> ClusterResult:
    """Lloyd-style CT k-means; the best of ``restarts`` independent runs is returned.

    Run ``r`` draws its starting times from an RNG seeded by ``(seed, r)``,
    so results do not depend on ``threads``.
    """
    if k < 2:
        raise DomainError("k-means needs k >= 2")
    if restarts < 1:
        raise DomainError("restarts must be >= 1")
    _require_spline(data)

    def job(r):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
        try:
            return _single_run(data, k, max_iter, tol, rng)
        except CTMVAError as exc:
            return {"error": str(exc)}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(job, range(restarts)))
    else:
        runs = [job(r) for r in range(restarts)]

    ok = [i for i, run in enumerate(runs) if "error" not in run]
    if not ok:
        raise NumericError(f"all {restarts} k-means runs failed: {runs[0]['error']}")
    best = min(ok, key=lambda i: (runs[i]["objective"], i))
    run = runs[best]
    log = tuple(
        {"restart": i, "error": r["error"]}
        if "error" in r
        else {
            "restart": i,
            "objective": r["objective"],
            "iterations": r["iterations"],
            "converged": r["converged"],
            "transitions": len(r["pieces"]) - 1,
        }
        for i, r in enumerate(runs)
    )
    return ClusterResult(
        partition=segments_to_partition(run["pieces"], k),
        centers=run["centers"],
        objective=run["objective"],
        iterations=run["iterations"],
        converged=run["converged"],
        restarts_used=restarts,
        history=run["history"],
        runs=log,
    )


def _trapezoid_nodes(segments, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = [], []
    for a, b in segments:
        inner = grid[(grid > a) & (grid < b)]
        x = np.concatenate([[a], inner, [b]])
        h = np.diff(x)
        w = np.zeros_like(x)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def silhouette(data: FDataset, partition: Partition, grid_size: int = 6000, chunk: int = 512) -> SilhouetteProfile:
    """Silhouette width ``s(t)`` on an equally spaced grid.

    Mean distances to each cluster are trapezoidal approximations of the
    integral of ``||x(t) - x(s)||`` over the cluster, divided by its length.
    """
    if partition.k < 2:
        raise DomainError("silhouette is undefined for a single cluster (need k > 1)")
    partition.validate(data.basis.interval)
    lo, hi = data.basis.interval
    grid = np.linspace(lo, hi, int(grid_size))
    Xg = data(grid)
    own = partition.label_at(grid)

    mean_dist = np.empty((grid.size, partition.k))
    for c, region in enumerate(partition.parts):
        if region.length <= 0:
            raise DomainError("every cluster needs positive length")
        nodes, w = _trapezoid_nodes(region.bounds(), grid)
        Xn = data(nodes)
        sq_n = (Xn**2).sum(axis=1)
        for start in range(0, grid.size, chunk):
            Xa = Xg[start : start + chunk]
            d2 = (Xa**2).sum(axis=1)[:, None] + sq_n[None, :] - 2.0 * Xa @ Xn.T
            mean_dist[start : start + chunk, c] = np.sqrt(np.maximum(d2, 0.0)) @ w / region.length

    rows = np.arange(grid.size)
    a = mean_dist[rows, own]
    others = mean_dist.copy()
    others[rows, own] = np.inf
    b = others.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s = np.clip(s, -1.0, 1.0)
    return SilhouetteProfile(grid, s, float(s.mean()), own)


def mean_silhouette_by_k(data: FDataset, k_values, grid_size: int = 6000, **kmeans_kwargs) -> dict[int, float]:
    """Average silhouette width of the CT k-means solution for each k."""
    return {
        int(k): silhouette(data, ct_kmeans(data, int(k), **kmeans_kwargs).partition, grid_size).mean_s
        for k in k_values
    }
