"""CT principal components, Fisher discriminants and canonical correlations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import Partition, region_moments
from .ctstats import center, ct_cov
from .errors import BasisMismatchError, DomainError, NumericError, RankError
from .smoothing import FDataset

# eigenvalues at or below this fraction of the largest are treated as zero
POSITIVE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class PCAResult:
    eigenvalues: np.ndarray
    loadings: np.ndarray
    scores: FDataset
    var_explained: np.ndarray


@dataclass(frozen=True, eq=False)
class ScatterDecomp:
    T: np.ndarray
    W: np.ndarray
    B: np.ndarray


@dataclass(frozen=True, eq=False)
class LDAResult:
    discriminants: np.ndarray
    eigenvalues: np.ndarray
    scores: FDataset
    group_means: np.ndarray
    labels: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class CCAResult:
    correlations: np.ndarray
    a_vectors: np.ndarray
    b_vectors: np.ndarray
    canonical_functions_x: FDataset
    canonical_functions_y: FDataset


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _descending(vals: np.ndarray, vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # stable sort keeps input order among ties
    order = np.argsort(-vals, kind="stable")
    return vals[order], vecs[:, order]


def ct_pca(data: FDataset) -> PCAResult:
    S = ct_cov(data)
    if not np.all(np.isfinite(S)):
        raise NumericError("non-finite CT covariance matrix")
    vals, vecs = linalg.eigh(S)
    vals, vecs = _descending(vals, vecs)
    vals = np.where(vals < 0, 0.0, vals)
    vecs = fix_signs(vecs)
    total = vals.sum()
    var_explained = vals / total if total > 0 else np.full_like(vals, np.nan)
    centered = center(data)
    scores = FDataset(data.basis, centered.C @ vecs, tuple(f"PC{j + 1}" for j in range(data.p)))
    return PCAResult(vals, vecs, scores, var_explained)


def _check_partition(data: FDataset, groups: Partition) -> None:
    groups.validate(data.basis.interval)


def scatter_decomposition(data: FDataset, groups: Partition) -> ScatterDecomp:
    """Total, within-group and between-group scatter matrices over time."""
    _check_partition(data, groups)
    full = region_moments(data.basis)
    length = data.basis.interval.length
    K = data.basis.K
    Wk = np.zeros((K, K))
    Bk = np.zeros((K, K))
    for region in groups.parts:
        m = region_moments(data.basis, region)
        Wk += m.length * m.Q
        d = m.phi_bar - full.phi_bar
        Bk += m.length * np.outer(d, d)
    C = data.C

    def sym(A):
        return 0.5 * (A + A.T)

    return ScatterDecomp(sym(length * C.T @ full.Q @ C), sym(C.T @ Wk @ C), sym(C.T @ Bk @ C))


def ct_lda(data: FDataset, groups: Partition) -> LDAResult:
    """Fisher discriminants separating the time subintervals in ``groups``."""
    if groups.k < 2:
        raise DomainError("discriminant analysis needs at least two groups")
    sc = scatter_decomposition(data, groups)
    try:
        theta, V = linalg.eigh(sc.B, sc.W)
    except linalg.LinAlgError:
        raise RankError(
            "within-group scatter matrix is singular; use fewer variables or add a ridge term"
        ) from None
    w_eigs = linalg.eigvalsh(sc.W)
    if w_eigs[0] <= 1e-12 * max(w_eigs[-1], np.finfo(float).tiny):
        raise RankError(
            "within-group scatter matrix is singular; use fewer variables or add a ridge term"
        )
    theta, V = _descending(theta, V)
    s_max = min(groups.k - 1, data.p)
    keep = theta > POSITIVE_RTOL * max(theta[0], 0.0)
    keep[s_max:] = False
    theta, V = theta[keep], fix_signs(V[:, keep])

    scores = FDataset(data.basis, data.C @ V, tuple(f"LD{m + 1}" for m in range(V.shape[1])))
    means = np.array([V.T @ (data.C.T @ region_moments(data.basis, r).phi_bar) for r in groups.parts])
    return LDAResult(V, theta, scores, means.reshape(groups.k, V.shape[1]), groups.labels)


def cross_cov(x: FDataset, y: FDataset) -> np.ndarray:
    """CT cross-covariance ``C_x^T Q C_y`` of two datasets on the same basis."""
    if not x.basis.same_as(y.basis):
        raise BasisMismatchError("both blocks must use the same basis")
    return x.C.T @ region_moments(x.basis).Q @ y.C


def _inv_sqrt_factor(S: np.ndarray, which: str) -> np.ndarray:
    vals = linalg.eigvalsh(S)
    if vals[0] <= 1e-12 * max(vals[-1], np.finfo(float).tiny):
        raise RankError(f"CT covariance of the {which} block is singular")
    return linalg.cholesky(S, lower=True)


def ct_cca(x: FDataset, y: FDataset) -> CCAResult:
    """Canonical correlations between two blocks of curves."""
    Sxy = cross_cov(x, y)
    Sxx, Syy = ct_cov(x), ct_cov(y)
    Lx = _inv_sqrt_factor(Sxx, "x")
    Ly = _inv_sqrt_factor(Syy, "y")
    # whitened cross-covariance; its singular values are the canonical correlations
    M = linalg.solve_triangular(Lx, linalg.solve_triangular(Ly, Sxy.T, lower=True).T, lower=True)
    U, r, Vt = linalg.svd(M)
    s = min(x.p, y.p)
    U, r, V = U[:, :s], r[:s], Vt[:s].T
    keep = r**2 > POSITIVE_RTOL * max(r[0] ** 2, np.finfo(float).tiny) if s else np.zeros(0, bool)
    U, r, V = U[:, keep], r[keep], V[:, keep]

    A = linalg.solve_triangular(Lx.T, U, lower=False)
    B = linalg.solve_triangular(Ly.T, V, lower=False)
    A /= np.linalg.norm(A, axis=0)
    B /= np.linalg.norm(B, axis=0)
    # sign convention on the x side, carried to the y side so r stays >= 0
    flipped = fix_signs(A)
    signs = np.sign(np.sum(flipped * A, axis=0))
    A, B = flipped, B * signs
    r = np.clip(r, 0.0, 1.0)
    names = tuple(f"CV{i + 1}" for i in range(r.size))
    return CCAResult(
        r,
        A,
        B,
        FDataset(x.basis, x.C @ A, names),
        FDataset(y.basis, y.C @ B, names),
    )
