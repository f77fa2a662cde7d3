"""Continuous-time mean, covariance and correlation, centering and detrending."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSystem, Interval, constant_rep_vector, make_basis, region_moments
from .errors import CTMVAError, DegenerateVarianceError, DomainError
from .smoothing import AUTO, FDataset, LongSeries, smooth_dataset

# a curve whose CT variance is below this fraction of its mean square is treated as constant
DEGENERATE_VAR_RTOL = 1e-14

OK = "ok"
INSUFFICIENT_OVERLAP = "insufficient_overlap"
INSUFFICIENT_OBS = "insufficient_obs"
DEGENERATE = "degenerate"


@dataclass(frozen=True, eq=False)
class CTSummary:
    mean: np.ndarray
    cov: np.ndarray
    cor: np.ndarray


@dataclass(frozen=True)
class PairCorResult:
    r: float | None
    overlap: tuple[float, float]
    n_u: int
    n_v: int
    status: str
    message: str = ""


def ct_mean(data: FDataset, region=None) -> np.ndarray:
    """Time average of each curve over ``region`` (default: the whole interval)."""
    return data.C.T @ region_moments(data.basis, region).phi_bar


def ct_cov(data: FDataset, region=None) -> np.ndarray:
    """Continuous-time covariance matrix ``C^T Q C``."""
    S = data.C.T @ region_moments(data.basis, region).Q @ data.C
    return 0.5 * (S + S.T)


def _check_variances(data: FDataset, S: np.ndarray, region=None) -> np.ndarray:
    var = np.diag(S).copy()
    mean = ct_mean(data, region)
    mean_square = var + mean**2
    bad = (var <= 0) | (var <= DEGENERATE_VAR_RTOL * mean_square)
    if bad.any():
        names = [data.names[u] for u in np.flatnonzero(bad)]
        raise DegenerateVarianceError(f"curve(s) with zero CT variance: {', '.join(names)}")
    return var


def cov_to_cor(S: np.ndarray) -> np.ndarray:
    d = 1.0 / np.sqrt(np.diag(S))
    R = S * np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return np.clip(R, -1.0, 1.0)


def ct_cor(data: FDataset, region=None) -> np.ndarray:
    """Continuous-time correlation matrix."""
    S = ct_cov(data, region)
    _check_variances(data, S, region)
    return cov_to_cor(S)


def ct_summary(data: FDataset, region=None) -> CTSummary:
    S = ct_cov(data, region)
    _check_variances(data, S, region)
    return CTSummary(ct_mean(data, region), S, cov_to_cor(S))


def center(data: FDataset) -> FDataset:
    """Subtract each curve's time average, staying in the same basis."""
    w = constant_rep_vector(data.basis)
    phi_bar = region_moments(data.basis).phi_bar
    return data.with_coef(data.C - np.outer(w, phi_bar @ data.C))


def detrend_common(data: FDataset) -> FDataset:
    """Subtract the cross-sectional mean curve from every curve."""
    if data.p < 2:
        raise DomainError("detrending needs at least two curves")
    return data.with_coef(data.C - data.C.mean(axis=1, keepdims=True))


def trend_r2(data: FDataset, grid_size: int = 1000) -> float:
    """Pointwise R^2 of the cross-sectional mean curve as a fit to all curves.

    Values near 1 indicate a strong shared trend that should be removed
    before computing correlations.
    """
    if data.p < 2:
        raise DomainError("trend R^2 needs at least two curves")
    lo, hi = data.basis.interval
    X = data(np.linspace(lo, hi, int(grid_size)))
    trend = X.mean(axis=1, keepdims=True)
    total = float(((X - X.mean()) ** 2).sum())
    if total <= 0:
        raise DegenerateVarianceError("curves have zero total variation")
    return 1.0 - float(((X - trend) ** 2).sum()) / total


def default_pair_basis(window: Interval, n_min: int) -> BasisSystem:
    """Cubic B-splines with ``K = max(8, min(40, n_min // 2))`` on the overlap window."""
    K = max(8, min(40, n_min // 2))
    return make_basis("bspline", window, K, 4)


def pairwise_ct_cor(
    u: LongSeries,
    v: LongSeries,
    basis_policy: Callable[[Interval, int], BasisSystem] | int | None = None,
    min_obs: int = 8,
    min_overlap: float = 0.0,
    lam: float | str = AUTO,
) -> PairCorResult:
    """CT correlation of two series over the overlap of their time ranges.

    Pairs failing the minimum-data rules get a status code instead of a
    correlation; nothing is raised for them.
    ``basis_policy`` is ``None`` (default sizing rule), a fixed cubic
    B-spline dimension, or a callable ``(window, n_min) -> BasisSystem``.
    """
    lo = max(u.t[0], v.t[0])
    hi = min(u.t[-1], v.t[-1])
    overlap = (float(lo), float(hi))
    if hi <= lo or hi - lo < min_overlap:
        n_u = int(((u.t >= lo) & (u.t <= hi)).sum()) if hi >= lo else 0
        n_v = int(((v.t >= lo) & (v.t <= hi)).sum()) if hi >= lo else 0
        return PairCorResult(None, overlap, n_u, n_v, INSUFFICIENT_OVERLAP)
    uw, vw = u.window(lo, hi), v.window(lo, hi)
    if min(uw.n, vw.n) < min_obs:
        return PairCorResult(None, overlap, uw.n, vw.n, INSUFFICIENT_OBS)

    window = Interval(lo, hi)
    n_min = min(uw.n, vw.n)
    try:
        if basis_policy is None:
            basis = default_pair_basis(window, n_min)
        elif callable(basis_policy):
            basis = basis_policy(window, n_min)
        else:
            basis = make_basis("bspline", window, int(basis_policy), 4)
        data = smooth_dataset([uw, vw], basis, "per_series", lam)
        r = float(ct_cor(data)[0, 1])
    except CTMVAError as exc:
        return PairCorResult(None, overlap, uw.n, vw.n, DEGENERATE, str(exc))
    return PairCorResult(r, overlap, uw.n, vw.n, OK)


def pairwise_table(
    series_list: Sequence[LongSeries],
    threads: int = 1,
    **kwargs,
) -> list[tuple[str, str, PairCorResult]]:
    """``pairwise_ct_cor`` for every unordered pair, in input order."""
    pairs = list(combinations(range(len(series_list)), 2))

    def job(ij):
        i, j = ij
        return series_list[i].name, series_list[j].name, pairwise_ct_cor(
            series_list[i], series_list[j], **kwargs
        )

    if threads <= 1:
        return [job(ij) for ij in pairs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, pairs))
