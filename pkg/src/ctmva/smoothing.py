"""Penalized least-squares smoothing of irregular series onto a shared basis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .basis import BasisSystem, eval_basis, penalty_matrix
from .errors import DimensionError, DomainError, InputError, RankError

AUTO = "auto"

# GCV search grid: 50 log-spaced multiples of a data-dependent scale
LAMBDA_GRID_SIZE = 50
LAMBDA_GRID_RANGE = (1e-8, 1e8)
# penalty eigenvalues below this fraction of the largest are exact zeros lost to roundoff
PENALTY_NULL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class LongSeries:
    """One variable's observations ``(t_i, z_i)``, sorted by time."""

    name: str
    t: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        z = np.asarray(self.z, dtype=float).ravel()
        if t.shape != z.shape:
            raise DimensionError(f"series {self.name!r}: {t.size} times but {z.size} values")
        if t.size == 0:
            raise InputError(f"series {self.name!r} has no observations")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(z))):
            raise DomainError(f"series {self.name!r} has non-finite observations")
        order = np.argsort(t, kind="stable")
        object.__setattr__(self, "t", t[order])
        object.__setattr__(self, "z", z[order])

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def window(self, lo: float, hi: float) -> "LongSeries":
        keep = (self.t >= lo) & (self.t <= hi)
        return LongSeries(self.name, self.t[keep], self.z[keep])


@dataclass(frozen=True)
class SmoothFit:
    coef: np.ndarray
    lam: float
    gcv: float
    dof: float
    resid_var: float


@dataclass(frozen=True, eq=False)
class FDataset:
    """``p`` curves ``x_u(t) = C[:, u] @ phi(t)`` sharing one basis."""

    basis: BasisSystem
    C: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        if C.ndim != 2 or C.shape[0] != self.basis.K:
            raise DimensionError(
                f"coefficient matrix must be K x p with K={self.basis.K}, got {C.shape}"
            )
        if not np.all(np.isfinite(C)):
            raise DomainError("coefficient matrix has non-finite entries")
        names = tuple(self.names) or tuple(f"x{u + 1}" for u in range(C.shape[1]))
        if len(names) != C.shape[1]:
            raise DimensionError(f"{len(names)} names for {C.shape[1]} curves")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "names", names)

    @property
    def p(self) -> int:
        return self.C.shape[1]

    def __call__(self, t) -> np.ndarray:
        """Curve values at ``t`` as a ``(len(t), p)`` array."""
        return eval_basis(self.basis, t) @ self.C

    def with_coef(self, C, names=None) -> "FDataset":
        """Same basis, new coefficients; names carry over when the curve count is unchanged."""
        if names is None:
            C = np.asarray(C, dtype=float)
            names = self.names if C.ndim == 2 and C.shape[1] == self.p else ()
        return FDataset(self.basis, C, names)


@dataclass
class _PenalizedSystem:
    """One series' design, reduced once and reused across smoothing parameters.

    The fit minimizes ``|B c - z|**2 + lam * |R c|**2`` with ``P = R^T R``.
    ``B`` is replaced by the triangular factor of its QR decomposition, so
    each candidate ``lam`` needs only an SVD of a ``2K x K`` stacked matrix;
    this stays accurate when ``lam * P`` dwarfs ``B^T B``.
    """

    B: np.ndarray
    z: np.ndarray
    RB: np.ndarray
    zB: np.ndarray
    RP: np.ndarray
    trace_btb: float
    trace_p: float

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def K(self) -> int:
        return self.B.shape[1]

    @classmethod
    def build(cls, series: LongSeries, basis: BasisSystem) -> "_PenalizedSystem":
        try:
            B = eval_basis(basis, series.t)
        except DomainError as exc:
            raise DomainError(f"series {series.name!r}: {exc}") from None
        Qb, RB = linalg.qr(B, mode="economic", check_finite=False)
        P = penalty_matrix(basis)
        vals, vecs = linalg.eigh(P)
        # roundoff in the penalty's null space would otherwise be amplified by a large lambda
        vals = np.where(vals > PENALTY_NULL_RTOL * vals[-1], vals, 0.0)
        RP = np.sqrt(vals)[:, None] * vecs.T
        return cls(B, series.z, RB, Qb.T @ series.z, RP, float(np.sum(B * B)), float(np.trace(P)))

    def scale(self) -> float:
        return self.trace_btb / self.trace_p if self.trace_p > 0 else 1.0

    def solve(self, lam: float) -> SmoothFit:
        A = np.vstack([self.RB, np.sqrt(lam) * self.RP]) if lam > 0 else self.RB
        rank_msg = f"penalized design is rank deficient at lambda={lam:g}; use lambda > 0 or more observations"
        if A.shape[0] < self.K:
            raise RankError(rank_msg)
        try:
            U, sv, Vt = linalg.svd(A, full_matrices=False, check_finite=False)
        except linalg.LinAlgError:
            raise RankError(rank_msg) from None
        if sv[-1] <= max(A.shape) * np.finfo(float).eps * sv[0]:
            raise RankError(rank_msg)
        Ub = U[: self.RB.shape[0]]
        coef = Vt.T @ ((Ub.T @ self.zB) / sv)
        dof = float(np.sum(Ub * Ub))
        resid = self.z - self.B @ coef
        rss = float(resid @ resid)
        resid_df = self.n - dof
        gcv = self.n * rss / resid_df**2 if resid_df > 1e-8 else np.inf
        resid_var = rss / resid_df if resid_df > 1e-8 else np.nan
        return SmoothFit(coef, float(lam), float(gcv), dof, float(resid_var))


def lambda_grid(scale: float = 1.0) -> np.ndarray:
    lo, hi = LAMBDA_GRID_RANGE
    return scale * np.logspace(np.log10(lo), np.log10(hi), LAMBDA_GRID_SIZE)


def _auto_fits(system: _PenalizedSystem, grid: np.ndarray) -> list[SmoothFit | None]:
    fits = []
    for lam in grid:
        try:
            fits.append(system.solve(lam))
        except RankError:
            fits.append(None)
    return fits


def _best(fits: Sequence[SmoothFit | None], name: str) -> SmoothFit:
    usable = [f for f in fits if f is not None and np.isfinite(f.gcv)]
    if not usable:
        raise RankError(f"series {name!r}: no smoothing parameter on the grid gives a usable fit")
    return min(usable, key=lambda f: f.gcv)


def smooth_series(series: LongSeries, basis: BasisSystem, lam: float | str = AUTO) -> SmoothFit:
    """Fit ``coef`` minimizing ``sum (z_i - coef @ phi(t_i))**2 + lam * coef @ P @ coef``.

    With ``lam="auto"`` the smoothing parameter minimizing GCV over a
    50-point log grid is used.
    """
    system = _PenalizedSystem.build(series, basis)
    if isinstance(lam, str):
        if lam != AUTO:
            raise DomainError(f"lambda must be a number or {AUTO!r}, got {lam!r}")
        if series.n < 4:
            raise DomainError(f"series {series.name!r}: automatic lambda needs >= 4 observations")
        return _best(_auto_fits(system, lambda_grid(system.scale())), series.name)
    lam = float(lam)
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    try:
        return system.solve(lam)
    except RankError as exc:
        raise RankError(f"series {series.name!r}: {exc}") from None


def smooth_dataset(
    series_list: Sequence[LongSeries],
    basis: BasisSystem,
    lambda_policy: str = "per_series",
    lam: float | str = AUTO,
    return_fits: bool = False,
):
    """Smooth every series onto ``basis``.

    Returns the :class:`FDataset`, or ``(dataset, fits)`` with
    ``return_fits=True``.

    ``lambda_policy="shared"`` with automatic selection picks one smoothing
    parameter minimizing the summed GCV score over all series.
    """
    if not series_list:
        raise InputError("no series to smooth")
    if lambda_policy not in ("shared", "per_series"):
        raise DomainError(f"unknown lambda policy {lambda_policy!r}")

    if lambda_policy == "per_series" or not isinstance(lam, str):
        fits = [smooth_series(s, basis, lam) for s in series_list]
    else:
        if lam != AUTO:
            raise DomainError(f"lambda must be a number or {AUTO!r}, got {lam!r}")
        systems = [_PenalizedSystem.build(s, basis) for s in series_list]
        for s in series_list:
            if s.n < 4:
                raise DomainError(f"series {s.name!r}: automatic lambda needs >= 4 observations")
        # one grid for all series so that the summed score compares like with like
        grid = lambda_grid(float(np.median([sys.scale() for sys in systems])))
        table = [_auto_fits(sys, grid) for sys in systems]
        totals = []
        for i in range(grid.size):
            col = [row[i] for row in table]
            ok = all(f is not None and np.isfinite(f.gcv) for f in col)
            totals.append(sum(f.gcv for f in col) if ok else np.inf)
        i_best = int(np.argmin(totals))
        if not np.isfinite(totals[i_best]):
            raise RankError("no shared smoothing parameter gives usable fits for every series")
        fits = [row[i_best] for row in table]

    C = np.column_stack([f.coef for f in fits])
    data = FDataset(basis, C, tuple(s.name for s in series_list))
    return (data, fits) if return_fits else data
