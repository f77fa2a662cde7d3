"""B-spline and Fourier basis systems and their moment quantities.

Everything downstream is expressed through two region-dependent quantities:
the mean basis vector ``phi_bar`` and the centered Gram matrix ``Q`` of the
basis over a region (a finite union of subintervals of the domain).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    DimensionError,
    DomainError,
    NumericError,
    ParityError,
    PartitionError,
    UnsupportedBasisError,
)

__all__ = [
    "Interval",
    "Region",
    "Partition",
    "BasisSystem",
    "MomentCache",
    "PiecewisePoly",
    "make_basis",
    "eval_basis",
    "region_moments",
    "constant_rep_vector",
    "piecewise_poly",
    "penalty_matrix",
    "newton_cotes7",
]

# closed Newton-Cotes 7-point weights, in units of h/140 with h = (b - a) / 6
_NC7_WEIGHTS = np.array([41.0, 216.0, 27.0, 272.0, 27.0, 216.0, 41.0]) / 140.0

PSD_TOL = 1e-10


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]: need lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi


@dataclass(frozen=True)
class Region:
    """A finite union of disjoint subintervals, stored sorted.

    Segments that touch end to end are merged, so the stored segments are
    separated by gaps of positive length.
    """

    segments: tuple[Interval, ...]

    def __post_init__(self):
        segs = sorted(
            (s if isinstance(s, Interval) else Interval(*s) for s in self.segments),
            key=lambda s: s.lo,
        )
        if not segs:
            raise DomainError("empty region")
        merged = [segs[0]]
        for s in segs[1:]:
            last = merged[-1]
            if s.lo < last.hi:
                raise DomainError(
                    f"region segments overlap: [{last.lo}, {last.hi}] and [{s.lo}, {s.hi}]"
                )
            if s.lo == last.hi:
                merged[-1] = Interval(last.lo, s.hi)
            else:
                merged.append(s)
        object.__setattr__(self, "segments", tuple(merged))

    @classmethod
    def from_bounds(cls, bounds: Iterable[Sequence[float]]) -> "Region":
        return cls(tuple(Interval(a, b) for a, b in bounds))

    @classmethod
    def full(cls, interval: Interval) -> "Region":
        return cls((interval,))

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.segments))

    @property
    def lo(self) -> float:
        return self.segments[0].lo

    @property
    def hi(self) -> float:
        return self.segments[-1].hi

    def bounds(self) -> list[tuple[float, float]]:
        return [(s.lo, s.hi) for s in self.segments]

    def contains_point(self, t: float) -> bool:
        return any(s.lo <= t <= s.hi for s in self.segments)


@dataclass(frozen=True, eq=False)
class Partition:
    """A disjoint cover of the basis interval by labelled regions."""

    parts: tuple[Region, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.parts) != len(self.labels):
            raise PartitionError("one label per part required")
        if len(set(self.labels)) != len(self.labels):
            raise PartitionError("partition labels must be distinct")

    @property
    def k(self) -> int:
        return len(self.parts)

    @classmethod
    def from_triples(cls, triples: Sequence[tuple[float, float, object]], interval=None) -> "Partition":
        """Group ``(lo, hi, label)`` triples by label, in order of first appearance."""
        grouped: dict[str, list[tuple[float, float]]] = {}
        for lo, hi, label in triples:
            grouped.setdefault(str(label), []).append((float(lo), float(hi)))
        try:
            parts = tuple(Region.from_bounds(b) for b in grouped.values())
        except DomainError as exc:
            raise PartitionError(str(exc)) from None
        part = cls(parts, tuple(grouped))
        if interval is not None:
            part.validate(interval)
        return part

    def segments(self) -> list[tuple[float, float, int]]:
        """All segments as ``(lo, hi, part_index)`` sorted by ``lo``."""
        segs = [(s.lo, s.hi, i) for i, r in enumerate(self.parts) for s in r.segments]
        return sorted(segs)

    def validate(self, interval) -> None:
        lo, hi = interval
        segs = self.segments()
        if not segs:
            raise PartitionError("empty partition")
        tol = 1e-12 * (hi - lo)
        if abs(segs[0][0] - lo) > tol or abs(segs[-1][1] - hi) > tol:
            raise PartitionError(
                f"partition covers [{segs[0][0]}, {segs[-1][1]}], not the interval [{lo}, {hi}]"
            )
        for (a0, b0, _), (a1, b1, _) in zip(segs[:-1], segs[1:]):
            if a1 < b0 - tol:
                raise PartitionError(f"partition segments overlap near {a1}")
            if a1 > b0 + tol:
                raise PartitionError(f"partition has a gap between {b0} and {a1}")

    def label_at(self, t) -> np.ndarray:
        """Part index at each time; a shared boundary point goes to the lower index."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.full(t.shape, -1, dtype=int)
        for i, region in enumerate(self.parts):
            for s in region.segments:
                inside = (t >= s.lo) & (t <= s.hi) & (out == -1)
                out[inside] = i
        return out


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """A finite basis on an interval.

    For ``kind == "bspline"`` the ``knots`` are the distinct breakpoints,
    boundary knots included; the full clamped knot vector repeats each
    boundary ``order`` times.  For ``kind == "fourier"`` the functions are
    orthonormal on the interval with period equal to its length, ordered
    ``1, sin(w t), cos(w t), sin(2 w t), ...``.
    """

    kind: str
    interval: Interval
    K: int
    knots: np.ndarray | None = None
    order: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def nbreaks(self) -> int:
        return 0 if self.knots is None else len(self.knots)

    @cached_property
    def knot_vector(self) -> np.ndarray:
        if self.kind != "bspline":
            raise UnsupportedBasisError("knot vector is only defined for B-spline bases")
        lo, hi = self.interval
        return np.concatenate(
            [np.full(self.order - 1, lo), self.knots, np.full(self.order - 1, hi)]
        )

    @cached_property
    def _spline(self) -> BSpline:
        return BSpline(self.knot_vector, np.eye(self.K), self.order - 1, extrapolate=False)

    def derivative_spline(self, nu: int) -> BSpline:
        key = ("deriv", nu)
        if key not in self._cache:
            self._cache[key] = self._spline.derivative(nu) if nu else self._spline
        return self._cache[key]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "interval": [self.interval.lo, self.interval.hi], "K": self.K}
        if self.kind == "bspline":
            d["order"] = self.order
            d["knots"] = [float(x) for x in self.knots]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSystem":
        interval = Interval(*d["interval"])
        basis = make_basis(d["kind"], interval, int(d["K"]), int(d.get("order", 4)))
        if basis.kind == "bspline" and "knots" in d:
            knots = np.asarray(d["knots"], dtype=float)
            if knots.shape != basis.knots.shape or np.any(np.diff(knots) <= 0):
                raise DimensionError("stored knots inconsistent with K and order")
            return cls("bspline", interval, basis.K, knots, basis.order)
        return basis

    def same_as(self, other: "BasisSystem") -> bool:
        if self is other:
            return True
        if (self.kind, self.interval, self.K, self.order) != (
            other.kind,
            other.interval,
            other.K,
            other.order,
        ):
            return False
        if self.kind == "bspline":
            return bool(np.array_equal(self.knots, other.knots))
        return True


@dataclass(frozen=True, eq=False)
class MomentCache:
    region: Region
    phi_bar: np.ndarray
    Q: np.ndarray

    @property
    def length(self) -> float:
        return self.region.length


@dataclass(frozen=True, eq=False)
class PiecewisePoly:
    """Per-segment polynomial coefficients of a B-spline basis.

    ``coeff_blocks[j]`` is the 4 x K matrix ``L_j`` with
    ``(1, t, t**2, t**3) @ L_j == phi(t)`` on segment ``j``.  The same
    polynomials are also kept in the better conditioned local variable
    ``t - centers[j]`` as ``local_blocks``.
    """

    breakpoints: np.ndarray
    centers: np.ndarray
    local_blocks: np.ndarray
    coeff_blocks: np.ndarray

    @property
    def nseg(self) -> int:
        return len(self.breakpoints) - 1

    def segment_index(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        j = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(j, 0, self.nseg - 1)

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = self.segment_index(t)
        u = t - self.centers[j]
        powers = u[:, None] ** np.arange(4)
        return np.einsum("nd,ndk->nk", powers, self.local_blocks[j])


def make_basis(kind: str, interval: Interval | Sequence[float], K: int, order: int = 4) -> BasisSystem:
    """Build a B-spline basis with equally spaced knots, or an orthonormal Fourier basis."""
    if not isinstance(interval, Interval):
        interval = Interval(*interval)
    K = int(K)
    if kind == "bspline":
        order = int(order)
        if order < 2:
            raise DimensionError(f"B-spline order must be at least 2, got {order}")
        if K < order:
            raise DimensionError(f"B-spline basis needs K >= order ({order}), got K={K}")
        knots = np.linspace(interval.lo, interval.hi, K - order + 2)
        knots[0], knots[-1] = interval.lo, interval.hi
        return BasisSystem("bspline", interval, K, knots, order)
    if kind == "fourier":
        if K < 1:
            raise DimensionError(f"Fourier basis needs K >= 1, got K={K}")
        if K % 2 == 0:
            raise ParityError(f"Fourier basis needs odd K, got K={K}")
        return BasisSystem("fourier", interval, K)
    raise UnsupportedBasisError(f"unknown basis kind {kind!r}")


def _check_times(basis: BasisSystem, times) -> np.ndarray:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = basis.interval
    bad = ~((t >= lo) & (t <= hi))
    if bad.any():
        raise DomainError(
            f"{int(bad.sum())} time(s) outside [{lo}, {hi}], e.g. {t[bad][0]!r}"
        )
    return t


def _fourier_eval(basis: BasisSystem, t: np.ndarray, nu: int = 0) -> np.ndarray:
    lo, length = basis.interval.lo, basis.interval.length
    out = np.empty((t.size, basis.K))
    out[:, 0] = length ** -0.5 if nu == 0 else 0.0
    m = np.arange(1, (basis.K - 1) // 2 + 1)
    omega = 2.0 * np.pi * m / length
    arg = np.outer(t - lo, omega)
    scale = np.sqrt(2.0 / length) * omega**nu
    # d^nu/dt^nu of sin and cos cycles through a phase shift of nu * pi / 2
    shift = nu * np.pi / 2.0
    out[:, 1::2] = scale * np.sin(arg + shift)
    out[:, 2::2] = scale * np.cos(arg + shift)
    return out


def _bspline_eval(basis: BasisSystem, t: np.ndarray, nu: int = 0) -> np.ndarray:
    spl = basis.derivative_spline(nu)
    out = spl(t)
    # extrapolate=False yields nan exactly at the right boundary for some scipy versions
    at_hi = t == basis.interval.hi
    if at_hi.any():
        out[at_hi] = spl(np.nextafter(basis.interval.hi, -np.inf))
    return np.asarray(out, dtype=float)


def eval_basis(basis: BasisSystem, times, nu: int = 0) -> np.ndarray:
    """Evaluate the basis (or its ``nu``-th derivative) at ``times``; returns ``(len(times), K)``."""
    t = _check_times(basis, times)
    if basis.kind == "fourier":
        return _fourier_eval(basis, t, nu)
    return _bspline_eval(basis, t, nu)


def constant_rep_vector(basis: BasisSystem) -> np.ndarray:
    """Coefficient vector ``w`` with ``w @ phi(t) == 1`` for every t."""
    if basis.kind == "bspline":
        return np.ones(basis.K)
    w = np.zeros(basis.K)
    w[0] = np.sqrt(basis.interval.length)
    return w


def newton_cotes7(a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the closed 7-point Newton-Cotes rule on [a, b].

    Exact for polynomials up to degree 7, hence for products of two cubics.
    """
    nodes = np.linspace(a, b, 7)
    return nodes, _NC7_WEIGHTS * (b - a) / 6.0


def _gauss_legendre(a: float, b: float, npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), w * half


def _bspline_nodes(basis: BasisSystem, segments: Iterable[tuple[float, float]], degree: int):
    """Composite quadrature nodes exact for piecewise polynomials of ``degree`` between knots."""
    nodes, weights = [], []
    for a, b in segments:
        inner = basis.knots[(basis.knots > a) & (basis.knots < b)]
        cuts = np.concatenate([[a], inner, [b]])
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if degree <= 7:
                x, w = newton_cotes7(lo, hi)
            else:
                x, w = _gauss_legendre(lo, hi, degree // 2 + 1)
            # stay on this segment's polynomial piece where derivatives jump at knots
            x[0], x[-1] = np.nextafter(lo, hi), np.nextafter(hi, lo)
            nodes.append(x)
            weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _fourier_nodes(basis: BasisSystem, segments: Iterable[tuple[float, float]]):
    # highest frequency in a product of two basis functions is (K - 1) cycles per period
    nodes, weights = [], []
    cycles_per_length = max(basis.K - 1, 1) / basis.interval.length
    for a, b in segments:
        panels = int(np.ceil(2.0 * cycles_per_length * (b - a))) + 1
        cuts = np.linspace(a, b, panels + 1)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            x, w = _gauss_legendre(lo, hi, 16)
            nodes.append(x)
            weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _as_region(basis: BasisSystem, region) -> Region:
    if region is None:
        return Region.full(basis.interval)
    if isinstance(region, Interval):
        region = Region((region,))
    elif not isinstance(region, Region):
        region = Region.from_bounds(region)
    for s in region.segments:
        if not basis.interval.contains(s):
            raise DomainError(
                f"region segment [{s.lo}, {s.hi}] not inside basis interval "
                f"[{basis.interval.lo}, {basis.interval.hi}]"
            )
    return region


def basis_integrals(basis: BasisSystem, region=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(int_S phi, int_S phi phi^T)`` over a region."""
    region = _as_region(basis, region)
    if basis.kind == "fourier":
        x, w = _fourier_nodes(basis, region.bounds())
    else:
        x, w = _bspline_nodes(basis, region.bounds(), 2 * (basis.order - 1))
    phi = eval_basis(basis, x)
    return phi.T @ w, (phi * w[:, None]).T @ phi


def region_moments(basis: BasisSystem, region=None) -> MomentCache:
    """Mean basis vector and centered Gram matrix of the basis over ``region``.

    ``region`` may be a :class:`Region`, an :class:`Interval`, a list of
    ``(lo, hi)`` pairs, or ``None`` for the whole basis interval.
    """
    region = _as_region(basis, region)
    length = region.length
    full = len(region.segments) == 1 and region.segments[0] == basis.interval
    if basis.kind == "fourier" and full:
        phi_bar = np.zeros(basis.K)
        phi_bar[0] = length**-0.5
        Q = np.eye(basis.K) / length
        Q[0, 0] = 0.0
        return MomentCache(region, phi_bar, Q)
    if full and "full_moments" in basis._cache:
        return basis._cache["full_moments"]

    integral, gram = basis_integrals(basis, region)
    phi_bar = integral / length
    Q = gram / length - np.outer(phi_bar, phi_bar)
    Q = 0.5 * (Q + Q.T)
    if not np.all(np.isfinite(Q)):
        raise NumericError("non-finite centered Gram matrix")
    lam_min = np.linalg.eigvalsh(Q)[0]
    if lam_min < -PSD_TOL * max(1.0, np.abs(Q).max()):
        raise NumericError(f"centered Gram matrix not PSD (min eigenvalue {lam_min:.3e})")
    out = MomentCache(region, phi_bar, Q)
    if full:
        basis._cache["full_moments"] = out
    return out


def piecewise_poly(basis: BasisSystem) -> PiecewisePoly:
    """Monomial coefficients of every basis function on every inter-knot segment."""
    if basis.kind != "bspline":
        raise UnsupportedBasisError("piecewise polynomial form requires a B-spline basis")
    if basis.order > 4:
        raise UnsupportedBasisError(f"piecewise polynomial form limited to order <= 4, got {basis.order}")
    if "pp" in basis._cache:
        return basis._cache["pp"]
    bk = basis.knots
    centers = 0.5 * (bk[:-1] + bk[1:])
    nseg = len(centers)
    local = np.zeros((nseg, 4, basis.K))
    factorial = 1.0
    for d in range(basis.order):
        if d:
            factorial *= d
        local[:, d, :] = _bspline_eval(basis, centers, d) / factorial

    absolute = np.zeros_like(local)
    for e in range(4):
        for d in range(e, 4):
            absolute[:, e, :] += local[:, d, :] * (comb(d, e) * (-centers) ** (d - e))[:, None]
    pp = PiecewisePoly(bk.copy(), centers, local, absolute)
    basis._cache["pp"] = pp
    return pp


def penalty_matrix(basis: BasisSystem) -> np.ndarray:
    """Roughness penalty ``int phi''(t) phi''(t)^T dt`` over the basis interval."""
    if "penalty" in basis._cache:
        return basis._cache["penalty"]
    if basis.kind == "fourier":
        m = np.arange(1, (basis.K - 1) // 2 + 1)
        omega4 = (2.0 * np.pi * m / basis.interval.length) ** 4
        P = np.diag(np.concatenate([[0.0], np.repeat(omega4, 2)]))
    else:
        if basis.order < 3:
            raise UnsupportedBasisError("curvature penalty needs B-spline order >= 3")
        x, w = _bspline_nodes(basis, [tuple(basis.interval)], 2 * (basis.order - 3))
        d2 = eval_basis(basis, x, nu=2)
        P = (d2 * w[:, None]).T @ d2
        P = 0.5 * (P + P.T)
    basis._cache["penalty"] = P
    return P
