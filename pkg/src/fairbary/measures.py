"""One-dimensional empirical measures, quantiles, and transport costs.

This module provides the measure-level machinery used everywhere else:
sorted empirical measures with left-continuous quantile access, the
half-quadratic squared transport cost between real-valued measures, the
quantile-averaging barycenter oracle, and monotone-rearrangement maps to a
barycenter.

Conventions
-----------
* Squared transport cost is half-quadratic:
  ``W2^2(a, b) = integral of (1/2) * (Qa(t) - Qb(t))^2 dt`` over ``t in (0, 1)``.
  Report helpers expose both this convention and the unhalved one through an
  explicit flag; nothing converts silently.
* Quantile functions are left-continuous empirical inverse CDFs: the value at
  level ``t`` is the order statistic of rank ``ceil(t * n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "DomainInterval",
    "Weights",
    "EmpiricalMeasure",
    "QuantileFunction",
    "transport_cost",
    "w2_distance",
    "barycenter_oracle",
    "oracle_map",
    "minimax_center_upper_bound",
]


@dataclass(frozen=True)
class DomainInterval:
    """Open bounded outcome domain ``(lo, hi)``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise DomainError("domain endpoints must be finite")
        if not lo < hi:
            raise DomainError(f"domain requires lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)

    def contains(self, x, slack: float = 0.0):
        x = np.asarray(x, dtype=float)
        return (x >= self.lo - slack) & (x <= self.hi + slack)

    def as_tuple(self) -> tuple[float, float]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class Weights:
    """Known group weights on the simplex, at least two groups."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if w.size < 2:
            raise DomainError("weights require at least two groups")
        if np.any(w <= 0):
            raise DomainError("all weights must be strictly positive")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1, got {total}")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return int(self.w.size)

    @property
    def w_min(self) -> float:
        return float(self.w.min())

    def effective_size(self, sizes: Sequence[int]) -> float:
        """Effective sample size ``min_s n_s / w_s``."""
        n = np.asarray(sizes, dtype=float)
        if n.size != self.m:
            raise DomainError("one sample size per group required")
        return float(np.min(n / self.w))

    @classmethod
    def uniform(cls, m: int) -> "Weights":
        return cls(np.full(m, 1.0 / m))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Sorted one-dimensional sample with quantile access."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise DomainError("empirical measure requires at least one point")
        if np.any(~np.isfinite(pts)):
            raise DomainError("empirical measure points must be finite")
        if np.any(np.diff(pts) < 0):
            raise DomainError("points must be nondecreasing; use from_samples")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_samples(cls, values, domain: DomainInterval | None = None,
                     slack: float = 0.0) -> "EmpiricalMeasure":
        """Sort raw samples; optionally validate support against a domain."""
        pts = np.sort(np.asarray(values, dtype=float).ravel())
        if domain is not None and pts.size:
            ok = domain.contains(pts, slack=slack)
            if not np.all(ok):
                bad = pts[~ok][0]
                raise DomainError(
                    f"sample point {bad} outside [{domain.lo - slack}, "
                    f"{domain.hi + slack}]")
        return cls(pts)

    @property
    def size(self) -> int:
        return int(self.points.size)

    def quantile(self, t):
        """Left-continuous empirical inverse CDF at level(s) ``t`` in (0, 1)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any((t_arr <= 0.0) | (t_arr >= 1.0)):
            raise DomainError("quantile level must lie in the open interval (0, 1)")
        n = self.size
        idx = np.ceil(t_arr * n).astype(int) - 1
        idx = np.clip(idx, 0, n - 1)
        out = self.points[idx]
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def interp_quantile(self, t):
        """Continuous quantile estimate through midpoints ``(i - 1/2) / n``."""
        n = self.size
        t_arr = np.clip(np.asarray(t, dtype=float), 0.5 / n, 1.0 - 0.5 / n)
        mids = (np.arange(n) + 0.5) / n
        out = np.interp(t_arr, mids, self.points)
        return float(out) if np.isscalar(t) else out

    def cdf(self, z):
        """Continuous empirical CDF estimate (midpoint convention)."""
        n = self.size
        mids = (np.arange(n) + 0.5) / n
        out = np.interp(np.asarray(z, dtype=float), self.points, mids)
        return float(out) if np.isscalar(z) else out


@dataclass(frozen=True)
class QuantileFunction:
    """Tabulated quantile function on a strictly increasing grid in (0, 1)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if g.size != v.size or g.size < 2:
            raise DomainError("grid and values must share length >= 2")
        if np.any(np.diff(g) <= 0):
            raise DomainError("probability grid must be strictly increasing")
        if g[0] <= 0.0 or g[-1] >= 1.0:
            raise DomainError("probability grid must lie inside (0, 1)")
        if np.any(np.diff(v) < -1e-12 * max(1.0, float(np.abs(v).max()))):
            raise DomainError("quantile values must be nondecreasing")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.grid.size)

    def __call__(self, t):
        out = np.interp(np.asarray(t, dtype=float), self.grid, self.values)
        return float(out) if np.isscalar(t) else out

    def inverse_at(self, z):
        """Probability level(s) where the interpolated quantile reaches ``z``.

        Values outside the tabulated range clamp to the end levels.
        """
        v = np.maximum.accumulate(self.values)
        out = np.interp(np.asarray(z, dtype=float), v, self.grid)
        return float(out) if np.isscalar(z) else out

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,value\n")
            for t, v in zip(self.grid, self.values):
                fh.write(f"{float(t)!r},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "QuantileFunction":
        grid, values = [], []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "t,value":
                raise DomainError(f"unexpected quantile CSV header: {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                t, v = line.split(",")
                grid.append(float(t))
                values.append(float(v))
        return cls(np.asarray(grid), np.asarray(values))


def _merged_quantile_table(ms: Sequence[EmpiricalMeasure]):
    """Common refinement of the step quantile functions of several measures.

    Returns segment lengths and a matrix of per-measure quantile values that
    are constant on each segment, so squared-cost integrals are exact for the
    piecewise-constant convention.
    """
    sizes = [m.size for m in ms]
    bounds = np.unique(np.concatenate(
        [np.arange(1, n + 1) / n for n in sizes]))
    left = np.concatenate(([0.0], bounds[:-1]))
    lengths = bounds - left
    mids = 0.5 * (left + bounds)
    table = np.empty((len(ms), mids.size))
    for i, m in enumerate(ms):
        idx = np.ceil(mids * m.size).astype(int) - 1
        table[i] = m.points[np.clip(idx, 0, m.size - 1)]
    return lengths, table


def transport_cost(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Half-quadratic squared transport cost between two empirical measures.

    For equal sizes this is the exact sorted matching
    ``(1/n) * sum_i (1/2) * (a_(i) - b_(i))^2``.  For unequal sizes the step
    quantile functions are integrated on their merged probability grid.
    """
    if a.size == b.size:
        diff = a.points - b.points
        return float(0.5 * np.mean(diff * diff))
    lengths, table = _merged_quantile_table([a, b])
    diff = table[0] - table[1]
    return float(np.sum(lengths * 0.5 * diff * diff))


def w2_distance(a: EmpiricalMeasure, b: EmpiricalMeasure,
                convention: str = "half") -> float:
    """Transport distance with an explicit cost convention flag.

    ``convention="half"`` returns ``sqrt(transport_cost)``; ``"standard"``
    returns the usual 2-Wasserstein distance ``sqrt(2 * transport_cost)``.
    """
    cost = transport_cost(a, b)
    if convention == "half":
        return float(np.sqrt(cost))
    if convention == "standard":
        return float(np.sqrt(2.0 * cost))
    raise ConfigError(f"unknown convention {convention!r}")


DEFAULT_ORACLE_GRID = 1 << 12


def barycenter_oracle(ms: Sequence[EmpiricalMeasure], w: Weights,
                      grid_size: int = DEFAULT_ORACLE_GRID) -> QuantileFunction:
    """Quantile function of the weighted barycenter of 1D measures.

    In one dimension the barycenter's quantile function is the weighted
    average of the input quantile functions; this routine tabulates it on
    ``grid_size`` equispaced midpoint levels.
    """
    if len(ms) != w.m:
        raise DomainError(f"expected {w.m} measures, got {len(ms)}")
    if grid_size < 2:
        raise ConfigError("oracle grid size must be at least 2")
    grid = (np.arange(grid_size) + 0.5) / grid_size
    values = np.zeros(grid_size)
    for ws, m in zip(w.w, ms):
        values += ws * m.quantile(grid)
    return QuantileFunction(grid, values)


def oracle_map(source: EmpiricalMeasure, bary: QuantileFunction,
               knots=None, L: float = 8.0, min_grid: int = 16):
    """Monotone rearrangement from a sample onto a barycenter quantile table.

    Interpolates ``z -> Qbar(F_source(z))`` piecewise linearly on the given
    knot vector (default: the barycenter's own value range on 129 knots) and
    projects the result into the bi-Lipschitz class with constant ``L``.
    """
    from .maps import project_to_lipschitz

    if bary.size < min_grid:
        raise ConfigError(
            f"barycenter grid of size {bary.size} is too coarse "
            f"(need >= {min_grid})")
    if knots is None:
        lo, hi = source.points[0], source.points[-1]
        if hi <= lo:
            hi = lo + 1.0
        knots = np.linspace(lo, hi, 129)
    else:
        knots = np.asarray(getattr(knots, "knots", knots), dtype=float)
    raw = bary(source.cdf(knots))
    return project_to_lipschitz(knots, raw, L)


def minimax_center_upper_bound(ms: Sequence[EmpiricalMeasure],
                               w: Weights) -> float:
    """Upper bound on ``inf_nu max_s W2(m_s, nu)`` in the half convention.

    For two measures the quantile midpoint is the exact Chebyshev center, so
    the returned value is exact.  For more measures the weighted quantile
    barycenter is used, which is feasible and therefore an upper bound.
    """
    if len(ms) != w.m:
        raise DomainError(f"expected {w.m} measures, got {len(ms)}")
    lengths, table = _merged_quantile_table(list(ms))
    if w.m == 2:
        center = 0.5 * (table[0] + table[1])
    else:
        center = np.tensordot(w.w, table, axes=1)
    worst = 0.0
    for row in table:
        diff = row - center
        worst = max(worst, float(np.sum(lengths * 0.5 * diff * diff)))
    return float(np.sqrt(worst))
