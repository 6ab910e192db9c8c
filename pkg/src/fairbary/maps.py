"""Piecewise-linear, strictly increasing, bi-Lipschitz maps and congruent families.

Maps live on a knot grid spanning the outcome domain and extend linearly with
unit slope outside it, so evaluation is defined on all of R.  A congruent
family is a collection of such maps whose inverses average, under the group
weights, to the identity on the grid; in this representation congruency is a
set of linear equalities on the inverse knot values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._util import dumps17
from .errors import DomainError, InfeasibilityError
from .measures import DomainInterval, Weights

__all__ = [
    "KnotGrid",
    "MonotoneMap",
    "CongruentFamily",
    "invert",
    "make_congruent",
    "sieve_level",
    "project_to_lipschitz",
]

# Relative tolerance used when validating slope bounds; absorbs float noise
# from projections without admitting materially infeasible maps.
_SLOPE_RTOL = 1e-9


@dataclass(frozen=True)
class KnotGrid:
    """Strictly increasing knot vector; sieve grids span the outcome domain."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float).ravel()
        if k.size < 2:
            raise DomainError("knot grid needs at least two knots")
        if np.any(np.diff(k) <= 0):
            raise DomainError("knots must be strictly increasing")
        k = np.ascontiguousarray(k)
        k.setflags(write=False)
        object.__setattr__(self, "knots", k)

    @classmethod
    def uniform(cls, omega, level: int) -> "KnotGrid":
        """Equispaced grid with ``2**level`` intervals spanning ``omega``."""
        if level < 0:
            raise DomainError("sieve level must be nonnegative")
        lo, hi = (omega.lo, omega.hi) if isinstance(omega, DomainInterval) else omega
        return cls(np.linspace(float(lo), float(hi), (1 << level) + 1))

    @property
    def size(self) -> int:
        """Number of intervals K."""
        return int(self.knots.size - 1)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.knots)

    def refine(self) -> "KnotGrid":
        """Split every interval in half (keeps the sieve nested)."""
        k = self.knots
        mids = 0.5 * (k[:-1] + k[1:])
        return KnotGrid(np.sort(np.concatenate([k, mids])))


def _check_slopes(knots: np.ndarray, values: np.ndarray, L: float,
                  what: str = "map") -> None:
    slopes = np.diff(values) / np.diff(knots)
    lo = (1.0 / L) * (1.0 - _SLOPE_RTOL)
    hi = L * (1.0 + _SLOPE_RTOL)
    bad = np.where((slopes < lo) | (slopes > hi))[0]
    if bad.size:
        k = int(bad[0])
        raise DomainError(
            f"{what} slope {slopes[k]:.6g} outside [1/L, L] = "
            f"[{1.0 / L:.6g}, {L:.6g}] on knot interval "
            f"[{knots[k]:.6g}, {knots[k + 1]:.6g}] (k={k})")


@dataclass(frozen=True)
class MonotoneMap:
    """Increasing piecewise-linear map with unit-slope linear extensions.

    Slopes between consecutive knots stay in ``[1/L, L]``; outside the knot
    range the map continues as ``z + c_inf`` below and ``z + c_sup`` above.
    """

    knots: np.ndarray
    values: np.ndarray
    L: float

    def __post_init__(self):
        k = np.ascontiguousarray(np.asarray(self.knots, dtype=float).ravel())
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float).ravel())
        if k.size != v.size or k.size < 2:
            raise DomainError("knots and values must share length >= 2")
        if np.any(np.diff(k) <= 0):
            raise DomainError("knots must be strictly increasing")
        L = float(self.L)
        if not L > 1.0:
            raise DomainError(f"Lipschitz bound must exceed 1, got {L}")
        _check_slopes(k, v, L)
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "L", L)

    @property
    def c_inf(self) -> float:
        return float(self.values[0] - self.knots[0])

    @property
    def c_sup(self) -> float:
        return float(self.values[-1] - self.knots[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def __call__(self, z):
        z_arr = np.asarray(z, dtype=float)
        out = np.interp(z_arr, self.knots, self.values)
        out = np.where(z_arr < self.knots[0], z_arr + self.c_inf, out)
        out = np.where(z_arr > self.knots[-1], z_arr + self.c_sup, out)
        return float(out) if np.isscalar(z) else out

    def inverse(self) -> "MonotoneMap":
        """Exact inverse: swap knot and value vectors."""
        return MonotoneMap(self.values, self.knots, self.L)

    @classmethod
    def identity(cls, grid: KnotGrid, L: float) -> "MonotoneMap":
        return cls(grid.knots, grid.knots.copy(), L)

    def to_dict(self) -> dict:
        return {
            "knots": [float(x) for x in self.knots],
            "values": [float(x) for x in self.values],
            "c_inf": self.c_inf,
            "c_sup": self.c_sup,
            "L": self.L,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonotoneMap":
        m = cls(np.asarray(d["knots"]), np.asarray(d["values"]), float(d["L"]))
        for key, got in (("c_inf", m.c_inf), ("c_sup", m.c_sup)):
            if key in d and abs(float(d[key]) - got) > 1e-12 * (1 + abs(got)):
                raise DomainError(f"inconsistent {key} in serialized map")
        return m

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def invert(m: MonotoneMap) -> MonotoneMap:
    """Functional alias for :meth:`MonotoneMap.inverse`."""
    return m.inverse()


def project_to_lipschitz(knots, values, L: float,
                         anchor: int | None = None) -> MonotoneMap:
    """Clip slopes into ``[1/L, L]`` and rebuild values around an anchor knot.

    The anchor knot keeps its raw value (default: middle knot), so the
    projection only deforms regions whose raw slopes violate the box.
    """
    knots = np.asarray(getattr(knots, "knots", knots), dtype=float)
    values = np.asarray(values, dtype=float)
    deltas = np.diff(knots)
    slopes = np.diff(values) / deltas
    slopes = np.clip(slopes, 1.0 / L, L)
    if anchor is None:
        anchor = knots.size // 2
    rises = slopes * deltas
    out = np.empty_like(values)
    out[anchor] = values[anchor]
    if anchor < knots.size - 1:
        out[anchor + 1:] = values[anchor] + np.cumsum(rises[anchor:])
    if anchor > 0:
        out[:anchor] = values[anchor] - np.cumsum(rises[:anchor][::-1])[::-1]
    return MonotoneMap(knots, out, L)


_CONGRUENCY_TOL = 1e-10


@dataclass(frozen=True)
class CongruentFamily:
    """Maps whose inverses average to the identity on a shared knot grid.

    The family is stored through the inverse maps, which all live on one grid
    in the barycenter domain; forward maps are recovered by exact inversion.
    """

    inverses: tuple
    weights: Weights
    maps: tuple = field(init=False)

    def __post_init__(self):
        invs = tuple(self.inverses)
        if len(invs) != self.weights.m:
            raise DomainError("one inverse map per weight required")
        base = invs[0].knots
        for inv in invs[1:]:
            if inv.knots.size != base.size or not np.array_equal(inv.knots, base):
                raise DomainError("family inverses must share one knot grid")
        resid = self._knot_residual(invs, self.weights)
        if resid > _CONGRUENCY_TOL:
            raise DomainError(
                f"congruency residual {resid:.3e} exceeds {_CONGRUENCY_TOL}")
        object.__setattr__(self, "inverses", invs)
        object.__setattr__(self, "maps", tuple(inv.inverse() for inv in invs))

    @staticmethod
    def _knot_residual(invs, weights) -> float:
        z = invs[0].knots
        acc = np.zeros_like(z)
        for ws, inv in zip(weights.w, invs):
            acc += ws * inv.values
        return float(np.max(np.abs(acc - z)))

    @property
    def m(self) -> int:
        return len(self.inverses)

    @property
    def grid(self) -> KnotGrid:
        return KnotGrid(self.inverses[0].knots)

    @property
    def L(self) -> float:
        return max(inv.L for inv in self.inverses)

    def congruency_residual(self, dense: int = 0) -> float:
        """Max deviation of the weighted inverse average from the identity.

        With ``dense > 0`` the check also runs on that many equispaced points
        between the knots; piecewise-linear maps on a shared grid combine
        linearly, so this only picks up floating-point error.
        """
        resid = self._knot_residual(self.inverses, self.weights)
        if dense > 0:
            z0, z1 = self.inverses[0].knots[0], self.inverses[0].knots[-1]
            zs = np.linspace(z0, z1, dense)
            acc = np.zeros_like(zs)
            for ws, inv in zip(self.weights.w, self.inverses):
                acc += ws * inv(zs)
            resid = max(resid, float(np.max(np.abs(acc - zs))))
        return resid

    @classmethod
    def identity(cls, grid: KnotGrid, w: Weights, L: float) -> "CongruentFamily":
        ident = MonotoneMap.identity(grid, L)
        return cls(tuple(ident for _ in range(w.m)), w)

    def to_dict(self) -> dict:
        return {
            "weights": [float(x) for x in self.weights.w],
            "maps": [m.to_dict() for m in self.maps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CongruentFamily":
        w = Weights(np.asarray(d["weights"]))
        maps = [MonotoneMap.from_dict(md) for md in d["maps"]]
        return cls(tuple(m.inverse() for m in maps), w)

    def to_json(self) -> str:
        return dumps17(self.to_dict())


def make_congruent(inverse_values, grid: KnotGrid, w: Weights,
                   L: float) -> CongruentFamily:
    """Complete ``M - 1`` inverse knot-value rows into a congruent family.

    The last inverse is pinned by the constraint
    ``sum_s w_s * v_s(z_k) = z_k`` at every knot.  Slope feasibility of the
    induced inverse is an explicit check: an empty feasible set for the
    configured ``L`` raises instead of silently bending the family.
    """
    vals = np.asarray(inverse_values, dtype=float)
    if vals.ndim == 1:
        vals = vals[None, :]
    if vals.shape[0] != w.m - 1:
        raise DomainError(
            f"expected {w.m - 1} inverse rows for {w.m} groups, "
            f"got {vals.shape[0]}")
    z = grid.knots
    if vals.shape[1] != z.size:
        raise DomainError("inverse rows must have one value per knot")
    for s in range(vals.shape[0]):
        _check_slopes(z, vals[s], L, what=f"given inverse {s}")
    induced = (z - np.tensordot(w.w[:-1], vals, axes=1)) / w.w[-1]
    slopes = np.diff(induced) / grid.deltas
    lo = (1.0 / L) * (1.0 - _SLOPE_RTOL)
    hi = L * (1.0 + _SLOPE_RTOL)
    bad = np.where((slopes < lo) | (slopes > hi))[0]
    if bad.size:
        k = int(bad[0])
        raise InfeasibilityError(
            f"induced inverse slope {slopes[k]:.6g} outside "
            f"[{1.0 / L:.6g}, {L:.6g}] on knot interval "
            f"[{z[k]:.6g}, {z[k + 1]:.6g}] (k={k})")
    invs = [MonotoneMap(z, vals[s], L) for s in range(vals.shape[0])]
    invs.append(MonotoneMap(z, induced, L))
    return CongruentFamily(tuple(invs), w)


def sieve_level(n_tilde: float, alpha: float, beta: float) -> int:
    """Sieve resolution from the sample-size rule.

    Returns the integer ``j >= 0`` with
    ``2**j <= (n_tilde / ln(n_tilde))**(1 / (alpha + beta)) <= 2**(j + 1)``,
    clamped to 0 when the target drops below 1.
    """
    if alpha <= 0 or beta < 0:
        raise DomainError("need alpha > 0 and beta >= 0")
    n_tilde = float(n_tilde)
    if n_tilde <= 0:
        raise DomainError("effective sample size must be positive")
    if n_tilde <= math.e:
        warnings.warn(
            "effective sample size too small for the sieve rule; using level 0",
            RuntimeWarning, stacklevel=2)
        return 0
    target = (n_tilde / math.log(n_tilde)) ** (1.0 / (alpha + beta))
    if target < 1.0:
        return 0
    j = int(math.floor(math.log2(target)))
    while (1 << (j + 1)) < target:
        j += 1
    while j > 0 and (1 << j) > target:
        j -= 1
    return j
