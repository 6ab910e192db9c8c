"""Potential pairs attached to monotone maps and the multiple correlation.

For a strictly increasing map ``theta`` with inverse ``theta_inv``, the pair

* ``u_dagger(z) = integral from base to z of theta_inv``
* ``u(x) = sup_z (x z - u_dagger(z))``

is evaluated exactly: ``u_dagger`` is piecewise quadratic (prefix integrals of
a piecewise-linear integrand) and the supremum defining ``u`` is attained at
``z = theta(x)``, giving the closed form ``u(x) = x theta(x) -
u_dagger(theta(x))``.  The weighted sum of expected ``u`` values over the
group measures is the multiple correlation minimized by the barycenter's
optimal maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .maps import CongruentFamily, MonotoneMap
from .measures import EmpiricalMeasure, Weights

__all__ = [
    "PotentialPair",
    "CorrelationValue",
    "QuadratureSpec",
    "multiple_correlation",
    "correlation_gap",
]

MIN_QUADRATURE_RESOLUTION = 1 << 10


class PotentialPair:
    """Exact evaluators for ``(u_dagger, u)`` of one monotone map.

    Parameters
    ----------
    inverse : MonotoneMap
        The map's inverse on its knot grid (barycenter side).
    base_point : float, optional
        Lower limit of the ``u_dagger`` integral.  Defaults to 0 when the
        grid straddles 0 and to the lowest knot otherwise; constant shifts of
        ``u_dagger`` shift ``u`` by a constant and cancel in all correlation
        differences.
    """

    def __init__(self, inverse: MonotoneMap, base_point: float | None = None):
        self.inverse = inverse
        z = inverse.knots
        v = inverse.values
        if base_point is None:
            base_point = 0.0 if z[0] <= 0.0 <= z[-1] else float(z[0])
        if not z[0] <= base_point <= z[-1]:
            raise DomainError(
                f"base point {base_point} outside the knot range "
                f"[{z[0]}, {z[-1]}]")
        self.base_point = float(base_point)
        self._z = z
        self._v = v
        self._deltas = np.diff(z)
        self._slopes = np.diff(v) / self._deltas
        # prefix[k] = integral of the inverse from z[0] to z[k]
        seg = 0.5 * (v[:-1] + v[1:]) * self._deltas
        self._prefix = np.concatenate(([0.0], np.cumsum(seg)))
        self._hat_base = hat_integral_weights(z, np.asarray([self.base_point]))[0]
        self._p_base = float(self._hat_base @ v)

    # -- u_dagger -----------------------------------------------------------

    def _raw_integral(self, t: np.ndarray) -> np.ndarray:
        """Integral of the (extended) inverse from the first knot to ``t``."""
        z, v = self._z, self._v
        j = np.clip(np.searchsorted(z, t, side="right") - 1, 0, z.size - 2)
        d = t - z[j]
        out = self._prefix[j] + v[j] * d + 0.5 * self._slopes[j] * d * d
        below = t < z[0]
        if np.any(below):
            tb = t[below]
            c_lo = v[0] - z[0]
            out[below] = -(0.5 * (z[0] ** 2 - tb ** 2) + c_lo * (z[0] - tb))
        above = t > z[-1]
        if np.any(above):
            ta = t[above]
            c_hi = v[-1] - z[-1]
            out[above] = (self._prefix[-1] + 0.5 * (ta ** 2 - z[-1] ** 2)
                          + c_hi * (ta - z[-1]))
        return out

    def u_dagger(self, z):
        """Convex potential ``integral from base to z of the inverse map``."""
        t = np.atleast_1d(np.asarray(z, dtype=float))
        out = self._raw_integral(t) - self._p_base
        return float(out[0]) if np.isscalar(z) else out.reshape(np.shape(z))

    # -- forward map and conjugate ------------------------------------------

    def theta(self, x):
        """Forward map (inverse of the stored inverse), defined on all of R."""
        x_arr = np.asarray(x, dtype=float)
        z, v = self._z, self._v
        out = np.interp(x_arr, v, z)
        out = np.where(x_arr < v[0], x_arr + (z[0] - v[0]), out)
        out = np.where(x_arr > v[-1], x_arr + (z[-1] - v[-1]), out)
        return float(out) if np.isscalar(x) else out

    def u(self, x):
        """Convex conjugate of ``u_dagger``; the sup is attained at theta(x)."""
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        z_star = self.theta(x_arr)
        out = x_arr * z_star - (self._raw_integral(z_star) - self._p_base)
        return float(out[0]) if np.isscalar(x) else out.reshape(np.shape(x))

    @classmethod
    def from_forward(cls, forward: MonotoneMap,
                     base_point: float | None = None) -> "PotentialPair":
        return cls(forward.inverse(), base_point)


def hat_integral_weights(knots: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Integrals of the grid hat functions from the first knot to each ``t``.

    Returns a matrix ``W`` with ``W[i, k] = integral_{knots[0]}^{t[i]}
    phi_k``, including the unit-slope extension terms (all mass below the
    grid goes to the first knot's coordinate, above to the last).
    """
    z = np.asarray(knots, dtype=float)
    t = np.asarray(t, dtype=float)
    K = z.size - 1
    deltas = np.diff(z)
    halfw = np.zeros(K + 1)
    halfw[:-1] += 0.5 * deltas
    halfw[1:] += 0.5 * deltas
    out = np.zeros((t.size, K + 1))
    j = np.clip(np.searchsorted(z, t, side="right") - 1, 0, K - 1)
    inner = (t >= z[0]) & (t <= z[-1])
    below = t < z[0]
    above = t > z[-1]
    for i in range(t.size):
        if below[i]:
            out[i, 0] = t[i] - z[0]
            continue
        ji = int(j[i])
        if above[i]:
            out[i, :] = halfw
            out[i, K] += t[i] - z[-1]
            continue
        if inner[i]:
            out[i, :ji] = halfw[:ji]
            if ji > 0:
                out[i, ji] = 0.5 * deltas[ji - 1]
            r = (t[i] - z[ji]) / deltas[ji]
            out[i, ji] += deltas[ji] * (r - 0.5 * r * r)
            out[i, ji + 1] += deltas[ji] * (0.5 * r * r)
    return out


@dataclass(frozen=True)
class CorrelationValue:
    """Weighted multiple correlation with its per-group contributions."""

    value: float
    per_group: np.ndarray

    def __post_init__(self):
        pg = np.asarray(self.per_group, dtype=float)
        pg.setflags(write=False)
        object.__setattr__(self, "per_group", pg)
        object.__setattr__(self, "value", float(self.value))


def multiple_correlation(family: CongruentFamily,
                         ms: Sequence[EmpiricalMeasure],
                         w: Weights | None = None) -> CorrelationValue:
    """Empirical multiple correlation of a congruent family.

    ``per_group[s]`` is the sample mean of the group-``s`` potential over the
    group-``s`` measure; ``value`` is the weighted sum.
    """
    if w is None:
        w = family.weights
    elif not np.allclose(w.w, family.weights.w, rtol=0, atol=1e-12):
        raise DomainError("weights disagree with the family's weights")
    if len(ms) != family.m:
        raise DomainError(f"expected {family.m} measures, got {len(ms)}")
    per_group = np.empty(family.m)
    for s, (inv, m) in enumerate(zip(family.inverses, ms)):
        if m.size == 0:
            raise DomainError("empty group sample")
        per_group[s] = float(np.mean(PotentialPair(inv).u(m.points)))
    return CorrelationValue(float(np.dot(w.w, per_group)), per_group)


@dataclass(frozen=True)
class QuadratureSpec:
    """Per-group quadrature nodes and weights for population expectations."""

    nodes: tuple
    qweights: tuple

    def __post_init__(self):
        nodes = tuple(np.asarray(n, dtype=float) for n in self.nodes)
        qw = tuple(np.asarray(q, dtype=float) for q in self.qweights)
        if len(nodes) != len(qw):
            raise DomainError("nodes and weights must pair up per group")
        for n, q in zip(nodes, qw):
            if n.size != q.size or n.size == 0:
                raise DomainError("each group needs matching nodes and weights")
            if abs(float(q.sum()) - 1.0) > 1e-8:
                raise DomainError("quadrature weights must sum to 1 per group")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "qweights", qw)

    @property
    def m(self) -> int:
        return len(self.nodes)

    @property
    def resolution(self) -> int:
        return min(n.size for n in self.nodes)

    @classmethod
    def from_pdfs(cls, pdfs: Sequence[Callable], supports: Sequence[tuple],
                  resolution: int = 1 << 14) -> "QuadratureSpec":
        """Composite midpoint rule against the given densities."""
        nodes, qweights = [], []
        for pdf, (lo, hi) in zip(pdfs, supports):
            edges = np.linspace(lo, hi, resolution + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            q = pdf(mid) * np.diff(edges)
            total = q.sum()
            if total <= 0:
                raise DomainError("density integrates to zero on its support")
            nodes.append(mid)
            qweights.append(q / total)
        return cls(tuple(nodes), tuple(qweights))

    def expectation(self, s: int, fn: Callable) -> float:
        return float(np.dot(self.qweights[s], fn(self.nodes[s])))


def correlation_gap(family: CongruentFamily, oracle_family: CongruentFamily,
                    quad: QuadratureSpec) -> float:
    """Population gap ``E(u_family - u_oracle)`` under the quadrature spec."""
    if quad.resolution < MIN_QUADRATURE_RESOLUTION:
        raise ConfigError(
            f"quadrature resolution {quad.resolution} below "
            f"{MIN_QUADRATURE_RESOLUTION}")
    if family.m != oracle_family.m or family.m != quad.m:
        raise DomainError("family, oracle, and quadrature sizes must agree")
    w = family.weights.w
    gap = 0.0
    for s in range(family.m):
        pu = PotentialPair(family.inverses[s])
        po = PotentialPair(oracle_family.inverses[s])
        diff = pu.u(quad.nodes[s]) - po.u(quad.nodes[s])
        gap += w[s] * float(np.dot(quad.qweights[s], diff))
    return gap


def family_sq_distance(family: CongruentFamily, other: CongruentFamily,
                       quad: QuadratureSpec) -> float:
    """Weighted squared map distance between two families under a quadrature."""
    if family.m != other.m or family.m != quad.m:
        raise DomainError("family, oracle, and quadrature sizes must agree")
    w = family.weights.w
    total = 0.0
    for s in range(family.m):
        diff = family.maps[s](quad.nodes[s]) - other.maps[s](quad.nodes[s])
        total += w[s] * float(np.dot(quad.qweights[s], diff * diff))
    return total
