"""Weighted distances, unfairness reports, and Monte-Carlo bound checks.

All transport distances reported here use the half-quadratic convention (the
squared cost integrand carries a factor 1/2); report headers and field names
state this, and helpers accept a ``convention`` flag for the unhalved form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .maps import CongruentFamily
from .measures import (EmpiricalMeasure, Weights, minimax_center_upper_bound,
                       transport_cost)
from .potentials import PotentialPair, QuadratureSpec

__all__ = [
    "EvalSpec",
    "BernsteinCase",
    "UnfairnessReport",
    "BoundCheck",
    "weighted_sq_distance",
    "unfairness",
    "check_fairness_bound",
    "bernstein_check",
    "ks_statistic",
]


@dataclass(frozen=True)
class EvalSpec:
    """How population quantities are evaluated: fresh samples or quadrature."""

    mode: str = "empirical"
    resolution: int = 1 << 14
    fresh_sample_sizes: tuple = (4096, 4096)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("empirical", "quadrature"):
            raise ConfigError(f"unknown eval mode {self.mode!r}")
        if self.mode == "quadrature" and self.resolution < (1 << 10):
            raise ConfigError("quadrature resolution must be at least 2**10")


def weighted_sq_distance(f: Sequence[Callable], g: Sequence[Callable],
                         measures, w: Weights) -> float:
    """Weighted squared L2 distance between group-indexed functions.

    ``measures`` is either a list of per-group point arrays (empirical mode)
    or a :class:`QuadratureSpec` (population mode).
    """
    if len(f) != w.m or len(g) != w.m:
        raise DomainError("need one function per group on both sides")
    total = 0.0
    if isinstance(measures, QuadratureSpec):
        if measures.m != w.m:
            raise DomainError("quadrature spec group count mismatch")
        for s in range(w.m):
            diff = np.asarray(f[s](measures.nodes[s])) - np.asarray(
                g[s](measures.nodes[s]))
            total += w.w[s] * float(np.dot(measures.qweights[s], diff * diff))
        return total
    if len(measures) != w.m:
        raise DomainError("need one evaluation sample per group")
    for s in range(w.m):
        pts = (measures[s].points if isinstance(measures[s], EmpiricalMeasure)
               else np.asarray(measures[s], dtype=float))
        if pts.size == 0:
            raise DomainError("empty evaluation sample")
        diff = np.asarray(f[s](pts)) - np.asarray(g[s](pts))
        total += w.w[s] * float(np.mean(diff * diff))
    return total


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass(frozen=True)
class UnfairnessReport:
    """Demographic-disparity summary of group-wise prediction laws.

    ``upper_bound`` bounds the distance from the nearest common output law
    (half-quadratic convention); ``pairwise_max_w2`` is the largest pairwise
    transport distance in the same convention; ``ks_max`` the largest
    pairwise Kolmogorov-Smirnov statistic.
    """

    upper_bound: float
    pairwise_max_w2: float
    ks_max: float
    convention: str = "half"


def unfairness(fair, feature_samples: Sequence[np.ndarray], w: Weights,
               convention: str = "half") -> UnfairnessReport:
    """Measure output-distribution disparity of a fitted fair regressor.

    Features are pushed through the group predictors; the report summarizes
    how far the resulting prediction laws are from demographic parity.
    """
    if len(feature_samples) != w.m:
        raise DomainError("need one feature sample per group")
    pushed = []
    for s, X in enumerate(feature_samples):
        X = np.asarray(X, dtype=float)
        if X.size == 0:
            raise DomainError("empty feature sample")
        if X.ndim == 1:
            X = X[:, None]
        pushed.append(EmpiricalMeasure.from_samples(fair.predict(s, X)))
    scale = 1.0 if convention == "half" else np.sqrt(2.0)
    ub = scale * minimax_center_upper_bound(pushed, w)
    pw = 0.0
    ks = 0.0
    for i in range(w.m):
        for jdx in range(i + 1, w.m):
            pw = max(pw, np.sqrt(transport_cost(pushed[i], pushed[jdx])))
            ks = max(ks, ks_statistic(pushed[i].points, pushed[jdx].points))
    return UnfairnessReport(float(ub), float(scale * pw), float(ks),
                            convention=convention)


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    lhs: float
    rhs: float
    slack: float


def check_fairness_bound(fair, oracle: CongruentFamily,
                         ms: Sequence[EmpiricalMeasure], w: Weights,
                         feature_samples: Sequence[np.ndarray],
                         eps_grid: float | None = None) -> BoundCheck:
    """Check the unfairness upper bound against the map-estimation error.

    Verifies ``unfairness_upper_bound <= sqrt(1 / (M * w_min)) * d + eps``
    where ``d`` is the root weighted map distance measured on ``ms``.  The
    default slack ``eps`` combines the barycenter-oracle grid interpolation
    allowance (domain width over grid size) with an empirical-evaluation
    allowance of half the width over the square root of the smallest
    evaluation sample: the bound itself concerns population pushforwards,
    and finite evaluation samples contribute transport noise of that order.
    """
    from .estimator import map_error
    from .measures import DEFAULT_ORACLE_GRID

    lhs = unfairness(fair, feature_samples, w).upper_bound
    d = float(np.sqrt(map_error(fair.family, oracle, ms, w)))
    if eps_grid is None:
        grid = oracle.grid.knots
        width = float(grid[-1] - grid[0])
        n_eval = min(np.asarray(f).shape[0] for f in feature_samples)
        eps_grid = width / DEFAULT_ORACLE_GRID + 0.5 * width / np.sqrt(n_eval)
    rhs = float(np.sqrt(1.0 / (w.m * w.w_min)) * d + eps_grid)
    return BoundCheck(passed=bool(lhs <= rhs), lhs=lhs, rhs=rhs,
                      slack=float(eps_grid))


@dataclass(frozen=True)
class BernsteinCase:
    """Inputs for the concentration check of the weighted empirical process."""

    sigma2: float
    b: float
    t_grid: np.ndarray
    n_reps: int

    def __post_init__(self):
        if self.sigma2 <= 0 or self.b <= 0:
            raise DomainError("sigma2 and b must be positive")
        t = np.asarray(self.t_grid, dtype=float)
        if t.size == 0 or np.any(t < 0):
            raise DomainError("threshold grid must be nonnegative")
        t.setflags(write=False)
        object.__setattr__(self, "t_grid", t)
        if self.n_reps < 1:
            raise DomainError("n_reps must be positive")

    @classmethod
    def from_bound_levels(cls, sigma2: float, b: float, n_tilde: float,
                          n_reps: int, levels=None) -> "BernsteinCase":
        """Thresholds chosen so the analytic bound spans the given levels."""
        if levels is None:
            levels = np.geomspace(0.9, 1e-3, 10)
        cs = -np.log(np.asarray(levels, dtype=float))
        t = (cs * b + np.sqrt((cs * b) ** 2 + 2.0 * cs * n_tilde * sigma2)) / n_tilde
        return cls(sigma2, b, t, n_reps)


def bernstein_tail_bound(t, n_tilde: float, sigma2: float, b: float):
    """Analytic tail bound ``exp(-(1/2) n t^2 / (sigma^2 + t b))``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * n_tilde * t * t / (sigma2 + t * b))


def bernstein_check(family: CongruentFamily, laws: Sequence, w: Weights,
                    case: BernsteinCase, n_sizes: Sequence[int] | None = None,
                    seed: int = 0, quad_resolution: int = 1 << 14):
    """Monte-Carlo check of the concentration bound for fixed potentials.

    Draws ``case.n_reps`` independent multi-group samples, records how often
    the centered weighted empirical mean of the potentials exceeds each
    threshold, and tabulates the analytic bound next to the frequency.
    Population means come from quadrature against the given laws.  Returns a
    list of rows ``{t, empirical_freq, bound}``.
    """
    import warnings

    if len(laws) != w.m or family.m != w.m:
        raise DomainError("laws and family must match the weights")
    quad = QuadratureSpec.from_pdfs([law.pdf for law in laws],
                                    [law.support for law in laws],
                                    quad_resolution)
    pots = [PotentialPair(inv) for inv in family.inverses]
    e_pop = np.array([quad.expectation(s, pots[s].u) for s in range(w.m)])
    var_pop = np.array([
        quad.expectation(s, lambda z, s=s: (pots[s].u(z) - e_pop[s]) ** 2)
        for s in range(w.m)])
    sigma2_meas = float(np.dot(w.w, var_pop))
    b_meas = 0.0
    for s in range(w.m):
        dev = np.abs(pots[s].u(quad.nodes[s]) - e_pop[s])
        b_meas = max(b_meas, float(dev.max()))
    if sigma2_meas > case.sigma2 * (1 + 1e-9) or b_meas > case.b * (1 + 1e-9):
        warnings.warn(
            f"case constants (sigma2={case.sigma2:.3g}, b={case.b:.3g}) are "
            f"below measured statistics (sigma2={sigma2_meas:.3g}, "
            f"b={b_meas:.3g}); bound may not apply", RuntimeWarning,
            stacklevel=2)
    if n_sizes is None:
        raise DomainError("n_sizes (per-group draw sizes) is required")
    n_tilde = w.effective_size(n_sizes)
    rng = np.random.default_rng(seed)
    dev_total = np.zeros(case.n_reps)
    for s in range(w.m):
        n_s = int(n_sizes[s])
        means = np.empty(case.n_reps)
        chunk = max(1, int(4_000_000 // max(1, n_s)))
        for lo in range(0, case.n_reps, chunk):
            hi = min(case.n_reps, lo + chunk)
            draws = laws[s].sample(rng, (hi - lo) * n_s).reshape(hi - lo, n_s)
            means[lo:hi] = pots[s].u(draws.reshape(-1)).reshape(
                hi - lo, n_s).mean(axis=1)
        dev_total += w.w[s] * (means - e_pop[s])
    rows = []
    for t in case.t_grid:
        freq = float(np.mean(dev_total > t))
        bound = float(bernstein_tail_bound(t, n_tilde, case.sigma2, case.b))
        rows.append({"t": float(t), "empirical_freq": freq, "bound": bound})
    return rows
