"""Base regressors, sample splitting, and the fair post-processing pipeline.

The pipeline trains one conventional regressor per group on half of that
group's sample, pushes the other half's features through it to obtain
empirical prediction measures, fits congruent barycenter maps to those
measures, and composes map with regressor.  The base-learner slot is
deliberately pluggable: any mean-regression method can sit behind it, and the
pipeline's guarantees track whatever error the base learner achieves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, RegressorMixin

from ._util import seed_from_content
from ._validation import as_1d_float, as_2d_float, encode_groups
from .errors import DomainError
from .estimator import FitReport, SieveSpec, SolverConfig, fit_maps
from .maps import CongruentFamily
from .measures import DomainInterval, EmpiricalMeasure, Weights

__all__ = [
    "GroupSample",
    "KNNRegressor",
    "NadarayaWatsonRegressor",
    "FairRegressor",
    "fit_base",
    "fit_fair",
    "averaged_reduction",
    "default_k",
    "FairBarycenterRegressor",
]


@dataclass(frozen=True)
class GroupSample:
    """Features and outcomes observed for one group."""

    group: int
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = as_2d_float(self.xs, "xs")
        ys = as_1d_float(self.ys, "ys")
        if xs.shape[0] != ys.size:
            raise DomainError("xs and ys must have matching length")
        if ys.size < 2:
            raise DomainError("each group needs at least two observations")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return int(self.ys.size)

    @property
    def dim(self) -> int:
        return int(self.xs.shape[1])


def default_k(n: int, d: int) -> int:
    """Neighbor count rule ``ceil(n ** (2 / (2 + d)))``."""
    return int(math.ceil(n ** (2.0 / (2.0 + d))))


def default_bandwidth(xs: np.ndarray) -> float:
    n, d = xs.shape
    scale = float(np.mean(np.std(xs, axis=0))) or 1.0
    return scale * n ** (-1.0 / (4.0 + d))


class KNNRegressor:
    """k-nearest-neighbor mean regressor with outputs clipped to the domain.

    Distance ties are broken by training index order.  One-dimensional
    features use an exact sorted-window search; higher dimensions go through
    a KD-tree.
    """

    def __init__(self, k: int, omega: DomainInterval):
        if k < 1:
            raise DomainError("k must be at least 1")
        self.k = int(k)
        self.omega = omega

    def fit(self, xs, ys):
        xs = as_2d_float(xs, "xs")
        ys = as_1d_float(ys, "ys")
        if self.k > ys.size:
            import warnings
            warnings.warn(
                f"k={self.k} exceeds the sample size {ys.size}; clamping",
                RuntimeWarning, stacklevel=2)
            self.k = int(ys.size)
        self._xs = xs
        self._ys = ys
        if xs.shape[1] == 1:
            order = np.argsort(xs[:, 0], kind="stable")
            self._x_sorted = xs[order, 0]
            self._y_sorted = ys[order]
            cs = np.concatenate(([0.0], np.cumsum(self._y_sorted)))
            self._cumsum = cs
            k = self.k
            n = ys.size
            if k < n:
                # optimal window start: shift right while the incoming point
                # is strictly closer than the outgoing one
                self._window_mids = 0.5 * (self._x_sorted[:n - k]
                                           + self._x_sorted[k:])
            else:
                self._window_mids = np.empty(0)
            self._tree = None
        else:
            self._tree = cKDTree(xs)
        return self

    def predict(self, X):
        X = as_2d_float(X, "X")
        if X.shape[1] != self._xs.shape[1]:
            raise DomainError("feature dimension mismatch")
        k = self.k
        if self._tree is None:
            q = X[:, 0]
            start = np.searchsorted(self._window_mids, q, side="left")
            means = (self._cumsum[start + k] - self._cumsum[start]) / k
            out = means
        else:
            _, idx = self._tree.query(X, k=k)
            idx = np.atleast_2d(idx)
            out = self._ys[idx].mean(axis=1)
        return self.omega.clip(out)


class NadarayaWatsonRegressor:
    """Gaussian-kernel smoother with outputs clipped to the domain."""

    def __init__(self, bandwidth: float, omega: DomainInterval):
        if bandwidth <= 0:
            raise DomainError("bandwidth must be positive")
        self.bandwidth = float(bandwidth)
        self.omega = omega

    def fit(self, xs, ys):
        self._xs = as_2d_float(xs, "xs")
        self._ys = as_1d_float(ys, "ys")
        return self

    def predict(self, X):
        X = as_2d_float(X, "X")
        if X.shape[1] != self._xs.shape[1]:
            raise DomainError("feature dimension mismatch")
        out = np.empty(X.shape[0])
        h2 = 2.0 * self.bandwidth ** 2
        chunk = max(1, int(2_000_000 // max(1, self._xs.shape[0])))
        for lo in range(0, X.shape[0], chunk):
            xb = X[lo:lo + chunk]
            d2 = ((xb[:, None, :] - self._xs[None, :, :]) ** 2).sum(axis=2)
            ker = np.exp(-d2 / h2)
            tot = ker.sum(axis=1)
            vals = ker @ self._ys
            # fall back to the nearest point when all weights underflow
            dead = tot <= 0
            if np.any(dead):
                nearest = np.argmin(d2[dead], axis=1)
                vals[dead] = self._ys[nearest]
                tot[dead] = 1.0
            out[lo:lo + chunk] = vals / tot
        return self.omega.clip(out)


def fit_base(sample: GroupSample, omega: DomainInterval, kind: str = "knn",
             hyper=None):
    """Fit one group's conventional regressor.

    ``kind="knn"`` uses the neighbor rule ``ceil(n ** (2 / (2 + d)))`` unless
    ``hyper`` overrides the count; ``kind="kernel"`` is a Gaussian
    Nadaraya-Watson smoother whose bandwidth defaults to a standard
    sample-size rule.
    """
    if kind == "knn":
        k = int(hyper) if hyper is not None else default_k(sample.n, sample.dim)
        model = KNNRegressor(k, omega)
    elif kind == "kernel":
        bw = float(hyper) if hyper is not None else default_bandwidth(sample.xs)
        model = NadarayaWatsonRegressor(bw, omega)
    else:
        raise DomainError(f"unknown base regressor kind {kind!r}")
    return model.fit(sample.xs, sample.ys)


def split_sample(sample: GroupSample, master_seed: int):
    """Disjoint, exhaustive half/half split by a seeded permutation.

    The permutation seed is derived from the group's data content, so
    relabeling groups permutes the fit rather than changing it.  Odd sizes
    give the extra point to the regression half.
    """
    seed = seed_from_content(master_seed, sample.xs, sample.ys)
    perm = np.random.default_rng(seed).permutation(sample.n)
    n_reg = (sample.n + 1) // 2
    reg_idx, map_idx = perm[:n_reg], perm[n_reg:]
    reg = GroupSample(sample.group, sample.xs[reg_idx], sample.ys[reg_idx])
    mp = GroupSample(sample.group, sample.xs[map_idx], sample.ys[map_idx])
    return reg, mp, reg_idx, map_idx


@dataclass(frozen=True)
class FairRegressor:
    """Composition of per-group base regressors with congruent maps."""

    bases: tuple
    family: CongruentFamily
    omega: DomainInterval
    weights: Weights
    map_report: FitReport | None = None
    pushforwards: tuple = ()

    @property
    def m(self) -> int:
        return len(self.bases)

    def predict_base(self, s: int, X) -> np.ndarray:
        return self.omega.clip(self.bases[s].predict(X))

    def predict(self, s: int, X) -> np.ndarray:
        return self.family.maps[s](self.predict_base(s, X))


def fit_fair(samples: Sequence[GroupSample], w: Weights,
             omega: DomainInterval, spec: SieveSpec | None = None,
             cfg: SolverConfig | None = None, base: str = "knn",
             base_hyper=None, alpha: float = 2.0, beta: float = 1.0,
             L: float = 3.0, seed: int = 0) -> FairRegressor:
    """Full fair-regression pipeline on group samples.

    Each group's sample is split in half by a seeded permutation; base
    regressors train on the first half, barycenter maps fit on the second
    half's predicted values, and the returned regressor composes the two.
    """
    if len(samples) != w.m:
        raise DomainError(f"expected {w.m} group samples, got {len(samples)}")
    for sample in samples:
        if sample.n < 4:
            raise DomainError("each group needs at least four observations")
        if np.any(~omega.contains(sample.ys)):
            raise DomainError("outcomes fall outside the configured domain")
    bases = []
    push_measures = []
    for sample in samples:
        reg_half, map_half, _, _ = split_sample(sample, seed)
        model = fit_base(reg_half, omega, kind=base, hyper=base_hyper)
        bases.append(model)
        preds = omega.clip(model.predict(map_half.xs))
        push_measures.append(EmpiricalMeasure.from_samples(preds))
    if spec is None:
        spec = SieveSpec.from_data(push_measures, w, omega, L, alpha, beta)
    if cfg is None:
        cfg = SolverConfig(seed=seed)
    report = fit_maps(push_measures, w, spec, cfg)
    return FairRegressor(
        bases=tuple(bases),
        family=report.family,
        omega=omega,
        weights=w,
        map_report=report,
        pushforwards=tuple(push_measures),
    )


def averaged_reduction(fair: FairRegressor,
                       w: Weights | None = None) -> Callable:
    """Single regressor obtained by weight-averaging the fair predictions."""
    if w is None:
        w = fair.weights
    if w.m != fair.m:
        raise DomainError("weights must match the number of groups")

    def predict(X):
        X = as_2d_float(X, "X")
        out = np.zeros(X.shape[0])
        for s in range(fair.m):
            out += w.w[s] * fair.predict(s, X)
        return out

    return predict


class FairBarycenterRegressor(BaseEstimator, RegressorMixin):
    """Scikit-learn front end for the fair post-processing pipeline.

    ``fit(X, y, groups)`` learns per-group base regressors and the congruent
    barycenter maps; ``predict(X, groups)`` returns fair predictions and
    ``predict_base`` the uncorrected ones.
    """

    def __init__(self, omega=None, weights=None, base="knn", base_hyper=None,
                 L=3.0, alpha=2.0, beta=1.0, sieve_level=None, max_iters=2500,
                 tol_rel_obj=1e-7, step_rule="inverse-sqrt", step_scale=2.0,
                 seed=0):
        self.omega = omega
        self.weights = weights
        self.base = base
        self.base_hyper = base_hyper
        self.L = L
        self.alpha = alpha
        self.beta = beta
        self.sieve_level = sieve_level
        self.max_iters = max_iters
        self.tol_rel_obj = tol_rel_obj
        self.step_rule = step_rule
        self.step_scale = step_scale
        self.seed = seed

    def _resolve_omega(self, y: np.ndarray) -> DomainInterval:
        if self.omega is None:
            pad = 0.05 * (y.max() - y.min() + 1e-12)
            return DomainInterval(float(y.min() - pad), float(y.max() + pad))
        if isinstance(self.omega, DomainInterval):
            return self.omega
        return DomainInterval(*self.omega)

    def fit(self, X, y, groups):
        X = as_2d_float(X, "X")
        y = as_1d_float(y, "y")
        codes, uniques = encode_groups(groups)
        if not (X.shape[0] == y.size == codes.size):
            raise DomainError("X, y, and groups must have equal length")
        if len(uniques) < 2:
            raise DomainError("need at least two groups")
        omega = self._resolve_omega(y)
        if self.weights is None:
            w = Weights(np.bincount(codes, minlength=len(uniques)) / codes.size)
        else:
            w = self.weights if isinstance(self.weights, Weights) else Weights(
                np.asarray(self.weights, float))
        samples = [GroupSample(s, X[codes == s], y[codes == s])
                   for s in range(len(uniques))]
        spec = None
        if self.sieve_level is not None:
            from .maps import KnotGrid
            spec = SieveSpec(int(self.sieve_level),
                             KnotGrid.uniform(omega, int(self.sieve_level)),
                             self.L, self.alpha, self.beta)
        cfg = SolverConfig(max_iters=self.max_iters,
                           tol_rel_obj=self.tol_rel_obj,
                           step_rule=self.step_rule,
                           step_scale=self.step_scale, seed=self.seed)
        self.model_ = fit_fair(samples, w, omega, spec=spec, cfg=cfg,
                               base=self.base, base_hyper=self.base_hyper,
                               alpha=self.alpha, beta=self.beta, L=self.L,
                               seed=self.seed)
        self.group_labels_ = uniques
        self.weights_ = w
        self.omega_ = omega
        return self

    def _codes(self, groups):
        codes, _ = encode_groups(groups, known=self.group_labels_)
        return codes

    def predict(self, X, groups):
        if not hasattr(self, "model_"):
            raise DomainError("regressor is not fitted")
        X = as_2d_float(X, "X")
        codes = self._codes(groups)
        out = np.empty(X.shape[0])
        for s in range(len(self.group_labels_)):
            mask = codes == s
            if np.any(mask):
                out[mask] = self.model_.predict(s, X[mask])
        return out

    def predict_base(self, X, groups):
        if not hasattr(self, "model_"):
            raise DomainError("regressor is not fitted")
        X = as_2d_float(X, "X")
        codes = self._codes(groups)
        out = np.empty(X.shape[0])
        for s in range(len(self.group_labels_)):
            mask = codes == s
            if np.any(mask):
                out[mask] = self.model_.predict_base(s, X[mask])
        return out
