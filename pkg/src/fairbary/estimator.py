"""Sieved estimation of barycenter transport maps by correlation minimization.

The estimator minimizes the empirical multiple correlation over congruent
families of piecewise-linear bi-Lipschitz maps on a knot grid whose
resolution grows with the effective sample size.  Families are parameterized
by their inverse maps: an intercept and per-interval rises for each group.
In these coordinates the constraint set factorizes into

* one hyperplane per knot column (weighted rises average to the grid step),
* a box per rise (slopes within ``[1/L, L]``),
* one hyperplane for the intercepts,

so the exact Euclidean projection splits into small per-column problems that
are solved in closed form by a breakpoint scan.  The objective is convex in
the inverse knot values (each potential value is a supremum of functions
affine in them), and its gradient follows from envelope differentiation: the
only contribution at a sample point is the hat-function integral of the knot
basis up to the mapped point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_1d_float, encode_groups
from .errors import DomainError, InfeasibilityError
from .maps import CongruentFamily, KnotGrid, MonotoneMap, sieve_level
from .measures import DomainInterval, EmpiricalMeasure, Weights
from .potentials import QuadratureSpec, hat_integral_weights

__all__ = [
    "SieveSpec",
    "SolverConfig",
    "FitReport",
    "fit_maps",
    "select_level",
    "map_error",
    "BarycenterAligner",
]


@dataclass(frozen=True)
class SieveSpec:
    """Sieve resolution, knot grid, and map-class constants for one fit."""

    j: int
    grid: KnotGrid
    L: float
    alpha: float = 2.0
    beta: float = 1.0

    def __post_init__(self):
        if self.j < 0:
            raise DomainError("sieve level must be nonnegative")
        if self.alpha <= 0 or self.beta < 0:
            raise DomainError("need alpha > 0 and beta >= 0")
        if not self.L > 1.0:
            raise DomainError("Lipschitz bound must exceed 1")
        if self.grid.size != (1 << self.j):
            raise DomainError(
                f"grid has {self.grid.size} intervals, expected 2**{self.j}")

    @classmethod
    def from_data(cls, ms: Sequence[EmpiricalMeasure], w: Weights,
                  omega: DomainInterval, L: float, alpha: float = 2.0,
                  beta: float = 1.0, level: int | None = None) -> "SieveSpec":
        j = select_level(ms, w, alpha, beta) if level is None else int(level)
        return cls(j, KnotGrid.uniform(omega, j), L, alpha, beta)


@dataclass(frozen=True)
class SolverConfig:
    """Projected-subgradient settings; deterministic given the seed."""

    max_iters: int = 2500
    tol_rel_obj: float = 1e-7
    step_rule: str = "inverse-sqrt"
    step_scale: float = 2.0
    seed: int = 0
    avg_window: int = 50

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if self.tol_rel_obj <= 0:
            raise DomainError("tol_rel_obj must be positive")
        if self.step_rule not in ("constant", "inverse-sqrt"):
            raise DomainError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class FitReport:
    """Result of one map fit: best family found plus solver diagnostics."""

    family: CongruentFamily
    objective_trace: np.ndarray
    iterations_used: int
    converged: bool
    congruency_residual: float

    def __post_init__(self):
        tr = np.asarray(self.objective_trace, dtype=float)
        tr.setflags(write=False)
        object.__setattr__(self, "objective_trace", tr)

    def to_dict(self) -> dict:
        """JSON-ready summary; the trace goes to a CSV sidecar instead."""
        return {
            "family": self.family.to_dict(),
            "iterations_used": int(self.iterations_used),
            "converged": bool(self.converged),
            "congruency_residual": float(self.congruency_residual),
            "final_objective": float(self.objective_trace[-1]),
        }

    def trace_to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,objective\n")
            for i, v in enumerate(self.objective_trace):
                fh.write(f"{i},{float(v)!r}\n")


def select_level(ms: Sequence[EmpiricalMeasure], w: Weights,
                 alpha: float, beta: float) -> int:
    """Sieve level from the effective sample size ``min_s n_s / w_s``."""
    n_tilde = w.effective_size([m.size for m in ms])
    return sieve_level(n_tilde, alpha, beta)


# ---------------------------------------------------------------------------
# objective / gradient internals
# ---------------------------------------------------------------------------


class _Workspace:
    """Precomputed grid quantities shared across solver iterations."""

    def __init__(self, grid: KnotGrid, pts: Sequence[np.ndarray], w: Weights):
        self.z = grid.knots
        self.deltas = grid.deltas
        K = self.z.size - 1
        self.K = K
        halfw = np.zeros(K + 1)
        halfw[:-1] += 0.5 * self.deltas
        halfw[1:] += 0.5 * self.deltas
        self.halfw = halfw
        self.pts = [np.ascontiguousarray(p) for p in pts]
        self.w = w.w
        base = 0.0 if self.z[0] <= 0.0 <= self.z[-1] else float(self.z[0])
        self.base = base
        self.hat_base = hat_integral_weights(self.z, np.asarray([base]))[0]

    def values_from(self, A: np.ndarray, R: np.ndarray) -> np.ndarray:
        V = np.empty((A.size, self.K + 1))
        V[:, 0] = A
        np.cumsum(R, axis=1, out=V[:, 1:])
        V[:, 1:] += A[:, None]
        return V

    def group_obj_grad(self, s: int, v: np.ndarray, need_grad: bool = True):
        """Empirical mean of the potential and its gradient in knot values."""
        z, deltas, K = self.z, self.deltas, self.K
        x = self.pts[s]
        n = x.size
        rises = np.diff(v)
        slopes_inv = rises / deltas

        # forward image z* of every sample point (extension has unit slope)
        j = np.clip(np.searchsorted(v, x, side="right") - 1, 0, K - 1)
        below = x < v[0]
        above = x >= v[-1]
        inner = ~below & ~above
        frac = np.clip((x - v[j]) / rises[j], 0.0, 1.0)
        zstar = z[j] + frac * deltas[j]
        zstar = np.where(below, z[0] + (x - v[0]), zstar)
        zstar = np.where(above, z[-1] + (x - v[-1]), zstar)

        # integral of the inverse from z[0] to z*
        prefix = np.concatenate(
            ([0.0], np.cumsum(0.5 * (v[:-1] + v[1:]) * deltas)))
        d = frac * deltas[j]
        P = prefix[j] + v[j] * d + 0.5 * slopes_inv[j] * d * d
        if np.any(below):
            tb = zstar[below]
            c_lo = v[0] - z[0]
            P = np.where(below, 0.0, P)
            Pb = -(0.5 * (z[0] ** 2 - tb ** 2) + c_lo * (z[0] - tb))
            P[below] = Pb
        if np.any(above):
            ta = zstar[above]
            c_hi = v[-1] - z[-1]
            P[above] = (prefix[-1] + 0.5 * (ta ** 2 - z[-1] ** 2)
                        + c_hi * (ta - z[-1]))
        p_base = float(self.hat_base @ v)
        u_vals = x * zstar - (P - p_base)
        obj = float(np.mean(u_vals))
        if not need_grad:
            return obj, None

        # gradient of the mean potential in the knot values: the envelope
        # theorem leaves only the explicit hat-integral dependence
        H = np.zeros(K + 1)
        if np.any(below):
            H[0] += float(np.sum(zstar[below] - z[0]))
        n_above = int(np.count_nonzero(above))
        if n_above:
            H += self.halfw * n_above
            H[K] += float(np.sum(zstar[above] - z[-1]))
        if np.any(inner):
            ji = j[inner]
            ri = frac[inner]
            cnt = np.bincount(ji, minlength=K)
            count_ge = np.zeros(K + 1)
            count_ge[:K] = np.cumsum(cnt[::-1])[::-1]
            # full hats left of the segment, then the half hat at its left knot
            H += self.halfw * np.concatenate((count_ge[1:], [0.0]))
            H[1:K] += cnt[1:K] * (0.5 * deltas[0:K - 1])
            # partial-segment hat pieces
            wj = deltas[ji] * (ri - 0.5 * ri * ri)
            wj1 = deltas[ji] * (0.5 * ri * ri)
            H[:K] += np.bincount(ji, weights=wj, minlength=K)
            H += np.bincount(ji + 1, weights=wj1, minlength=K + 1)
        grad = -(H / n) + self.hat_base
        return obj, grad


def _project_intercepts(A: np.ndarray, w: np.ndarray, z0: float) -> np.ndarray:
    return A - w * ((w @ A - z0) / (w @ w))


def _project_rise_columns(R: np.ndarray, w: np.ndarray, deltas: np.ndarray,
                          L: float) -> np.ndarray:
    """Exact projection of every rise column onto its hyperplane-box set.

    Column ``k`` is projected onto ``{r : w @ r = deltas[k],
    deltas[k]/L <= r_s <= deltas[k] * L}``.  The dual path
    ``r(lmb) = clip(y - lmb * w, lo, hi)`` is piecewise linear and monotone in
    ``lmb``, so the root is found exactly from the sorted breakpoints.
    """
    M, K = R.shape
    lo = deltas / L
    hi = deltas * L
    bps = np.concatenate([(R - hi[None, :]) / w[:, None],
                          (R - lo[None, :]) / w[:, None]], axis=0)
    bps = np.sort(bps, axis=0)
    # g(bp, k) = w @ clip(R[:, k] - bp * w, lo_k, hi_k), nonincreasing in bp
    cand = R[None, :, :] - bps[:, None, :] * w[None, :, None]
    np.clip(cand, lo[None, None, :], hi[None, None, :], out=cand)
    gs = np.einsum("s,bsk->bk", w, cand)
    # first breakpoint index where g drops to the target or below
    reach = gs <= deltas[None, :] + 1e-15 * np.maximum(1.0, hi[None, :])
    idx = np.argmax(reach, axis=0)
    lam = np.empty(K)
    for k in range(K):
        i = int(idx[k])
        if i == 0:
            lam[k] = bps[0, k]
            continue
        g_hi, g_lo = gs[i - 1, k], gs[i, k]
        if g_hi - g_lo <= 0:
            lam[k] = bps[i, k]
        else:
            t = (g_hi - deltas[k]) / (g_hi - g_lo)
            lam[k] = bps[i - 1, k] + t * (bps[i, k] - bps[i - 1, k])
    out = R - lam[None, :] * w[:, None]
    np.clip(out, lo[None, :], hi[None, :], out=out)
    return out


def _build_family(ws: _Workspace, A: np.ndarray, R: np.ndarray,
                  w: Weights, L: float) -> CongruentFamily:
    V = ws.values_from(A, R)
    invs = tuple(MonotoneMap(ws.z, V[s], L) for s in range(A.size))
    return CongruentFamily(invs, w)


def fit_maps(ms: Sequence[EmpiricalMeasure], w: Weights, spec: SieveSpec,
             cfg: SolverConfig | None = None) -> FitReport:
    """Fit congruent barycenter maps by empirical correlation minimization.

    Starts from the all-identity family (always feasible), runs projected
    gradient steps with iterate averaging, and returns the best family seen.
    Non-convergence within the iteration budget is reported through the
    ``converged`` flag rather than an exception.
    """
    if cfg is None:
        cfg = SolverConfig()
    if len(ms) != w.m:
        raise DomainError(f"expected {w.m} measures, got {len(ms)}")
    for m in ms:
        if m.size < 2:
            raise DomainError("every group needs at least two points")
    L = spec.L
    grid = spec.grid
    # feasibility witness: the identity family must construct cleanly
    try:
        CongruentFamily.identity(grid, w, L)
    except DomainError as exc:  # pragma: no cover - guarded by SieveSpec
        raise InfeasibilityError(str(exc)) from exc

    ws = _Workspace(grid, [m.points for m in ms], w)
    M, K = w.m, ws.K
    wv = w.w
    deltas = ws.deltas
    z0 = float(ws.z[0])

    A = np.full(M, z0)
    R = np.tile(deltas, (M, 1))

    def objective(A_, R_):
        V = ws.values_from(A_, R_)
        return sum(wv[s] * ws.group_obj_grad(s, V[s], need_grad=False)[0]
                   for s in range(M))

    best_obj = np.inf
    best = (A.copy(), R.copy())
    trace = np.empty(cfg.max_iters)
    window = max(2, int(cfg.avg_window))
    ringA = np.zeros((window, M))
    ringR = np.zeros((window, M, K))
    converged = False
    t = 0
    for t in range(cfg.max_iters):
        V = ws.values_from(A, R)
        obj = 0.0
        G = np.empty((M, K + 1))
        for s in range(M):
            o_s, g_s = ws.group_obj_grad(s, V[s])
            obj += wv[s] * o_s
            G[s] = wv[s] * g_s
        if obj < best_obj:
            best_obj = obj
            best = (A.copy(), R.copy())
        trace[t] = best_obj

        if cfg.step_rule == "constant":
            eta = cfg.step_scale
        else:
            eta = cfg.step_scale / np.sqrt(t + 1.0)
        gA = G.sum(axis=1)
        gR = np.cumsum(G[:, ::-1], axis=1)[:, ::-1][:, 1:]
        A = _project_intercepts(A - eta * gA, wv, z0)
        R = _project_rise_columns(R - eta * gR, wv, deltas, L)

        ringA[t % window] = A
        ringR[t % window] = R
        if (t + 1) % window == 0 and t + 1 >= window:
            fill = min(t + 1, window)
            A_avg = ringA[:fill].mean(axis=0)
            R_avg = ringR[:fill].mean(axis=0)
            avg_obj = objective(A_avg, R_avg)
            if avg_obj < best_obj:
                best_obj = avg_obj
                best = (A_avg, R_avg)
                trace[t] = best_obj

        if t + 1 >= 2 * window:
            prev = trace[t - window]
            if prev - best_obj < cfg.tol_rel_obj * max(1.0, abs(best_obj)):
                converged = True
                break

    family = _build_family(ws, best[0], best[1], w, L)
    return FitReport(
        family=family,
        objective_trace=trace[:t + 1].copy(),
        iterations_used=t + 1,
        converged=converged,
        congruency_residual=family.congruency_residual(),
    )


def nearest_congruent_family(values, grid: KnotGrid, w: Weights,
                             L: float) -> CongruentFamily:
    """Exact Euclidean projection of inverse knot values onto the feasible set.

    ``values`` has one row of inverse knot values per group.  In intercept
    and rise coordinates the feasible polytope factorizes per knot column, so
    the projection reduces to the solver's closed-form column projections.
    """
    V = np.asarray(values, dtype=float)
    if V.ndim != 2 or V.shape[0] != w.m or V.shape[1] != grid.knots.size:
        raise DomainError("values must be an (M, K+1) matrix on the grid")
    A = _project_intercepts(V[:, 0].copy(), w.w, float(grid.knots[0]))
    R = _project_rise_columns(np.diff(V, axis=1), w.w, grid.deltas, L)
    out = np.empty_like(V)
    out[:, 0] = A
    np.cumsum(R, axis=1, out=out[:, 1:])
    out[:, 1:] += A[:, None]
    invs = tuple(MonotoneMap(grid.knots, out[s], L) for s in range(w.m))
    return CongruentFamily(invs, w)


def map_error(family: CongruentFamily, oracle: CongruentFamily,
              ms, w: Weights | None = None) -> float:
    """Weighted squared distance between two families' forward maps.

    ``ms`` is either a list of empirical measures (sample average per group)
    or a :class:`QuadratureSpec` (population integral per group).
    """
    if w is None:
        w = family.weights
    if family.m != oracle.m or family.m != w.m:
        raise DomainError("family, oracle, and weights sizes must agree")
    if isinstance(ms, QuadratureSpec):
        total = 0.0
        for s in range(family.m):
            diff = (family.maps[s](ms.nodes[s]) - oracle.maps[s](ms.nodes[s]))
            total += w.w[s] * float(np.dot(ms.qweights[s], diff * diff))
        return total
    if len(ms) != family.m:
        raise DomainError(f"expected {family.m} measures, got {len(ms)}")
    total = 0.0
    for s, m in enumerate(ms):
        pts = m.points if isinstance(m, EmpiricalMeasure) else np.asarray(m, float)
        diff = family.maps[s](pts) - oracle.maps[s](pts)
        total += w.w[s] * float(np.mean(diff * diff))
    return total


class BarycenterAligner(BaseEstimator, TransformerMixin):
    """Align group-wise 1D values to their weighted barycenter distribution.

    Scikit-learn style wrapper around :func:`fit_maps`: ``fit`` learns one
    monotone map per group, ``transform`` pushes values through their group's
    map so the transformed distributions agree across groups.
    """

    def __init__(self, omega=None, weights=None, L=3.0, alpha=2.0, beta=1.0,
                 level=None, max_iters=2500, tol_rel_obj=1e-7,
                 step_rule="inverse-sqrt", step_scale=2.0, seed=0):
        self.omega = omega
        self.weights = weights
        self.L = L
        self.alpha = alpha
        self.beta = beta
        self.level = level
        self.max_iters = max_iters
        self.tol_rel_obj = tol_rel_obj
        self.step_rule = step_rule
        self.step_scale = step_scale
        self.seed = seed

    def fit(self, X, groups):
        x = as_1d_float(X, "X")
        codes, uniques = encode_groups(groups)
        if codes.size != x.size:
            raise DomainError("X and groups must have equal length")
        if len(uniques) < 2:
            raise DomainError("need at least two groups")
        if self.weights is None:
            w = Weights(np.bincount(codes, minlength=len(uniques)) / codes.size)
        else:
            w = self.weights if isinstance(self.weights, Weights) else Weights(
                np.asarray(self.weights, float))
        if self.omega is None:
            pad = 0.05 * (x.max() - x.min() + 1e-12)
            omega = DomainInterval(float(x.min() - pad), float(x.max() + pad))
        elif isinstance(self.omega, DomainInterval):
            omega = self.omega
        else:
            omega = DomainInterval(*self.omega)
        ms = [EmpiricalMeasure.from_samples(x[codes == s])
              for s in range(len(uniques))]
        spec = SieveSpec.from_data(ms, w, omega, self.L, self.alpha, self.beta,
                                   level=self.level)
        cfg = SolverConfig(max_iters=self.max_iters,
                           tol_rel_obj=self.tol_rel_obj,
                           step_rule=self.step_rule,
                           step_scale=self.step_scale, seed=self.seed)
        report = fit_maps(ms, w, spec, cfg)
        self.group_labels_ = uniques
        self.weights_ = w
        self.omega_ = omega
        self.family_ = report.family
        self.report_ = report
        return self

    def transform(self, X, groups):
        if not hasattr(self, "family_"):
            raise DomainError("aligner is not fitted")
        x = as_1d_float(X, "X")
        codes, _ = encode_groups(groups, known=self.group_labels_)
        out = np.empty_like(x)
        for s in range(len(self.group_labels_)):
            mask = codes == s
            if np.any(mask):
                out[mask] = self.family_.maps[s](x[mask])
        return out

    def fit_transform(self, X, groups):
        return self.fit(X, groups).transform(X, groups)
