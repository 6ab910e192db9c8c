"""Synthetic scenarios with oracle-computable ground truth.

Three families of group distributions are provided, each with closed-form
group quantile functions so the barycenter maps can be constructed to
quadrature precision and used as ground truth in tests and benchmarks:

* ``translation``: uniform features, outcomes shifted per group.  The
  optimal maps are exact translations.
* ``gaussian``: truncated-normal features with affine group links, giving
  approximately affine maps on central quantiles.
* ``nonlinear-monotone``: smooth monotone links with slopes bounded away
  from zero and infinity.

Outcome noise is truncated into the domain by rejection resampling, keeping
the prediction laws absolutely continuous; parameter choices that would push
more than 1% of outcome mass outside the domain are rejected outright since
heavy truncation would distort the closed-form truths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, DomainError
from .estimator import nearest_congruent_family
from .maps import CongruentFamily, KnotGrid, MonotoneMap
from .measures import DomainInterval, EmpiricalMeasure, Weights
from .potentials import QuadratureSpec
from .regression import FairRegressor, GroupSample

__all__ = [
    "UniformLaw",
    "TruncNormalLaw",
    "MonotoneLinkLaw",
    "ScenarioSpec",
    "GroundTruth",
    "generate",
    "make_truth",
    "truth_error",
    "pushforward_samples",
    "congruent_family_from_quantiles",
    "oracle_family_from_measures",
    "random_congruent_family",
    "estimate_poincare",
]


class UniformLaw:
    """Uniform distribution on ``[lo, hi]``."""

    def __init__(self, lo: float, hi: float):
        if not lo < hi:
            raise DomainError("uniform law requires lo < hi")
        self.lo, self.hi = float(lo), float(hi)

    @property
    def support(self):
        return (self.lo, self.hi)

    def ppf(self, t):
        return self.lo + (self.hi - self.lo) * np.asarray(t, dtype=float)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.lo) & (z <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def sample(self, rng: np.random.Generator, n: int):
        return self.ppf(rng.uniform(0.0, 1.0, n))


class TruncNormalLaw:
    """Normal(loc, scale^2) truncated to ``[lo, hi]``."""

    def __init__(self, loc: float, scale: float, lo: float, hi: float):
        if scale <= 0 or not lo < hi:
            raise DomainError("invalid truncated-normal parameters")
        self.loc, self.scale = float(loc), float(scale)
        self.lo, self.hi = float(lo), float(hi)
        self._a = norm.cdf((self.lo - self.loc) / self.scale)
        self._b = norm.cdf((self.hi - self.loc) / self.scale)
        self._z = self._b - self._a

    @property
    def support(self):
        return (self.lo, self.hi)

    def ppf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        q = self.loc + self.scale * norm.ppf(self._a + t * self._z)
        return np.clip(q, self.lo, self.hi)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.lo) & (z <= self.hi)
        dens = norm.pdf((z - self.loc) / self.scale) / (self.scale * self._z)
        return np.where(inside, dens, 0.0)

    def sample(self, rng: np.random.Generator, n: int):
        return self.ppf(rng.uniform(0.0, 1.0, n))


class MonotoneLinkLaw:
    """Law of ``link(U)`` for ``U ~ Uniform(0, 1)`` and increasing ``link``."""

    def __init__(self, link: Callable, dlink: Callable):
        self.link = link
        self.dlink = dlink
        lo, hi = float(link(0.0)), float(link(1.0))
        if not lo < hi:
            raise DomainError("link must be increasing on [0, 1]")
        self.lo, self.hi = lo, hi

    @property
    def support(self):
        return (self.lo, self.hi)

    def ppf(self, t):
        return self.link(np.clip(np.asarray(t, dtype=float), 0.0, 1.0))

    def _inv(self, z):
        z = np.asarray(z, dtype=float)
        lo = np.zeros_like(z)
        hi = np.ones_like(z)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            val = self.link(mid)
            lo = np.where(val < z, mid, lo)
            hi = np.where(val >= z, mid, hi)
        return 0.5 * (lo + hi)

    def pdf(self, z):
        z = np.asarray(z, dtype=float)
        inside = (z >= self.lo) & (z <= self.hi)
        t = self._inv(np.clip(z, self.lo, self.hi))
        return np.where(inside, 1.0 / np.maximum(self.dlink(t), 1e-300), 0.0)

    def sample(self, rng: np.random.Generator, n: int):
        return self.link(rng.uniform(0.0, 1.0, n))


_SCENARIOS = ("translation", "gaussian", "nonlinear-monotone")


@dataclass(frozen=True)
class ScenarioSpec:
    """Generator configuration with per-group parameters."""

    name: str
    weights: Weights
    params: dict
    noise_sd: float
    omega: DomainInterval
    seed: int = 0
    L: float = 3.0

    def __post_init__(self):
        if self.name not in _SCENARIOS:
            raise ConfigError(f"unknown scenario {self.name!r}")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be nonnegative")

    @property
    def m(self) -> int:
        return self.weights.m

    @classmethod
    def default(cls, name: str, seed: int = 0, noise_sd: float | None = None,
                m: int = 2, weights=None, L: float = 3.0) -> "ScenarioSpec":
        w = Weights(weights) if weights is not None else Weights.uniform(m)
        if name == "translation":
            shifts = [0.4 * s / max(1, m - 1) for s in range(m)]
            params = {"shifts": shifts, "x_range": (0.1, 1.1)}
            omega = DomainInterval(0.0, 2.0)
            noise = 0.05 if noise_sd is None else noise_sd
        elif name == "gaussian":
            base = [(1.0, 0.0), (2.0, 1.0), (1.5, -0.5), (1.2, 0.5)]
            coefs = [base[s % len(base)] for s in range(m)]
            params = {"coefs": coefs, "x_clip": 3.5}
            omega = DomainInterval(-6.0, 8.0)
            noise = 0.1 if noise_sd is None else noise_sd
        else:
            base = [(0.15, 1.6, 0.3), (0.25, 1.5, -0.35), (0.2, 1.55, 0.2),
                    (0.3, 1.45, -0.2)]
            links = [base[s % len(base)] for s in range(m)]
            params = {"links": links}
            omega = DomainInterval(0.0, 2.0)
            noise = 0.05 if noise_sd is None else noise_sd
        return cls(name, w, params, noise, omega, seed=seed, L=L)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "weights": [float(x) for x in self.weights.w],
            "params": _params_to_jsonable(self.params),
            "noise_sd": self.noise_sd,
            "omega": [self.omega.lo, self.omega.hi],
            "seed": self.seed,
            "L": self.L,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(
            name=d["name"],
            weights=Weights(np.asarray(d["weights"], dtype=float)),
            params=_params_from_jsonable(d["name"], d["params"]),
            noise_sd=float(d["noise_sd"]),
            omega=DomainInterval(*d["omega"]),
            seed=int(d["seed"]),
            L=float(d.get("L", 3.0)),
        )


def _params_to_jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, (list, tuple)):
            out[k] = [list(item) if isinstance(item, (list, tuple)) else item
                      for item in v]
        else:
            out[k] = v
    return out


def _params_from_jsonable(name: str, params: dict) -> dict:
    out = dict(params)
    if name == "translation" and "x_range" in out:
        out["x_range"] = tuple(out["x_range"])
    if name == "gaussian" and "coefs" in out:
        out["coefs"] = [tuple(c) for c in out["coefs"]]
    if name == "nonlinear-monotone" and "links" in out:
        out["links"] = [tuple(c) for c in out["links"]]
    return out


def _link_fns(a: float, b: float, c: float):
    def link(x):
        x = np.asarray(x, dtype=float)
        return a + b * x + c * np.sin(np.pi * x) / np.pi

    def dlink(x):
        return b + c * np.cos(np.pi * np.asarray(x, dtype=float))

    if b - abs(c) <= 0:
        raise ConfigError("nonlinear link must be strictly increasing")
    return link, dlink


def feature_law(spec: ScenarioSpec, s: int):
    """Law of the (one-dimensional) feature for group ``s``."""
    if spec.name == "translation":
        lo, hi = spec.params.get("x_range", (0.1, 1.1))
        return UniformLaw(lo, hi)
    if spec.name == "gaussian":
        clip = float(spec.params.get("x_clip", 3.5))
        return TruncNormalLaw(0.0, 1.0, -clip, clip)
    return UniformLaw(0.0, 1.0)


def f_star_fn(spec: ScenarioSpec, s: int) -> Callable:
    """Noise-free regression function of group ``s`` on 1D features."""
    if spec.name == "translation":
        c = float(spec.params["shifts"][s])
        return lambda x: np.asarray(x, dtype=float).reshape(-1) + c
    if spec.name == "gaussian":
        a, b = spec.params["coefs"][s]
        return lambda x: b + a * np.asarray(x, dtype=float).reshape(-1)
    link, _ = _link_fns(*spec.params["links"][s])
    return lambda x: link(np.asarray(x, dtype=float).reshape(-1))


def prediction_law(spec: ScenarioSpec, s: int):
    """Law of ``f_star(X)`` for group ``s`` (the measure the maps act on)."""
    if spec.name == "translation":
        lo, hi = spec.params.get("x_range", (0.1, 1.1))
        c = float(spec.params["shifts"][s])
        return UniformLaw(lo + c, hi + c)
    if spec.name == "gaussian":
        a, b = spec.params["coefs"][s]
        clip = float(spec.params.get("x_clip", 3.5))
        if a <= 0:
            raise ConfigError("gaussian scenario needs positive slopes")
        return TruncNormalLaw(b, a, b - clip * a, b + clip * a)
    link, dlink = _link_fns(*spec.params["links"][s])
    return MonotoneLinkLaw(link, dlink)


def congruent_family_from_quantiles(ppfs: Sequence[Callable], w: Weights,
                                    grid: KnotGrid, L: float,
                                    exact: bool = True,
                                    project: bool = False) -> CongruentFamily:
    """Exactly congruent family whose inverses follow given quantile functions.

    The inverse of the optimal map for group ``s`` is ``Q_s`` composed with
    the CDF of the barycenter, whose quantile function is the weighted
    average of the ``Q_s``.  Each grid knot is matched to its barycenter
    probability level by bisection; knots outside the barycenter's range use
    the unit-slope extension, which preserves congruency identically.  With
    ``exact=True`` the last group is closed algebraically so the knot
    residual is zero to rounding.  ``project=True`` projects the raw rows
    onto the feasible polytope first, for noisy (empirical) quantile inputs
    whose local slopes may leave the box.
    """
    z = grid.knots
    t_lo, t_hi = 1e-12, 1.0 - 1e-12
    m = w.m

    def qbar(t):
        acc = np.zeros_like(np.asarray(t, dtype=float))
        for ws, q in zip(w.w, ppfs):
            acc = acc + ws * q(t)
        return acc

    z_lo = float(qbar(t_lo))
    z_hi = float(qbar(t_hi))
    inside = (z >= z_lo) & (z <= z_hi)
    t_knot = np.full(z.shape, t_lo)
    if np.any(inside):
        target = z[inside]
        lo = np.full(target.shape, t_lo)
        hi = np.full(target.shape, t_hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            val = qbar(mid)
            less = val < target
            lo = np.where(less, mid, lo)
            hi = np.where(less, hi, mid)
        t_knot[inside] = 0.5 * (lo + hi)
    V = np.empty((m, z.size))
    for s in range(m):
        V[s] = ppfs[s](t_knot)
        below = z < z_lo
        above = z > z_hi
        if np.any(below):
            V[s][below] = float(ppfs[s](t_lo)) - (z_lo - z[below])
        if np.any(above):
            V[s][above] = float(ppfs[s](t_hi)) + (z[above] - z_hi)
    if project:
        return nearest_congruent_family(V, grid, w, L)
    if exact:
        V[m - 1] = (z - np.tensordot(w.w[:-1], V[:-1], axes=1)) / w.w[-1]
    invs = tuple(MonotoneMap(z, V[s], L) for s in range(m))
    return CongruentFamily(invs, w)


def oracle_family_from_measures(ms: Sequence[EmpiricalMeasure], w: Weights,
                                grid: KnotGrid, L: float) -> CongruentFamily:
    """Quantile-oracle barycenter maps of empirical measures, projected feasible.

    Used as the reference family when only samples of the group laws are
    available (for example pushforwards of a fitted base regressor); slope
    noise from empirical quantiles is removed by exact projection onto the
    map class.
    """
    ppfs = [m.interp_quantile for m in ms]
    return congruent_family_from_quantiles(ppfs, w, grid, L, project=True)


@dataclass(frozen=True)
class GroundTruth:
    """Closed-form regression functions, optimal maps, and their composition."""

    spec: ScenarioSpec
    f_star: tuple
    theta_star: CongruentFamily
    fair_bayes: tuple = field(init=False)

    def __post_init__(self):
        maps = self.theta_star.maps

        def compose(s):
            fs = self.f_star[s]
            th = maps[s]
            return lambda x: th(fs(x))

        object.__setattr__(self, "fair_bayes",
                           tuple(compose(s) for s in range(len(self.f_star))))

    def prediction_quadrature(self, resolution: int = 1 << 14) -> QuadratureSpec:
        laws = [prediction_law(self.spec, s) for s in range(self.spec.m)]
        return QuadratureSpec.from_pdfs([law.pdf for law in laws],
                                        [law.support for law in laws],
                                        resolution)


def make_truth(spec: ScenarioSpec, level: int = 9) -> GroundTruth:
    """Ground truth with the optimal maps tabulated on a dense grid.

    The generated maps are validated against the scenario's bi-Lipschitz
    constant; a violation aborts generation instead of bending the truth.
    """
    grid = KnotGrid.uniform(spec.omega, level)
    ppfs = [prediction_law(spec, s).ppf for s in range(spec.m)]
    try:
        family = congruent_family_from_quantiles(ppfs, spec.weights, grid,
                                                 spec.L)
    except DomainError as exc:
        raise ConfigError(
            f"scenario ground-truth maps violate the map class: {exc}"
        ) from exc
    f_star = tuple(f_star_fn(spec, s) for s in range(spec.m))
    return GroundTruth(spec=spec, f_star=f_star, theta_star=family)


def _outside_mass(spec: ScenarioSpec, s: int, resolution: int = 4096) -> float:
    if spec.noise_sd == 0:
        return 0.0
    t = (np.arange(resolution) + 0.5) / resolution
    f_vals = f_star_fn(spec, s)(feature_law(spec, s).ppf(t))
    lo_tail = norm.cdf((spec.omega.lo - f_vals) / spec.noise_sd)
    hi_tail = norm.sf((spec.omega.hi - f_vals) / spec.noise_sd)
    return float(np.mean(lo_tail + hi_tail))


def generate(spec: ScenarioSpec, n_per_group: Sequence[int],
             truth_level: int = 9):
    """Draw group samples and return them with the scenario's ground truth.

    Outcome noise is resampled into the domain rather than clipped, keeping
    the outcome laws atom-free.
    """
    n_per_group = [int(n) for n in n_per_group]
    if len(n_per_group) != spec.m:
        raise DomainError(f"expected {spec.m} sample sizes")
    if any(n <= 0 for n in n_per_group):
        raise DomainError("sample sizes must be positive")
    for s in range(spec.m):
        mass = _outside_mass(spec, s)
        if mass > 0.01:
            raise ConfigError(
                f"group {s} pushes {100 * mass:.2f}% of outcome mass outside "
                f"the domain; widen omega or reduce noise_sd")
    truth = make_truth(spec, level=truth_level)
    samples = []
    for s, n in enumerate(n_per_group):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, s]))
        xs = feature_law(spec, s).sample(rng, n)
        f_vals = truth.f_star[s](xs)
        ys = f_vals + spec.noise_sd * rng.standard_normal(n)
        if spec.noise_sd > 0:
            for _ in range(200):
                bad = ~spec.omega.contains(ys)
                if not np.any(bad):
                    break
                ys[bad] = (f_vals[bad]
                           + spec.noise_sd * rng.standard_normal(int(bad.sum())))
            else:
                raise ConfigError("rejection sampling failed to stay in omega")
        samples.append(GroupSample(s, xs[:, None], ys))
    return samples, truth


def pushforward_samples(truth: GroundTruth,
                        samples: Sequence[GroupSample]) -> list:
    """Noise-free prediction samples ``f_star(X)`` per group."""
    return [EmpiricalMeasure.from_samples(truth.f_star[s](smp.xs))
            for s, smp in enumerate(samples)]


def fresh_features(spec: ScenarioSpec, sizes: Sequence[int], seed: int):
    """Independent feature draws for evaluation, one matrix per group."""
    out = []
    for s, n in enumerate(sizes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7919, s]))
        out.append(feature_law(spec, s).sample(rng, int(n))[:, None])
    return out


def truth_error(candidate: FairRegressor, truth: GroundTruth,
                spec: ScenarioSpec, eval_sizes=4096, seed: int = 1) -> float:
    """Weighted squared distance from the fair-optimal composition.

    Evaluated on fresh feature samples so the value estimates the population
    distance rather than the training-sample one.  ``eval_sizes`` is an int,
    a per-group list, or a :class:`fairbary.metrics.EvalSpec` (whose
    ``fresh_sample_sizes`` and ``seed`` then take over).
    """
    from .metrics import EvalSpec

    if isinstance(eval_sizes, EvalSpec):
        seed = eval_sizes.seed
        eval_sizes = list(eval_sizes.fresh_sample_sizes)
    if isinstance(eval_sizes, int):
        eval_sizes = [eval_sizes] * spec.m
    feats = fresh_features(spec, eval_sizes, seed)
    total = 0.0
    for s in range(spec.m):
        diff = candidate.predict(s, feats[s]) - truth.fair_bayes[s](feats[s])
        total += spec.weights.w[s] * float(np.mean(diff * diff))
    return total


def random_congruent_family(grid: KnotGrid, w: Weights, L: float,
                            rng: np.random.Generator,
                            spread: float = 0.15) -> CongruentFamily:
    """Random feasible family near the identity, exactly congruent."""
    z = grid.knots
    width = z[-1] - z[0]
    raw = np.empty((w.m, z.size))
    for s in range(w.m):
        shift = rng.uniform(-spread, spread) * width
        bumps = rng.normal(0.0, spread * width / 4.0, z.size)
        smooth = np.convolve(bumps, np.ones(5) / 5.0, mode="same")
        raw[s] = z + shift + smooth
    return nearest_congruent_family(raw, grid, w, L)


def estimate_poincare(spec: ScenarioSpec, n_funcs: int = 40,
                      resolution: int = 4096, seed: int = 0) -> float:
    """Monte-Carlo estimate of the Poincare-type constant of the prediction laws.

    Scans smooth test functions with Lipschitz derivative and reports the
    largest observed ratio ``Var(g) / E[(Dg)^2]``; scenario metadata only.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for s in range(spec.m):
        law = prediction_law(spec, s)
        lo, hi = law.support
        width = hi - lo
        t = (np.arange(resolution) + 0.5) / resolution
        zs = law.ppf(t)
        for _ in range(n_funcs):
            coef = rng.normal(0.0, 1.0, 4)
            freq = np.arange(1, 5) * np.pi / width
            # derivative is a low-order trig polynomial, so its own slope is
            # bounded and the test function has Lipschitz gradient
            dg = coef[0] + sum(coef[k] * np.sin(freq[k] * (zs - lo))
                               for k in range(1, 4))
            g = np.concatenate(([0.0], np.cumsum(
                0.5 * (dg[1:] + dg[:-1]) * np.diff(zs))))
            var_g = float(np.var(g))
            e_dg2 = float(np.mean(dg * dg))
            if e_dg2 > 1e-12:
                worst = max(worst, var_g / e_dg2)
    return worst
