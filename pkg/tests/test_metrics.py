import numpy as np
import pytest
from scipy.stats import ks_2samp

from fairbary.errors import DomainError
from fairbary.maps import KnotGrid, make_congruent
from fairbary.measures import DomainInterval, EmpiricalMeasure, Weights
from fairbary.metrics import (BernsteinCase, bernstein_check,
                              bernstein_tail_bound, check_fairness_bound,
                              ks_statistic, unfairness, weighted_sq_distance)
from fairbary.potentials import QuadratureSpec
from fairbary.regression import FairRegressor
from fairbary.synth import UniformLaw, random_congruent_family

OMEGA = DomainInterval(0.0, 2.0)
W2 = Weights([0.5, 0.5])


class _FixedBase:
    def __init__(self, fn):
        self.fn = fn

    def predict(self, X):
        return self.fn(np.asarray(X, dtype=float)[:, 0])


def stub_fair(mean_shift=0.2, L=2.0, level=3):
    grid = KnotGrid.uniform(OMEGA, level)
    fam = make_congruent((grid.knots - mean_shift)[None, :], grid, W2, L)
    bases = (_FixedBase(lambda x: np.clip(x, 0, 2)),
             _FixedBase(lambda x: np.clip(x, 0, 2)))
    return FairRegressor(bases=bases, family=fam, omega=OMEGA, weights=W2)


class TestWeightedSqDistance:
    def test_zero_for_equal(self):
        f = [np.sin, np.cos]
        pts = [np.linspace(0, 1, 50), np.linspace(0, 1, 30)]
        assert weighted_sq_distance(f, f, pts, W2) == 0.0

    def test_constant_offset(self):
        f = [lambda z: z, lambda z: z]
        g = [lambda z: z + 0.3, lambda z: z + 0.3]
        pts = [np.linspace(0, 1, 50), np.linspace(0, 2, 64)]
        assert weighted_sq_distance(f, g, pts, W2) == pytest.approx(0.09)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(0)
        f = [lambda z: z ** 2, lambda z: np.sin(z)]
        g = [lambda z: z, lambda z: np.cos(z)]
        pts = [rng.uniform(0, 2, 77), rng.uniform(0, 2, 33)]
        direct = sum(
            W2.w[s] * np.mean((f[s](pts[s]) - g[s](pts[s])) ** 2)
            for s in range(2))
        assert weighted_sq_distance(f, g, pts, W2) == pytest.approx(direct)

    def test_quadrature_mode_closed_form(self):
        quad = QuadratureSpec.from_pdfs(
            [lambda z: np.ones_like(z), lambda z: np.ones_like(z)],
            [(0.0, 1.0), (0.0, 1.0)], 1 << 12)
        f = [lambda z: z, lambda z: z]
        g = [lambda z: np.zeros_like(z), lambda z: np.zeros_like(z)]
        # integral of z^2 over U[0,1] is 1/3
        assert weighted_sq_distance(f, g, quad, W2) == pytest.approx(
            1 / 3, abs=1e-6)

    def test_root_is_pseudo_metric(self):
        rng = np.random.default_rng(1)
        pts = [rng.uniform(0, 2, 40), rng.uniform(0, 2, 40)]
        fs = [[(lambda a: (lambda z: a * z + 0.1 * np.sin(z)))(a)] * 2
              for a in rng.uniform(0.5, 1.5, 3)]
        d = [np.sqrt(weighted_sq_distance(fs[i], fs[j], pts, W2))
             for i, j in ((0, 1), (1, 2), (0, 2))]
        assert d[2] <= d[0] + d[1] + 1e-12
        assert np.isclose(
            weighted_sq_distance(fs[0], fs[1], pts, W2),
            weighted_sq_distance(fs[1], fs[0], pts, W2))


class TestKS:
    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=257)
        b = rng.normal(0.3, 1.1, size=181)
        assert ks_statistic(a, b) == pytest.approx(
            ks_2samp(a, b).statistic)


class TestUnfairness:
    def test_identical_pushforwards(self):
        fair = stub_fair(mean_shift=0.0)
        rng = np.random.default_rng(3)
        feats = [rng.uniform(0.1, 1.1, 500)[:, None]] * 2
        rep = unfairness(fair, feats, W2)
        assert rep.upper_bound == 0.0
        assert rep.pairwise_max_w2 == 0.0
        assert rep.ks_max == 0.0

    def test_translation_value(self):
        fair = stub_fair(mean_shift=0.2)
        rng = np.random.default_rng(4)
        base = rng.uniform(0.2, 1.0, 4000)[:, None]
        rep = unfairness(fair, [base, base.copy()], W2)
        # same features, predictions differ by exactly 0.4
        assert rep.pairwise_max_w2 == pytest.approx(np.sqrt(0.5 * 0.4 ** 2))
        assert rep.upper_bound == pytest.approx(np.sqrt(0.5 * 0.2 ** 2))
        assert rep.ks_max > 0.3

    def test_convention_flag(self):
        fair = stub_fair(mean_shift=0.2)
        rng = np.random.default_rng(5)
        base = rng.uniform(0.2, 1.0, 1000)[:, None]
        half = unfairness(fair, [base, base.copy()], W2, convention="half")
        std = unfairness(fair, [base, base.copy()], W2,
                         convention="standard")
        assert std.upper_bound == pytest.approx(
            np.sqrt(2) * half.upper_bound)


def optimality_setup(fam, rng, n):
    """Feature samples whose identity-base pushforwards make ``fam`` optimal.

    Drawing a common barycenter sample and mapping it through each group's
    inverse makes the family's forward maps exactly the barycenter transport
    maps of the group laws.
    """
    feats = []
    for s in range(2):
        bary_draw = rng.uniform(0.3, 1.7, n)
        feats.append(fam.inverses[s](bary_draw)[:, None])
    bases = (_FixedBase(lambda x: x), _FixedBase(lambda x: x))
    fair = FairRegressor(bases=bases, family=fam, omega=OMEGA, weights=W2)
    ms = [EmpiricalMeasure.from_samples(fair.predict_base(s, feats[s]))
          for s in range(2)]
    return fair, feats, ms, bases


class TestFairnessBound:
    def test_oracle_equals_fit_passes(self):
        fam = stub_fair(mean_shift=0.2).family
        rng = np.random.default_rng(6)
        fair, feats, ms, _ = optimality_setup(fam, rng, 4000)
        bc = check_fairness_bound(fair, fam, ms, W2, feats)
        assert bc.passed
        assert bc.lhs <= 0.05  # only sampling noise remains

    def test_random_perturbations_hold(self):
        from fairbary.estimator import nearest_congruent_family
        rng = np.random.default_rng(7)
        grid = KnotGrid.uniform(OMEGA, 3)
        fails = 0
        for k in range(20):
            fam = random_congruent_family(grid, W2, 3.0,
                                          np.random.default_rng(k), spread=0.08)
            fair, feats, ms, bases = optimality_setup(
                fam, rng, 2 ** 14)
            # perturbed candidate: blend towards identity
            ident_vals = np.stack([grid.knots] * 2)
            vals = np.stack([inv.values for inv in fam.inverses])
            mix = 0.7 * vals + 0.3 * ident_vals
            cand = nearest_congruent_family(mix, grid, W2, 3.0)
            fair_cand = FairRegressor(bases=bases, family=cand, omega=OMEGA,
                                      weights=W2)
            bc = check_fairness_bound(fair_cand, fam, ms, W2, feats)
            fails += not bc.passed
        assert fails == 0


class TestBernstein:
    def test_bound_at_zero_threshold(self):
        assert bernstein_tail_bound(0.0, 1000, 0.1, 1.0) == 1.0

    def test_near_degenerate_law(self):
        grid = KnotGrid.uniform(OMEGA, 2)
        from fairbary.maps import CongruentFamily
        fam = CongruentFamily.identity(grid, W2, 2.0)
        laws = [UniformLaw(1.0, 1.0 + 1e-9)] * 2
        case = BernsteinCase(sigma2=1e-6, b=1e-3,
                             t_grid=np.array([1e-4, 1e-3]), n_reps=200)
        rows = bernstein_check(fam, laws, W2, case, n_sizes=[50, 50], seed=0)
        for row in rows:
            assert row["empirical_freq"] == 0.0

    def test_uniform_case_respects_bound(self):
        grid = KnotGrid.uniform(OMEGA, 3)
        fam = make_congruent((grid.knots - 0.1)[None, :], grid, W2, 2.0)
        laws = [UniformLaw(0.0, 1.0), UniformLaw(0.2, 1.2)]
        quad = QuadratureSpec.from_pdfs([l.pdf for l in laws],
                                        [l.support for l in laws], 1 << 12)
        from fairbary.potentials import PotentialPair
        pots = [PotentialPair(inv) for inv in fam.inverses]
        e = [quad.expectation(s, pots[s].u) for s in range(2)]
        var = [quad.expectation(s, lambda z, s=s: (pots[s].u(z) - e[s]) ** 2)
               for s in range(2)]
        sigma2 = float(np.dot(W2.w, var)) * 1.02
        b = max(float(np.max(np.abs(pots[s].u(quad.nodes[s]) - e[s])))
                for s in range(2)) * 1.02
        case = BernsteinCase.from_bound_levels(sigma2, b, n_tilde=400,
                                               n_reps=2000)
        rows = bernstein_check(fam, laws, W2, case, n_sizes=[200, 200], seed=1)
        for row in rows:
            se = np.sqrt(max(row["empirical_freq"]
                             * (1 - row["empirical_freq"]), 1e-12) / 2000)
            assert row["empirical_freq"] <= row["bound"] + 3 * se

    def test_inconsistent_constants_warn(self):
        grid = KnotGrid.uniform(OMEGA, 2)
        from fairbary.maps import CongruentFamily
        fam = CongruentFamily.identity(grid, W2, 2.0)
        laws = [UniformLaw(0.0, 2.0)] * 2
        case = BernsteinCase(sigma2=1e-12, b=1e-12,
                             t_grid=np.array([0.1]), n_reps=10)
        with pytest.warns(RuntimeWarning):
            bernstein_check(fam, laws, W2, case, n_sizes=[20, 20])

    def test_case_validation(self):
        with pytest.raises(DomainError):
            BernsteinCase(sigma2=0.0, b=1.0, t_grid=np.array([0.1]), n_reps=5)
