import json
import math
import warnings

import numpy as np
import pytest

from fairbary.errors import DomainError, InfeasibilityError
from fairbary.maps import (CongruentFamily, KnotGrid, MonotoneMap,
                           make_congruent, project_to_lipschitz, sieve_level)
from fairbary.measures import Weights


def random_valid_map(rng, lo=0.0, hi=2.0, K=8, L=2.0):
    knots = np.linspace(lo, hi, K + 1)
    slopes = rng.uniform(1.0 / L, L, K)
    values = np.concatenate(([rng.normal()],
                             np.cumsum(slopes * np.diff(knots)) + 0.0))
    values[1:] += values[0]
    return MonotoneMap(knots, values, L)


class TestEval:
    def test_identity(self):
        g = KnotGrid.uniform((0.0, 2.0), 3)
        m = MonotoneMap.identity(g, 2.0)
        zs = np.linspace(-1, 3, 41)
        assert np.allclose(m(zs), zs)

    def test_translation_with_extension(self):
        g = KnotGrid.uniform((0.0, 2.0), 2)
        m = MonotoneMap(g.knots, g.knots + 0.2, 2.0)
        for z in (-5.0, 0.0, 0.7, 2.0, 9.0):
            assert m(z) == pytest.approx(z + 0.2)
        assert m.c_inf == pytest.approx(0.2)
        assert m.c_sup == pytest.approx(0.2)

    def test_two_knot_interpolation(self):
        m = MonotoneMap(np.array([0.0, 1.0]), np.array([0.0, 2.0]), 2.0)
        assert m(0.25) == pytest.approx(0.5)

    def test_slope_bounds_enforced(self):
        knots = np.array([0.0, 1.0, 2.0])
        with pytest.raises(DomainError):
            MonotoneMap(knots, np.array([0.0, 3.0, 4.0]), 2.0)
        with pytest.raises(DomainError):
            MonotoneMap(knots, np.array([0.0, 0.1, 1.0]), 2.0)

    def test_bi_lipschitz_property(self):
        rng = np.random.default_rng(0)
        m = random_valid_map(rng, L=2.0)
        xs = rng.uniform(-1, 3, 1000)
        ys = rng.uniform(-1, 3, 1000)
        hi = np.maximum(xs, ys)
        lo = np.minimum(xs, ys)
        keep = hi > lo
        hi, lo = hi[keep], lo[keep]
        diff = m(hi) - m(lo)
        gap = hi - lo
        assert np.all(diff >= gap / 2.0 - 1e-9)
        assert np.all(diff <= gap * 2.0 + 1e-9)


class TestInvert:
    def test_identity(self):
        g = KnotGrid.uniform((0.0, 1.0), 2)
        m = MonotoneMap.identity(g, 1.5)
        inv = m.inverse()
        assert np.allclose(inv(np.linspace(0, 1, 11)), np.linspace(0, 1, 11))

    def test_translation(self):
        g = KnotGrid.uniform((0.0, 1.0), 2)
        m = MonotoneMap(g.knots, g.knots + 0.2, 1.5)
        inv = m.inverse()
        zs = np.linspace(-1, 2, 31)
        assert np.allclose(inv(zs), zs - 0.2)

    def test_round_trip_property(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            m = random_valid_map(rng)
            zs = rng.uniform(-2, 4, 1000)
            assert np.max(np.abs(m.inverse()(m(zs)) - zs)) <= 1e-10

    def test_involution_at_knots(self):
        rng = np.random.default_rng(2)
        m = random_valid_map(rng)
        back = m.inverse().inverse()
        assert np.max(np.abs(back.knots - m.knots)) <= 1e-12
        assert np.max(np.abs(back.values - m.values)) <= 1e-12

    def test_inverse_slopes_in_box(self):
        rng = np.random.default_rng(3)
        m = random_valid_map(rng, L=3.0)
        s = m.inverse().slopes
        assert np.all(s >= 1 / 3.0 - 1e-12) and np.all(s <= 3.0 + 1e-12)


class TestCongruentFamily:
    def test_all_identities_any_weights(self):
        g = KnotGrid.uniform((0.0, 2.0), 3)
        for w in (Weights([0.5, 0.5]), Weights([0.2, 0.3, 0.5])):
            fam = CongruentFamily.identity(g, w, 2.0)
            assert fam.congruency_residual(dense=512) <= 1e-14

    def test_make_congruent_translation(self):
        g = KnotGrid.uniform((0.0, 2.0), 3)
        w = Weights([0.5, 0.5])
        fam = make_congruent((g.knots - 0.2)[None, :], g, w, 2.0)
        zs = np.linspace(0, 2, 17)
        assert np.allclose(fam.inverses[1](zs), zs + 0.2)
        assert np.allclose(fam.maps[0](zs), zs + 0.2)
        assert np.allclose(fam.maps[1](zs), zs - 0.2)

    def test_make_congruent_three_group_closure(self):
        g = KnotGrid.uniform((0.0, 3.0), 2)
        w = Weights([1 / 3, 1 / 3, 1 / 3])
        a, b = 0.15, -0.05
        rows = np.stack([g.knots + a, g.knots + b])
        fam = make_congruent(rows, g, w, 2.0)
        zs = np.linspace(0, 3, 9)
        assert np.allclose(fam.inverses[2](zs), zs - a - b)

    def test_infeasible_closure_names_interval(self):
        g = KnotGrid.uniform((0.0, 1.0), 0)
        w = Weights([0.5, 0.5])
        # first inverse slope at the upper bound forces the induced slope
        # below the lower bound
        row = np.array([0.0, 2.0])[None, :]
        with pytest.raises(InfeasibilityError, match="knot interval"):
            make_congruent(row, g, w, 2.0)

    def test_dense_grid_congruency_is_float_exact(self):
        rng = np.random.default_rng(4)
        g = KnotGrid.uniform((0.0, 2.0), 4)
        w = Weights([0.4, 0.6])
        row = g.knots + 0.1 * np.sin(g.knots)
        fam = make_congruent(row[None, :], g, w, 2.0)
        assert fam.congruency_residual(dense=4096) <= 1e-12

    def test_residual_guard(self):
        g = KnotGrid.uniform((0.0, 1.0), 1)
        w = Weights([0.5, 0.5])
        m1 = MonotoneMap(g.knots, g.knots + 0.1, 2.0)
        m2 = MonotoneMap(g.knots, g.knots + 0.1, 2.0)
        with pytest.raises(DomainError):
            CongruentFamily((m1, m2), w)


class TestSieveLevel:
    def test_rule_examples_recomputed(self):
        for n_tilde, alpha, beta in ((1e4, 2.0, 1.0), (1e6, 2.0, 1.0),
                                     (200, 2.0, 1.0), (3e3, 1.0, 1.0)):
            target = (n_tilde / math.log(n_tilde)) ** (1 / (alpha + beta))
            j = sieve_level(n_tilde, alpha, beta)
            assert 2 ** j <= target <= 2 ** (j + 1)

    def test_known_value_at_1e4(self):
        # (1e4 / ln 1e4)^(1/3) ~ 10.28 sits between 2^3 and 2^4
        assert sieve_level(1e4, 2.0, 1.0) == 3

    def test_small_sample_clamps_with_warning(self):
        with pytest.warns(RuntimeWarning):
            assert sieve_level(2.5, 2.0, 1.0) == 0

    def test_invalid_inputs(self):
        with pytest.raises(DomainError):
            sieve_level(100, -1.0, 1.0)
        with pytest.raises(DomainError):
            sieve_level(0.0, 2.0, 1.0)


class TestProjection:
    def test_projection_clips_and_anchors(self):
        knots = np.linspace(0, 1, 5)
        raw = np.array([0.0, 0.5, 0.6, 0.61, 1.5])
        m = project_to_lipschitz(knots, raw, 2.0)
        s = m.slopes
        assert np.all(s >= 0.5 - 1e-12) and np.all(s <= 2.0 + 1e-12)
        assert m.values[2] == pytest.approx(raw[2])

    def test_projection_identity_on_feasible(self):
        rng = np.random.default_rng(5)
        g = KnotGrid.uniform((0.0, 2.0), 3)
        m = random_valid_map(rng, L=2.0)
        m2 = project_to_lipschitz(m.knots, m.values, 2.0)
        assert np.allclose(m2.values, m.values)


class TestSerialization:
    def test_json_round_trip_bit_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            m = random_valid_map(rng, lo=-1.3, hi=4.7, K=16, L=3.0)
            d = json.loads(m.to_json())
            m2 = MonotoneMap.from_dict(d)
            assert np.array_equal(m.knots, m2.knots)
            assert np.array_equal(m.values, m2.values)
            assert m.L == m2.L
            assert m.c_inf == m2.c_inf and m.c_sup == m2.c_sup

    def test_family_round_trip(self):
        g = KnotGrid.uniform((0.0, 2.0), 3)
        w = Weights([0.25, 0.75])
        row = g.knots + 0.05 * np.cos(g.knots)
        fam = make_congruent(row[None, :], g, w, 2.0)
        fam2 = CongruentFamily.from_dict(json.loads(fam.to_json()))
        for a, b in zip(fam.inverses, fam2.inverses):
            assert np.array_equal(a.knots, b.knots)
            assert np.array_equal(a.values, b.values)

    def test_grid_refinement_nests(self):
        g = KnotGrid.uniform((0.0, 2.0), 2)
        g2 = g.refine()
        assert g2.size == 2 * g.size
        assert set(np.round(g.knots, 12)).issubset(set(np.round(g2.knots, 12)))
