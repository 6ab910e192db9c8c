"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; the whole module is deterministic given the seeds fixed below.
"""

import json
import os
import time

import numpy as np
import pytest

from fairbary import cli
from fairbary.estimator import (SieveSpec, SolverConfig, fit_maps, map_error,
                                nearest_congruent_family)
from fairbary.maps import CongruentFamily, KnotGrid, MonotoneMap, make_congruent
from fairbary.measures import DomainInterval, EmpiricalMeasure, Weights
from fairbary.metrics import (BernsteinCase, bernstein_check,
                              check_fairness_bound, unfairness)
from fairbary.potentials import PotentialPair, QuadratureSpec, correlation_gap
from fairbary.regression import averaged_reduction, fit_fair
from fairbary.synth import (ScenarioSpec, UniformLaw, generate, make_truth,
                            oracle_family_from_measures, prediction_law,
                            pushforward_samples, random_congruent_family,
                            fresh_features)

SCENARIOS = ("translation", "gaussian", "nonlinear-monotone")

# families produced while the acceptance suite runs; criterion 2 audits them
FAMILIES = []


def report(criterion: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion} {name}: {status} ({detail})")


@pytest.fixture(scope="module")
def sweep_result():
    spec = ScenarioSpec.default("translation", seed=0)
    t0 = time.perf_counter()
    cells = cli.run_sweep(spec, [2 ** k for k in range(8, 15)],
                          replicates=20, master_seed=2024,
                          workers=os.cpu_count())
    elapsed = time.perf_counter() - t0
    return cells, elapsed


class TestCriterion1OracleEquivalence:
    def test_translation_and_gaussian(self):
        # translation: analytic maps are the +/- 0.2 shifts
        spec = ScenarioSpec.default("translation", seed=11)
        t0 = time.perf_counter()
        samples, truth = generate(spec, [10_000, 10_000])
        ms = pushforward_samples(truth, samples)
        sieve = SieveSpec.from_data(ms, spec.weights, spec.omega, L=spec.L)
        rep = fit_maps(ms, spec.weights, sieve, SolverConfig(seed=11))
        FAMILIES.append(rep.family)
        analytic = make_congruent((sieve.grid.knots - 0.2)[None, :],
                                  sieve.grid, spec.weights, spec.L)
        d2_translation = map_error(rep.family, analytic, ms, spec.weights)
        elapsed = time.perf_counter() - t0

        # gaussian: compare to the quantile-oracle maps on the central 98%
        spec_g = ScenarioSpec.default("gaussian", seed=12)
        samples_g, truth_g = generate(spec_g, [10_000, 10_000])
        ms_g = pushforward_samples(truth_g, samples_g)
        sieve_g = SieveSpec.from_data(ms_g, spec_g.weights, spec_g.omega,
                                      L=spec_g.L)
        rep_g = fit_maps(ms_g, spec_g.weights, sieve_g, SolverConfig(seed=12))
        FAMILIES.append(rep_g.family)
        central = []
        rng = np.random.default_rng(123)
        for s in range(2):
            law = prediction_law(spec_g, s)
            central.append(EmpiricalMeasure.from_samples(
                law.ppf(rng.uniform(0.01, 0.99, 20_000))))
        d2_gaussian = map_error(rep_g.family, truth_g.theta_star, central,
                                spec_g.weights)

        ok = (d2_translation <= 1e-2 and elapsed <= 60.0
              and d2_gaussian <= 2e-2)
        report(1, "oracle-equivalence", ok,
               f"translation d2={d2_translation:.2e} (tol 1e-2, "
               f"{elapsed:.1f}s/60s), gaussian central-98% d2="
               f"{d2_gaussian:.2e} (tol 2e-2)")
        assert d2_translation <= 1e-2
        assert elapsed <= 60.0
        assert d2_gaussian <= 2e-2


class TestCriterion3PotentialMapSandwich:
    def test_sandwich_on_three_populations(self):
        omega = DomainInterval(0.0, 2.0)
        w = Weights([0.5, 0.5])
        L = 3.0
        grid = KnotGrid.uniform(omega, 4)
        res = 1 << 14
        edges = np.linspace(0.05, 1.95, res + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        widths = np.diff(edges)
        dens = {
            "flat": np.ones_like(mids),
            "peaked": np.exp(-0.5 * ((mids - 1.0) / 0.35) ** 2),
            "skewed": mids ** 2 * (2.0 - mids),
        }
        t0 = time.perf_counter()
        worst_lo, worst_hi = np.inf, np.inf
        trials = 0
        failures = 0
        for pop_idx, key in enumerate(sorted(dens)):
            qw = dens[key] * widths
            qw = qw / qw.sum()
            truth = random_congruent_family(
                grid, w, L, np.random.default_rng(900 + pop_idx), spread=0.12)
            # group laws are the barycenter density pushed through the
            # inverse truth maps, so the truth family is exactly optimal
            nodes = tuple(truth.inverses[s](mids) for s in range(2))
            quad = QuadratureSpec(nodes, (qw, qw))
            n_fams = 34 if pop_idx == 0 else 33
            for k in range(n_fams):
                fam = random_congruent_family(
                    grid, w, L, np.random.default_rng(3000 + 100 * pop_idx + k),
                    spread=0.10)
                gap = correlation_gap(fam, truth, quad)
                d2 = 0.0
                for s in range(2):
                    diff = fam.maps[s](nodes[s]) - truth.maps[s](nodes[s])
                    d2 += w.w[s] * float(np.dot(qw, diff * diff))
                lo_margin = gap - d2 / (2 * L)
                hi_margin = L / 2 * d2 - gap
                worst_lo = min(worst_lo, lo_margin)
                worst_hi = min(worst_hi, hi_margin)
                trials += 1
                if lo_margin < -1e-6 or hi_margin < -1e-6:
                    failures += 1
        elapsed = time.perf_counter() - t0
        ok = failures == 0 and elapsed <= 30.0
        report(3, "potential-map-sandwich", ok,
               f"{trials} trials, 0 tolerance 1e-6, worst lower margin "
               f"{worst_lo:.2e}, worst upper margin {worst_hi:.2e}, "
               f"{elapsed:.1f}s/30s")
        assert failures == 0
        assert trials == 100
        assert elapsed <= 30.0


class TestCriterion4RateSlope:
    def test_rate_slope(self, sweep_result):
        cells, elapsed = sweep_result
        good = [c for c in cells if c["error"] is None]
        assert len(good) == len(cells), "sweep cells failed"
        medians = {}
        for n in sorted({c["n"] for c in good}):
            medians[n] = float(np.median(
                [c["map_error"] for c in good if c["n"] == n]))
        ns = np.array(sorted(medians))
        ys = np.array([medians[n] for n in ns])
        slope = float(np.polyfit(np.log(ns), np.log(ys), 1)[0])
        ok = slope <= -0.45 and elapsed <= 900.0
        report(4, "rate-slope", ok,
               f"fitted slope {slope:.3f} <= -0.45 (stated -2/3), "
               f"sweep {elapsed:.0f}s/900s, medians "
               + ", ".join(f"{n}:{medians[n]:.1e}" for n in ns))
        assert slope <= -0.45
        assert elapsed <= 900.0


class TestCriterion5FairnessConsistency:
    def test_unfairness_shrinks_and_bound_holds(self, sweep_result):
        cells, _ = sweep_result
        good = [c for c in cells if c["error"] is None]
        ub_small = np.median([c["unfairness_ub"] for c in good
                              if c["n"] == 2 ** 8])
        ub_large = np.median([c["unfairness_ub"] for c in good
                              if c["n"] == 2 ** 14])
        bound_frac = np.mean([c["bound_ok"] for c in good])
        ok = (ub_large <= ub_small / 3.0) and bound_frac >= 0.99
        report(5, "fairness-consistency", ok,
               f"median ub {ub_small:.4f} @2^8 -> {ub_large:.4f} @2^14 "
               f"(need <= 1/3), bound holds in {100 * bound_frac:.1f}% of "
               f"cells (need >= 99%)")
        assert ub_large <= ub_small / 3.0
        assert bound_frac >= 0.99


class TestCriterion6ErrorDecomposition:
    def test_decomposition_all_scenarios(self):
        n = 2 ** 12
        replicates = 20
        results = {}
        for scen in SCENARIOS:
            holds = 0
            for r in range(replicates):
                seed = 5000 + 97 * r
                spec = ScenarioSpec.default(scen, seed=seed)
                samples, truth = generate(spec, [n] * 2)
                fair = fit_fair(samples, spec.weights, spec.omega, seed=seed)
                FAMILIES.append(fair.family)
                n_eval = 2 ** 15
                feats = fresh_features(spec, [n_eval] * 2, seed=seed + 1)
                push_ms = [EmpiricalMeasure.from_samples(
                    fair.predict_base(s, feats[s])) for s in range(2)]
                ofam = oracle_family_from_measures(
                    push_ms, spec.weights,
                    KnotGrid.uniform(spec.omega, 7), spec.L)
                merr = map_error(fair.family, ofam, push_ms, spec.weights)
                terr = 0.0
                terr_var = 0.0
                berr = 0.0
                for s in range(2):
                    diff = (fair.predict(s, feats[s])
                            - truth.fair_bayes[s](feats[s]))
                    sq = diff * diff
                    terr += spec.weights.w[s] * float(np.mean(sq))
                    terr_var += (spec.weights.w[s] ** 2
                                 * float(np.var(sq)) / sq.size)
                    bdiff = (fair.predict_base(s, feats[s])
                             - truth.f_star[s](feats[s]))
                    berr += spec.weights.w[s] * float(np.mean(bdiff * bdiff))
                mc_se = float(np.sqrt(terr_var))
                rhs = 3 * merr + 9 * spec.L ** 2 * berr + 3 * mc_se
                holds += terr <= rhs
            results[scen] = holds / replicates
        ok = all(frac >= 0.95 for frac in results.values())
        report(6, "error-decomposition", ok,
               ", ".join(f"{k}: {100 * v:.0f}%" for k, v in results.items())
               + " (need >= 95% each)")
        for scen, frac in results.items():
            assert frac >= 0.95, scen


class TestCriterion7BernsteinBound:
    def test_tail_bound_on_uniform_scenario(self):
        t0 = time.perf_counter()
        omega = DomainInterval(0.0, 2.0)
        w = Weights([0.5, 0.5])
        grid = KnotGrid.uniform(omega, 3)
        family = random_congruent_family(grid, w, 3.0,
                                         np.random.default_rng(77),
                                         spread=0.1)
        laws = [UniformLaw(0.1, 1.1), UniformLaw(0.5, 1.5)]
        quad = QuadratureSpec.from_pdfs([l.pdf for l in laws],
                                        [l.support for l in laws], 1 << 13)
        pots = [PotentialPair(inv) for inv in family.inverses]
        e = [quad.expectation(s, pots[s].u) for s in range(2)]
        var = [quad.expectation(s, lambda z, s=s: (pots[s].u(z) - e[s]) ** 2)
               for s in range(2)]
        sigma2 = float(np.dot(w.w, var)) * 1.01
        b = max(float(np.max(np.abs(pots[s].u(quad.nodes[s]) - e[s])))
                for s in range(2)) * 1.01
        n_reps = 10_000
        case = BernsteinCase.from_bound_levels(sigma2, b, n_tilde=1000,
                                               n_reps=n_reps)
        assert case.t_grid.size == 10
        rows = bernstein_check(family, laws, w, case, n_sizes=[500, 500],
                               seed=7)
        elapsed = time.perf_counter() - t0
        violations = []
        for row in rows:
            se = np.sqrt(max(row["empirical_freq"]
                             * (1 - row["empirical_freq"]), 0.0) / n_reps)
            if row["empirical_freq"] > row["bound"] + 3 * se:
                violations.append(row)
        ok = not violations and elapsed <= 120.0
        worst = max((r["empirical_freq"] / max(r["bound"], 1e-12)
                     for r in rows))
        report(7, "bernstein-bound", ok,
               f"10-point grid, worst freq/bound ratio {worst:.2f} "
               f"(bound is conservative), {elapsed:.1f}s/120s")
        assert not violations
        assert elapsed <= 120.0


class TestCriterion8LowerBoundReduction:
    def test_identical_groups_reduction(self):
        spec0 = ScenarioSpec.default("translation", seed=31)
        spec = ScenarioSpec(spec0.name, spec0.weights,
                            {"shifts": [0.0, 0.0], "x_range": (0.1, 1.1)},
                            spec0.noise_sd, spec0.omega, seed=31)
        samples, truth = generate(spec, [10_000, 10_000])
        fair = fit_fair(samples, spec.weights, spec.omega, seed=31)
        FAMILIES.append(fair.family)
        held, _ = generate(
            ScenarioSpec(spec.name, spec.weights, spec.params, spec.noise_sd,
                         spec.omega, seed=977), [4000, 4000])
        X_hold = np.vstack([h.xs for h in held])
        y_hold = np.concatenate([h.ys for h in held])
        reduce_fn = averaged_reduction(fair)
        red_mse = float(np.mean((reduce_fn(X_hold) - y_hold) ** 2))
        base_mse = float(np.mean((fair.predict_base(0, X_hold) - y_hold) ** 2))
        zs = np.linspace(spec.omega.lo, spec.omega.hi, 4097)
        sup_dev = max(float(np.max(np.abs(fair.family.maps[s](zs) - zs)))
                      for s in range(2))
        ok = red_mse <= 2 * base_mse and sup_dev <= 0.05
        report(8, "lower-bound-reduction", ok,
               f"reduction mse {red_mse:.5f} <= 2x base mse {base_mse:.5f}, "
               f"sup |map - id| = {sup_dev:.4f} (tol 0.05)")
        assert red_mse <= 2 * base_mse
        assert sup_dev <= 0.05


class TestCriterion9Determinism:
    def test_byte_identical_runs_and_exact_round_trip(self, tmp_path):
        sim = tmp_path / "sim"
        assert cli.main(["simulate", "--scenario", "translation", "--n",
                         "2000,2000", "--seed", "13", "--out", str(sim)]) == 0
        payloads = []
        for tag in ("one", "two"):
            out = tmp_path / tag
            assert cli.main(["fit", "--data", str(sim / "data.csv"), "--out",
                             str(out), "--omega", "0,2", "--seed", "13"]) == 0
            payloads.append((out / "maps.json").read_bytes())
        byte_identical = payloads[0] == payloads[1]

        rng = np.random.default_rng(99)
        exact = True
        for _ in range(20):
            knots = np.sort(rng.uniform(-3, 3, 9))
            knots[0], knots[-1] = knots[0] - 1.0, knots[-1] + 1.0
            slopes = rng.uniform(0.5, 2.0, 8)
            values = np.concatenate((
                [rng.normal() * 10.0 ** float(rng.integers(-8, 8))],
                np.zeros(8)))
            values[1:] = values[0] + np.cumsum(slopes * np.diff(knots))
            m = MonotoneMap(knots, values, 2.0)
            m2 = MonotoneMap.from_dict(json.loads(m.to_json()))
            exact &= (np.array_equal(m.knots, m2.knots)
                      and np.array_equal(m.values, m2.values)
                      and m.L == m2.L)
        ok = byte_identical and exact
        report(9, "determinism-round-trip", ok,
               f"maps.json byte-identical: {byte_identical}, "
               f"17-digit round-trip exact on 20 random maps: {exact}")
        assert byte_identical
        assert exact

        fam = CongruentFamily.from_dict(
            json.loads(payloads[0].decode("utf-8")))
        FAMILIES.append(fam)


class TestCriterion2Congruency:
    """Runs last: audits every family produced during the acceptance run."""

    def test_all_returned_families_congruent(self, sweep_result):
        cells, _ = sweep_result
        knot_resids = [c["congruency_residual"] for c in cells
                       if c["error"] is None]
        dense_resids = [c["dense_residual"] for c in cells
                        if c["error"] is None]
        for fam in FAMILIES:
            knot_resids.append(fam.congruency_residual())
            dense_resids.append(fam.congruency_residual(dense=4096))
        worst_knot = max(knot_resids)
        worst_dense = max(dense_resids)
        count = len(knot_resids)
        ok = worst_knot <= 1e-10 and worst_dense <= 1e-9
        report(2, "congruency", ok,
               f"{count} families audited, worst knot residual "
               f"{worst_knot:.2e} (tol 1e-10), worst dense residual "
               f"{worst_dense:.2e} (tol 1e-9)")
        assert worst_knot <= 1e-10
        assert worst_dense <= 1e-9
