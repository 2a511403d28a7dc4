"""Triage simulation: hand examples, baselines, dominance, determinism."""

import io

import numpy as np
import pytest

from segtriage.simulate import (
    SimulationConfig,
    TriageCurve,
    export_curves,
    random_baseline,
    run_simulation,
    run_simulation_report,
)
from segtriage.simulate import _ranking_curve
from segtriage.uncertainty import ClassUncertaintyVector


def cuv(values):
    u = tuple(float(v) for v in values)
    return ClassUncertaintyVector(u=u, pixel_counts=tuple(10 for _ in values))


def linear_corpus(n, seed, noise=0.0, num_classes=2):
    """Corpus where dice decreases linearly in class-0 uncertainty."""
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(n):
        u = rng.uniform(0.05, 1.0, size=num_classes)
        d = 0.95 - 0.5 * u[0] + noise * float(rng.normal())
        corpus.append((cuv(u), float(min(max(d, 0.0), 1.0))))
    return corpus


class TestRandomBaseline:
    def test_k_zero_is_mean(self):
        d = [0.5, 0.7, 0.9]
        assert random_baseline(d, 0) == np.mean(d)

    def test_k_n_is_one(self):
        assert random_baseline([0.5, 0.7, 0.9], 3) == 1.0

    def test_expectation_formula(self):
        d = [0.6] * 10
        assert abs(random_baseline(d, 5) - 0.8) < 1e-12

    def test_budget_bounds(self):
        with pytest.raises(ValueError):
            random_baseline([0.5], 2)


class TestRankingCurve:
    def test_hand_example_perfect_ranking_k1(self):
        d = np.array([0.5, 0.7, 0.9])
        curve = _ranking_curve("oracle", d, np.argsort(d))
        assert abs(curve.points[1][1] - (1 + 0.7 + 0.9) / 3) < 1e-12
        assert round(curve.points[1][1], 4) == 0.8667

    def test_boundaries(self):
        d = np.array([0.5, 0.7, 0.9])
        curve = _ranking_curve("oracle", d, np.argsort(d))
        assert curve.points[0] == (0, np.mean(d))
        assert curve.points[-1] == (3, 1.0)

    def test_monotone_for_any_static_ranking(self, rng):
        d = rng.uniform(0.0, 1.0, size=25)
        order = rng.permutation(25)
        curve = _ranking_curve("uncertainty", d, order)
        perfs = [p for _, p in curve.points]
        assert all(b >= a - 1e-12 for a, b in zip(perfs, perfs[1:]))


class TestRunSimulation:
    def test_curves_cover_all_budgets_and_policies(self):
        corpus = linear_corpus(30, seed=1)
        config = SimulationConfig(fit_count=15, seed=3)
        curves = run_simulation(corpus, config)
        assert [c.policy for c in curves] == ["uncertainty", "random", "oracle"]
        n = 15
        for curve in curves:
            assert [k for k, _ in curve.points] == list(range(n + 1))
            assert curve.points[-1][1] == 1.0

    def test_oracle_dominates_uncertainty_everywhere(self):
        corpus = linear_corpus(40, seed=2, noise=0.05)
        config = SimulationConfig(fit_count=20, seed=5)
        unc, rand, oracle = run_simulation(corpus, config)
        for (_, pu), (_, po) in zip(unc.points, oracle.points):
            assert po >= pu - 1e-12

    def test_uncertainty_beats_random_on_coupled_corpus(self):
        corpus = linear_corpus(60, seed=4, noise=0.02)
        config = SimulationConfig(fit_count=30, seed=6)
        unc, rand, oracle = run_simulation(corpus, config)
        n = len(unc.points) - 1
        for (_, pu), (_, pr) in zip(unc.points, rand.points):
            assert pu >= pr - 1e-9
        k_half = n // 2
        assert unc.points[k_half][1] > rand.points[k_half][1]

    def test_identical_seed_gives_byte_identical_csv(self):
        corpus = linear_corpus(30, seed=7, noise=0.03)
        config = SimulationConfig(fit_count=15, seed=8)
        outputs = []
        for _ in range(2):
            buf = io.StringIO()
            export_curves(run_simulation(corpus, config), buf)
            outputs.append(buf.getvalue().encode())
        assert outputs[0] == outputs[1]

    def test_fit_split_too_large_raises(self):
        corpus = linear_corpus(10, seed=9)
        with pytest.raises(ValueError):
            run_simulation(corpus, SimulationConfig(fit_count=10, seed=0))

    def test_report_carries_split_and_model(self):
        corpus = linear_corpus(30, seed=10, noise=0.02)
        config = SimulationConfig(fit_count=18, seed=11)
        report = run_simulation_report(corpus, config)
        assert len(report.fit_indices) == 18
        assert len(report.sim_indices) == 12
        assert set(report.fit_indices) | set(report.sim_indices) == set(range(30))
        assert report.model.n_observations == 18
        doc = report.to_json()
        assert "uncertainty" in doc and "oracle" in doc

    def test_static_ranking_equals_iterated_minimum(self):
        """Forwarding k worst equals k iterations of forward-the-minimum."""
        corpus = linear_corpus(24, seed=12, noise=0.02)
        config = SimulationConfig(fit_count=12, seed=13)
        report = run_simulation_report(corpus, config)
        from segtriage.statmodel import predict_quality

        d = np.array([corpus[i][1] for i in report.sim_indices])
        pred = np.array(
            [predict_quality(report.model, corpus[i][0]) for i in report.sim_indices]
        )
        n = d.size
        unc_curve = report.curves[0]
        remaining = list(range(n))
        forwarded: list[int] = []
        for k in range(1, n + 1):
            worst = min(remaining, key=lambda i: (pred[i], i))
            remaining.remove(worst)
            forwarded.append(worst)
            perf = (len(forwarded) + sum(d[i] for i in remaining)) / n
            assert abs(unc_curve.points[k][1] - perf) < 1e-9


class TestMonteCarloBaseline:
    def test_converges_to_analytic(self):
        rng = np.random.default_rng(20)
        d = rng.uniform(0.2, 1.0, size=50)
        corpus = [
            (cuv([u, float(rng.uniform(0, 1))]), float(v))
            for u, v in zip(rng.uniform(0, 1, 50), d)
        ]
        # direct comparison of the two baseline modes on the same split
        cfg_mc = SimulationConfig(
            fit_count=10, seed=21, random_baseline_mode="monte_carlo", trials=10_000
        )
        cfg_an = SimulationConfig(fit_count=10, seed=21)
        mc = run_simulation(corpus, cfg_mc)[1]
        an = run_simulation(corpus, cfg_an)[1]
        for (_, pm), (_, pa) in zip(mc.points, an.points):
            assert abs(pm - pa) < 0.01


class TestExportCurves:
    def test_csv_shape_and_header(self):
        curve = TriageCurve(policy="oracle", points=[(0, 0.5), (1, 1.0)])
        buf = io.StringIO()
        export_curves([curve], buf)
        lines = buf.getvalue().strip().split("\n")
        assert lines[0] == "policy,budget,performance"
        assert lines[1] == "oracle,0,0.5"
        assert len(lines) == 3


class TestConfigValidation:
    def test_bad_mode(self):
        with pytest.raises(ValueError):
            SimulationConfig(fit_count=5, seed=0, random_baseline_mode="guess")

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            SimulationConfig(
                fit_count=5, seed=0, random_baseline_mode="monte_carlo", trials=0
            )
