"""Human-in-the-loop triage simulation.

Fits the quality model on a seeded fit split, ranks the simulation split
by predicted mean Dice, forwards the worst-ranked images to a simulated
perfect annotator (score 1.0), and traces system performance over every
budget k against an oracle ranking and a random baseline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .statmodel import QualityModel, fit_quality_model, model_to_json, predict_quality
from .uncertainty import ClassUncertaintyVector

__all__ = [
    "SimulationConfig",
    "TriageCurve",
    "SimulationReport",
    "run_simulation",
    "run_simulation_report",
    "random_baseline",
    "export_curves",
]

POLICIES = ("uncertainty", "random", "oracle")


@dataclass(frozen=True)
class SimulationConfig:
    """Split sizes, seed, significance level, and random-baseline mode."""

    fit_count: int
    seed: int
    alpha: float = 0.05
    random_baseline_mode: str = "analytic"  # "analytic" | "monte_carlo"
    trials: int = 1000

    def __post_init__(self):
        if self.fit_count < 1:
            raise ValueError("fit_count must be >= 1")
        if self.random_baseline_mode not in ("analytic", "monte_carlo"):
            raise ValueError(
                f"unknown random_baseline_mode {self.random_baseline_mode!r}"
            )
        if self.random_baseline_mode == "monte_carlo" and self.trials < 1:
            raise ValueError("trials must be >= 1 for monte_carlo baseline")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")


@dataclass
class TriageCurve:
    """(budget, performance) series for one forwarding policy."""

    policy: str
    points: list[tuple[int, float]]


@dataclass
class SimulationReport:
    """Everything a run produced: model, split assignment, and curves."""

    config: SimulationConfig
    model: QualityModel
    fit_indices: list[int]
    sim_indices: list[int]
    curves: list[TriageCurve] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "format": "segtriage-simulation-report",
            "format_version": 1,
            "config": {
                "fit_count": self.config.fit_count,
                "seed": self.config.seed,
                "alpha": self.config.alpha,
                "random_baseline_mode": self.config.random_baseline_mode,
                "trials": self.config.trials,
            },
            "model": json.loads(model_to_json(self.model)),
            "fit_indices": self.fit_indices,
            "sim_indices": self.sim_indices,
            "curves": [
                {
                    "policy": curve.policy,
                    "points": [[k, perf] for k, perf in curve.points],
                }
                for curve in self.curves
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def random_baseline(d, k: int) -> float:
    """Expected performance of forwarding a uniform random subset of size k.

    By linearity of expectation: k/n + (1 - k/n) * mean(d).
    """
    dd = np.asarray(d, dtype=np.float64)
    n = dd.size
    if n == 0:
        raise ValueError("empty corpus")
    if not 0 <= k <= n:
        raise ValueError(f"budget k={k} outside [0, {n}]")
    frac = k / n
    return frac + (1.0 - frac) * float(np.mean(dd))


def _ranking_curve(policy: str, d: np.ndarray, order: np.ndarray) -> TriageCurve:
    """Performance at every budget for a static ranking.

    performance(k) = (k * 1.0 + sum of retained true Dice) / n. The
    endpoints use the exact identities performance(0) = mean(d) and
    performance(n) = 1.
    """
    n = d.size
    d_ord = d[order]
    mean_d = float(np.mean(d))
    retained = np.concatenate([np.cumsum(d_ord[::-1])[::-1], [0.0]])
    points: list[tuple[int, float]] = [(0, mean_d)]
    for k in range(1, n):
        points.append((k, (k + float(retained[k])) / n))
    points.append((n, 1.0))
    return TriageCurve(policy=policy, points=points)


def _monte_carlo_random_curve(
    d: np.ndarray, trials: int, rng: np.random.Generator
) -> TriageCurve:
    n = d.size
    acc = np.zeros(n + 1)
    for _ in range(trials):
        d_perm = d[rng.permutation(n)]
        retained = np.concatenate([np.cumsum(d_perm[::-1])[::-1], [0.0]])
        acc += (np.arange(n + 1) + retained) / n
    avg = acc / trials
    mean_d = float(np.mean(d))
    points = [(0, mean_d)]
    points.extend((k, float(avg[k])) for k in range(1, n))
    points.append((n, 1.0))
    return TriageCurve(policy="random", points=points)


def _analytic_random_curve(d: np.ndarray) -> TriageCurve:
    n = d.size
    points = [(k, random_baseline(d, k)) for k in range(n + 1)]
    return TriageCurve(policy="random", points=points)


def run_simulation_report(
    corpus: list[tuple[ClassUncertaintyVector, float]], config: SimulationConfig
) -> SimulationReport:
    """Run the full simulation, keeping the fitted model and split assignment.

    The model is fitted once on the seeded fit split and never refit as
    images are forwarded; ranking is static because predicted scores
    never change mid-simulation.
    """
    total = len(corpus)
    if config.fit_count >= total:
        raise ValueError(
            f"corpus of {total} images cannot supply a fit split of {config.fit_count}"
        )
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(total)
    fit_idx = [int(i) for i in perm[: config.fit_count]]
    sim_idx = [int(i) for i in perm[config.fit_count :]]

    model = fit_quality_model([corpus[i] for i in fit_idx], alpha=config.alpha)

    d = np.array([corpus[i][1] for i in sim_idx], dtype=np.float64)
    predicted = np.array(
        [predict_quality(model, corpus[i][0]) for i in sim_idx], dtype=np.float64
    )
    # ascending predicted quality: worst-estimated forwarded first
    unc_order = np.argsort(predicted, kind="stable")
    oracle_order = np.argsort(d, kind="stable")

    if config.random_baseline_mode == "analytic":
        random_curve = _analytic_random_curve(d)
    else:
        random_curve = _monte_carlo_random_curve(d, config.trials, rng)

    report = SimulationReport(
        config=config, model=model, fit_indices=fit_idx, sim_indices=sim_idx
    )
    report.curves = [
        _ranking_curve("uncertainty", d, unc_order),
        random_curve,
        _ranking_curve("oracle", d, oracle_order),
    ]
    return report


def run_simulation(
    corpus: list[tuple[ClassUncertaintyVector, float]], config: SimulationConfig
) -> list[TriageCurve]:
    """Budget-vs-performance curves for the uncertainty, random, and
    oracle policies."""
    return run_simulation_report(corpus, config).curves


def export_curves(curves: list[TriageCurve], sink) -> None:
    """CSV with columns policy, budget, performance; one row per point,
    ordering stable across runs."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["policy", "budget", "performance"])
    for curve in curves:
        for k, perf in curve.points:
            writer.writerow([curve.policy, k, repr(float(perf))])
