"""Score, rank, and select target samples for annotation.

The headline metric sums a sample's squared distance to its nearest
source anchor and to its nearest (warm-up) target anchor, so the chosen
samples are simultaneously complementary to the source domain and
outliers in the target domain. The remaining metrics are the usual
single-signal baselines: prediction entropy, discriminator score, their
product, distance to a single whole-domain centroid, distance to source
anchors only, and a seeded random shuffle.

Selection is deterministic: scores are compared raw, ties break by
ascending sample id, and the random metric draws from a generator keyed
by the config seed. For a fixed metric, selections at growing budgets are
prefixes of one another.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import ImageVector
from .bank import AnchorBank, bank_fingerprint, nearest
from .errors import (
    InvalidValue,
    MissingInput,
    NotNormalized,
    ShapeMismatch,
    ZeroProbability,
)
from .rng import rng_for

METRICS = (
    "dual_domain",
    "source_only",
    "random",
    "entropy",
    "adversarial",
    "entropy_adversarial",
    "prototype",
)

PROB_SUM_TOL = 1e-4


@dataclass(frozen=True)
class SelectionConfig:
    budget_fraction: float = 0.05
    metric: str = "dual_domain"
    seed: int = 0
    direction: str = "largest"

    def __post_init__(self):
        if not 0.0 < self.budget_fraction <= 1.0:
            raise InvalidValue(f"budget_fraction is {self.budget_fraction}, must be in (0, 1]")
        if self.metric not in METRICS:
            raise InvalidValue(f"metric {self.metric!r} not in {METRICS}")
        if self.direction not in ("largest", "smallest"):
            raise InvalidValue(f"direction {self.direction!r} must be 'largest' or 'smallest'")


@dataclass(frozen=True)
class SampleRecord:
    """Everything the scoring metrics may need for one target sample."""

    id: str
    vector: ImageVector | None = None
    probability: np.ndarray | None = None  # C x H x W, post-softmax
    discriminator_score: float | None = None


@dataclass
class SelectionReport:
    metric: str
    direction: str
    budget_count: int
    scores: dict[str, float]  # sample id -> raw score
    ranks: dict[str, int]  # sample id -> 1-based rank (1 = selected first)
    selected_ids: list[str]
    bank_fingerprints: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "metric": self.metric,
            "direction": self.direction,
            "budget_count": self.budget_count,
            "selected_ids": self.selected_ids,
            "scores": self.scores,
            "ranks": self.ranks,
            "bank_fingerprints": self.bank_fingerprints,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def dual_domain_distance(feature, source_bank: AnchorBank, target_bank: AnchorBank) -> float:
    """Squared distance to the nearest source anchor plus nearest target anchor."""
    _, d_source = nearest(source_bank, feature)
    _, d_target = nearest(target_bank, feature)
    return d_source + d_target


def score_entropy(probability_map: np.ndarray, num_categories: int) -> float:
    """Summed prediction entropy, normalized to 1.0 at a uniform pixel."""
    p = np.asarray(probability_map, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] != num_categories:
        raise ShapeMismatch(
            f"probability map must be {num_categories} x H x W, got shape {p.shape}"
        )
    if p.min() < 0.0:
        raise NotNormalized(f"probabilities must be >= 0, found {p.min()}")
    sums = p.sum(axis=0)
    worst = float(np.abs(sums - 1.0).max())
    if worst > PROB_SUM_TOL:
        raise NotNormalized(f"per-pixel probability sums deviate from 1 by {worst}")
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return float(-terms.sum() / math.log(num_categories))


def score_adversarial(discriminator_prob: float) -> float:
    """(1 - p) / p for a discriminator's source-likeness probability."""
    p = float(discriminator_prob)
    if p <= 0.0:
        raise ZeroProbability(f"discriminator probability is {p}, must be in (0, 1]")
    if p > 1.0:
        raise InvalidValue(f"discriminator probability is {p}, must be in (0, 1]")
    return (1.0 - p) / p


def score_entropy_adversarial(entropy_score: float, adversarial_score: float) -> float:
    """Product of the entropy and adversarial scores."""
    return float(entropy_score) * float(adversarial_score)


def score_prototype(feature, centroid) -> float:
    """Squared distance to a single whole-domain centroid."""
    vec = feature.values if isinstance(feature, ImageVector) else np.asarray(feature, dtype=np.float64)
    eta = centroid.values if isinstance(centroid, ImageVector) else np.asarray(centroid, dtype=np.float64)
    if vec.shape != eta.shape:
        raise ShapeMismatch(f"feature shape {vec.shape} does not match centroid shape {eta.shape}")
    diff = vec - eta
    return float((diff * diff).sum())


def _require(value, metric: str, sample_id: str, what: str):
    if value is None:
        raise MissingInput(metric, sample_id, what)
    return value


def score_samples(
    samples: list[SampleRecord],
    cfg: SelectionConfig,
    source_bank: AnchorBank | None = None,
    target_bank: AnchorBank | None = None,
    centroid: np.ndarray | None = None,
) -> dict[str, float]:
    """Raw per-sample scores for the configured metric, keyed by id."""
    metric = cfg.metric
    scores: dict[str, float] = {}
    if metric == "random":
        rng = rng_for(cfg.seed, "selection.random")
        shuffled = rng.permutation(len(samples))
        for sample, position in zip(samples, shuffled):
            scores[sample.id] = float(position)
        return scores

    for sample in samples:
        if metric == "dual_domain":
            vec = _require(sample.vector, metric, sample.id, "an image vector")
            if source_bank is None or target_bank is None:
                raise MissingInput(metric, sample.id, "source and target anchor banks")
            scores[sample.id] = dual_domain_distance(vec, source_bank, target_bank)
        elif metric == "source_only":
            vec = _require(sample.vector, metric, sample.id, "an image vector")
            if source_bank is None:
                raise MissingInput(metric, sample.id, "a source anchor bank")
            scores[sample.id] = nearest(source_bank, vec)[1]
        elif metric == "entropy":
            prob = _require(sample.probability, metric, sample.id, "a probability map")
            scores[sample.id] = score_entropy(prob, prob.shape[0])
        elif metric == "adversarial":
            d = _require(sample.discriminator_score, metric, sample.id, "a discriminator score")
            scores[sample.id] = score_adversarial(d)
        elif metric == "entropy_adversarial":
            prob = _require(sample.probability, metric, sample.id, "a probability map")
            d = _require(sample.discriminator_score, metric, sample.id, "a discriminator score")
            scores[sample.id] = score_entropy_adversarial(
                score_entropy(prob, prob.shape[0]), score_adversarial(d)
            )
        elif metric == "prototype":
            vec = _require(sample.vector, metric, sample.id, "an image vector")
            if centroid is None:
                raise MissingInput(metric, sample.id, "a domain centroid")
            scores[sample.id] = score_prototype(vec, centroid)
        else:  # pragma: no cover - guarded by SelectionConfig
            raise InvalidValue(f"unknown metric {metric!r}")
    return scores


def budget_count(budget_fraction: float, n: int) -> int:
    return max(1, math.floor(budget_fraction * n))


def select(
    samples: list[SampleRecord],
    cfg: SelectionConfig,
    source_bank: AnchorBank | None = None,
    target_bank: AnchorBank | None = None,
    centroid: np.ndarray | None = None,
) -> SelectionReport:
    """Rank all samples by the configured metric and keep the budget."""
    if not samples:
        raise InvalidValue("cannot select from an empty sample list")
    scores = score_samples(samples, cfg, source_bank, target_bank, centroid)

    reverse = cfg.direction == "largest"
    ordered = sorted(scores, key=lambda sid: (-scores[sid] if reverse else scores[sid], sid))
    count = budget_count(cfg.budget_fraction, len(samples))

    fingerprints = {}
    if source_bank is not None:
        fingerprints["source"] = bank_fingerprint(source_bank)
    if target_bank is not None:
        fingerprints["target"] = bank_fingerprint(target_bank)

    return SelectionReport(
        metric=cfg.metric,
        direction=cfg.direction,
        budget_count=count,
        scores={sid: float(scores[sid]) for sid in sorted(scores)},
        ranks={sid: rank + 1 for rank, sid in enumerate(ordered)},
        selected_ids=ordered[:count],
        bank_fingerprints=fingerprints,
    )


def budget_sweep(
    samples: list[SampleRecord],
    fractions: list[float],
    cfg: SelectionConfig,
    source_bank: AnchorBank | None = None,
    target_bank: AnchorBank | None = None,
    centroid: np.ndarray | None = None,
) -> list[SelectionReport]:
    """One selection per budget fraction; deterministic metrics nest."""
    reports = []
    for fraction in fractions:
        sweep_cfg = SelectionConfig(
            budget_fraction=fraction,
            metric=cfg.metric,
            seed=cfg.seed,
            direction=cfg.direction,
        )
        reports.append(select(samples, sweep_cfg, source_bank, target_bank, centroid))
    return reports
