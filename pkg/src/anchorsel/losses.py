"""Numerical loss kernels for the semi-supervised training recipe.

Everything here operates on post-softmax probability maps and integer
category maps; no network is involved. Pixels labeled 65535 are excluded
from both the numerator and the denominator of every average, so an
un-annotatable region can never bias a loss. Probabilities are floored at
``CLAMP_P`` inside logarithms (and the matching gradient entries are
zeroed), keeping every value and gradient finite.

Losses that are differentiable return an analytic gradient alongside the
value; the hard-example-mined loss instead returns the boolean pixel mask
it averaged over, since its pixel selection is not differentiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregation import ImageVector
from .bank import AnchorBank
from .errors import InvalidValue, NotNormalized, NoValidPixels, ShapeMismatch
from .tensor_io import IGNORE_LABEL

CLAMP_P = 1e-12
DIST_CLAMP = 1e-8
PROB_SUM_TOL = 1e-4


@dataclass(frozen=True)
class OhemConfig:
    prob_threshold: float = 0.7
    min_kept_fraction: float = 1.0 / 16.0

    def __post_init__(self):
        if not 0.0 < self.prob_threshold < 1.0:
            raise InvalidValue(f"prob_threshold is {self.prob_threshold}, must be in (0, 1)")
        if not 0.0 < self.min_kept_fraction <= 1.0:
            raise InvalidValue(
                f"min_kept_fraction is {self.min_kept_fraction}, must be in (0, 1]"
            )


@dataclass
class LossValue:
    value: float
    gradient: np.ndarray | None = None
    pixel_mask: np.ndarray | None = None


@dataclass(frozen=True)
class PixelLossInput:
    """Post-softmax probabilities (C x H x W) and a category map (H x W)."""

    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        y = np.asarray(self.labels)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "labels", y)
        if p.ndim != 3:
            raise ShapeMismatch(f"probabilities must be C x H x W, got shape {p.shape}")
        if y.shape != p.shape[1:]:
            raise ShapeMismatch(
                f"labels shape {y.shape} does not match probability spatial dims {p.shape[1:]}"
            )
        if p.min() < 0.0:
            raise NotNormalized(f"probabilities must be >= 0, found {p.min()}")
        sums = p.sum(axis=0)
        worst = float(np.abs(sums - 1.0).max())
        if worst > PROB_SUM_TOL:
            raise NotNormalized(f"per-pixel probability sums deviate from 1 by {worst}")
        valid = y[y != IGNORE_LABEL]
        if valid.size and (valid.min() < 0 or valid.max() >= p.shape[0]):
            bad = int(valid.min()) if valid.min() < 0 else int(valid.max())
            raise InvalidValue(f"label value {bad} outside [0, {p.shape[0]})")

    @property
    def num_categories(self) -> int:
        return self.probabilities.shape[0]


def _true_class_probs(inp: PixelLossInput) -> tuple[np.ndarray, np.ndarray]:
    """Flat (p_true, flat_index) arrays over non-ignored pixels, row-major."""
    y = inp.labels.ravel()
    valid = np.flatnonzero(y != IGNORE_LABEL)
    flat_p = inp.probabilities.reshape(inp.num_categories, -1)
    return flat_p[y[valid], valid], valid


def cross_entropy(inp: PixelLossInput) -> LossValue:
    """Mean negative log-probability of the true class over valid pixels.

    The gradient with respect to the probability tensor is
    -1 / (N * p) at each pixel's true-class entry and zero elsewhere.
    """
    p_true, valid = _true_class_probs(inp)
    if valid.size == 0:
        raise NoValidPixels("every pixel is ignore-labeled")
    n = valid.size
    clamped = np.maximum(p_true, CLAMP_P)
    value = float(-(np.log(clamped)).sum() / n)

    grad = np.zeros_like(inp.probabilities)
    flat = grad.reshape(inp.num_categories, -1)
    unclamped = p_true >= CLAMP_P
    rows = inp.labels.ravel()[valid[unclamped]]
    flat[rows, valid[unclamped]] = -1.0 / (n * p_true[unclamped])
    return LossValue(value=value, gradient=grad)


def seg_loss(source_input: PixelLossInput, active_target_input: PixelLossInput) -> LossValue:
    """Supervised term: cross-entropy on source plus on labeled target."""
    return LossValue(
        value=cross_entropy(source_input).value + cross_entropy(active_target_input).value
    )


def ohem_cross_entropy(inp: PixelLossInput, cfg: OhemConfig = OhemConfig()) -> LossValue:
    """Cross-entropy averaged over the hard pixels only.

    A pixel is hard when its true-class probability falls below the
    threshold; if too few qualify, exactly ceil(min_kept_fraction * N) of
    the lowest-probability pixels are kept (ties broken by pixel index).
    """
    p_true, valid = _true_class_probs(inp)
    if valid.size == 0:
        raise NoValidPixels("every pixel is ignore-labeled")
    n = valid.size

    hard = p_true < cfg.prob_threshold
    if hard.sum() < cfg.min_kept_fraction * n:
        keep = math.ceil(cfg.min_kept_fraction * n)
        order = np.argsort(p_true, kind="stable")  # ascending, ties by pixel index
        hard = np.zeros(n, dtype=bool)
        hard[order[:keep]] = True

    mask = np.zeros(inp.labels.size, dtype=bool)
    mask[valid[hard]] = True
    clamped = np.maximum(p_true[hard], CLAMP_P)
    value = float(-(np.log(clamped)).mean())
    return LossValue(value=value, pixel_mask=mask.reshape(inp.labels.shape))


def consistency_loss(
    aug_active: PixelLossInput,
    aug_unlabeled: PixelLossInput,
    cfg: OhemConfig = OhemConfig(),
) -> LossValue:
    """Hard-example-mined loss on both augmented streams.

    The labeled stream carries manual annotations; the unlabeled stream is
    scored against its own pseudo labels.
    """
    return LossValue(
        value=ohem_cross_entropy(aug_active, cfg).value
        + ohem_cross_entropy(aug_unlabeled, cfg).value
    )


def confidence(
    probabilities: np.ndarray, pseudo_labels: np.ndarray, num_categories: int
) -> np.ndarray:
    """Per-class mean log-probability over the pixels pseudo-labeled as that class.

    Returns a length-C vector; classes with no pseudo-labeled pixel are NaN
    ("absent") and are skipped by donor weighting. Present entries are <= 0.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(pseudo_labels)
    if p.ndim != 3 or p.shape[0] != num_categories:
        raise ShapeMismatch(f"probabilities must be {num_categories} x H x W, got {p.shape}")
    if y.shape != p.shape[1:]:
        raise ShapeMismatch(
            f"pseudo label shape {y.shape} does not match probability spatial dims {p.shape[1:]}"
        )
    flat_p = p.reshape(num_categories, -1)
    flat_y = y.ravel()
    out = np.full(num_categories, np.nan)
    for c in range(num_categories):
        pixels = np.flatnonzero(flat_y == c)
        if pixels.size:
            out[c] = float(np.log(np.maximum(flat_p[c, pixels], CLAMP_P)).mean())
    return out


def soft_alignment_loss(feature, bank: AnchorBank) -> LossValue:
    """Harmonic mean of squared distances from a feature to every anchor.

    Minimizing it pulls the feature toward its closest anchors without
    snapping to a single one. Squared distances are floored at DIST_CLAMP
    before the reciprocals, so the value and gradient stay finite when the
    feature sits on an anchor; floored terms contribute no gradient.
    """
    vec = feature.values if isinstance(feature, ImageVector) else np.asarray(feature, dtype=np.float64)
    if vec.shape != (bank.width,):
        raise ShapeMismatch(f"feature has shape {vec.shape}, bank width is {bank.width}")
    diffs = vec - bank.anchors  # V x D
    raw = (diffs * diffs).sum(axis=1)
    clamped = np.maximum(raw, DIST_CLAMP)
    total_inverse = float((1.0 / clamped).sum())
    v = bank.num_anchors
    value = v / total_inverse

    unclamped = raw >= DIST_CLAMP
    grad = (value * value / v) * (
        2.0 * diffs[unclamped] / (raw[unclamped, None] ** 2)
    ).sum(axis=0)
    return LossValue(value=float(value), gradient=grad)


def total_semi_loss(seg: LossValue, cons: LossValue, dis: LossValue) -> LossValue:
    """Unweighted sum of the supervised, consistency, and alignment terms."""
    return LossValue(value=seg.value + cons.value + dis.value)
