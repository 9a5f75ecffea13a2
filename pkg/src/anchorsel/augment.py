"""Deterministic, auditable plans for region- and pixel-level mixing.

Region mixing ("cutmix") crops a random rectangle from a donor image/label
pair and pastes it over the base pair; pixel mixing ("copy-paste") copies
every donor pixel belonging to configured classes onto the base. Donors
are drawn with probability proportional to how *unconfident* the model is
about them, so low-confidence content is surfaced more often.

Plans are plain data: they serialize to JSON, replay byte-identically, and
each records the seed that produced it. Applying a plan touches image and
label together, so every output pixel is traceable to exactly one of
{base, donor} in both.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyRange,
    InvalidValue,
    NoCandidates,
    NoCopyableClasses,
    RectOutOfBounds,
    ShapeMismatch,
)
from .rng import rng_for
from .tensor_io import IGNORE_LABEL


@dataclass(frozen=True)
class DonorDistribution:
    candidate_ids: tuple[str, ...]
    weights: np.ndarray  # per-candidate, sums to 1
    per_class_softmax: np.ndarray  # C x candidates audit trail


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    width: int
    height: int


@dataclass(frozen=True)
class CutmixPlan:
    base_id: str
    donor_id: str
    rect: Rect
    seed: int


@dataclass(frozen=True)
class CopyPastePlan:
    base_id: str
    donor_id: str
    copied_classes: tuple[int, ...]
    paste_offset: tuple[int, int]  # (dy, dx)
    seed: int


def donor_distribution(confidences: dict[str, np.ndarray]) -> DonorDistribution:
    """Candidate weights from per-class confidence vectors.

    For each class, (1 - confidence) is softmaxed across the candidates in
    which the class is present (NaN marks absence); a candidate's weight is
    its share summed over classes, renormalized. Classes absent everywhere
    contribute a zero row. Falls back to uniform weights when no class is
    present in any candidate.
    """
    if not confidences:
        raise NoCandidates("donor distribution needs at least one candidate")
    ids = tuple(confidences)
    matrix = np.stack([np.asarray(confidences[cid], dtype=np.float64) for cid in ids])
    n, c = matrix.shape

    per_class = np.zeros((c, n), dtype=np.float64)
    for cls in range(c):
        present = ~np.isnan(matrix[:, cls])
        if not present.any():
            continue
        raised = 1.0 - matrix[present, cls]
        raised -= raised.max()  # stable softmax
        exp = np.exp(raised)
        per_class[cls, present] = exp / exp.sum()

    weights = per_class.sum(axis=0)
    total = weights.sum()
    if total <= 0.0:
        weights = np.full(n, 1.0 / n)
    else:
        weights = weights / total
    return DonorDistribution(candidate_ids=ids, weights=weights, per_class_softmax=per_class)


def _draw_candidate(distribution: DonorDistribution, rng) -> str:
    cumulative = np.cumsum(distribution.weights)
    target = rng.random() * cumulative[-1]
    idx = min(int(np.searchsorted(cumulative, target, side="right")), len(cumulative) - 1)
    return distribution.candidate_ids[idx]


def plan_cutmix(
    base_id: str,
    candidates: list[str],
    distribution: DonorDistribution,
    image_shape: tuple[int, int],
    rect_fraction_range: tuple[float, float] = (0.25, 0.5),
    seed: int = 0,
) -> CutmixPlan:
    """Draw a donor and an in-bounds rectangle, both from the seed.

    The rectangle's area fraction is uniform in the given range, its aspect
    ratio uniform in [0.5, 2] (clipped to keep the area when it hits the
    image edge), and its position uniform over valid placements.
    """
    lo, hi = rect_fraction_range
    if not (0.0 < lo <= hi <= 1.0):
        raise EmptyRange(f"rect_fraction_range {rect_fraction_range} must satisfy 0 < lo <= hi <= 1")
    missing = set(candidates) - set(distribution.candidate_ids)
    if missing:
        raise InvalidValue(f"distribution does not cover candidates {sorted(missing)}")

    h, w = int(image_shape[0]), int(image_shape[1])
    rng = rng_for(seed, f"cutmix:{base_id}")
    donor_id = _draw_candidate(distribution, rng)

    fraction = lo + (hi - lo) * rng.random()
    area = fraction * h * w
    aspect = 0.5 + 1.5 * rng.random()  # width / height
    rect_w = math.sqrt(area * aspect)
    rect_h = area / rect_w
    if rect_w > w:
        rect_w, rect_h = float(w), area / w
    if rect_h > h:
        rect_h, rect_w = float(h), area / h
    rect_w = min(w, max(1, round(rect_w)))
    rect_h = min(h, max(1, round(rect_h)))

    x0 = int(rng.integers(w - rect_w + 1))
    y0 = int(rng.integers(h - rect_h + 1))
    return CutmixPlan(
        base_id=base_id,
        donor_id=donor_id,
        rect=Rect(x0=x0, y0=y0, width=rect_w, height=rect_h),
        seed=seed,
    )


def _check_pair(pair) -> tuple[np.ndarray, np.ndarray]:
    image, label = pair
    image = np.asarray(image)
    label = np.asarray(label)
    spatial = image.shape[-2:]
    if label.shape != spatial:
        raise ShapeMismatch(f"label shape {label.shape} does not match image spatial dims {spatial}")
    return image, label


def apply_cutmix(base_pair, donor_pair, plan: CutmixPlan) -> tuple[np.ndarray, np.ndarray]:
    """Paste the plan's donor rectangle over the base image and label."""
    base_img, base_lbl = _check_pair(base_pair)
    donor_img, donor_lbl = _check_pair(donor_pair)
    if base_img.shape != donor_img.shape or base_lbl.shape != donor_lbl.shape:
        raise ShapeMismatch(
            f"base {base_img.shape}/{base_lbl.shape} and donor "
            f"{donor_img.shape}/{donor_lbl.shape} shapes differ"
        )
    h, w = base_lbl.shape
    r = plan.rect
    if r.x0 < 0 or r.y0 < 0 or r.width < 1 or r.height < 1 \
            or r.x0 + r.width > w or r.y0 + r.height > h:
        raise RectOutOfBounds(f"rect {r} does not fit inside {h} x {w}")

    out_img = base_img.copy()
    out_lbl = base_lbl.copy()
    rows = slice(r.y0, r.y0 + r.height)
    cols = slice(r.x0, r.x0 + r.width)
    out_img[..., rows, cols] = donor_img[..., rows, cols]
    out_lbl[rows, cols] = donor_lbl[rows, cols]
    return out_img, out_lbl


def present_classes(label_map: np.ndarray) -> set[int]:
    values = np.unique(np.asarray(label_map))
    return {int(v) for v in values if v != IGNORE_LABEL}


def plan_copy_paste(
    base_pair,
    donor_pair,
    tail_classes: set[int],
    seed: int = 0,
    base_id: str = "",
    donor_id: str = "",
    offset_jitter: int = 0,
) -> CopyPastePlan:
    """Plan to copy every non-tail class present in the donor onto the base.

    The paste offset defaults to (0, 0) (aligned); with ``offset_jitter`` a
    seeded integer offset in [-jitter, jitter]^2 is drawn instead.
    """
    _check_pair(base_pair)
    _, donor_lbl = _check_pair(donor_pair)
    copyable = sorted(present_classes(donor_lbl) - set(tail_classes))
    if not copyable:
        raise NoCopyableClasses(
            f"donor {donor_id!r} has no classes outside the tail set {sorted(tail_classes)}"
        )
    rng = rng_for(seed, f"copy_paste:{base_id}:{donor_id}")
    if offset_jitter > 0:
        dy = int(rng.integers(-offset_jitter, offset_jitter + 1))
        dx = int(rng.integers(-offset_jitter, offset_jitter + 1))
    else:
        dy = dx = 0
    return CopyPastePlan(
        base_id=base_id,
        donor_id=donor_id,
        copied_classes=tuple(copyable),
        paste_offset=(dy, dx),
        seed=seed,
    )


def apply_copy_paste(base_pair, donor_pair, plan: CopyPastePlan) -> tuple[np.ndarray, np.ndarray]:
    """Overwrite base pixels with donor pixels of the copied classes.

    Donor pixel (y, x) lands at (y + dy, x + dx); positions shifted out of
    bounds are dropped. Untouched pixels keep their base values.
    """
    base_img, base_lbl = _check_pair(base_pair)
    donor_img, donor_lbl = _check_pair(donor_pair)
    if base_img.shape != donor_img.shape or base_lbl.shape != donor_lbl.shape:
        raise ShapeMismatch(
            f"base {base_img.shape}/{base_lbl.shape} and donor "
            f"{donor_img.shape}/{donor_lbl.shape} shapes differ"
        )
    h, w = base_lbl.shape
    dy, dx = plan.paste_offset

    source_mask = np.isin(donor_lbl, list(plan.copied_classes))
    ys, xs = np.nonzero(source_mask)
    ty, tx = ys + dy, xs + dx
    inside = (ty >= 0) & (ty < h) & (tx >= 0) & (tx < w)
    ys, xs, ty, tx = ys[inside], xs[inside], ty[inside], tx[inside]

    out_img = base_img.copy()
    out_lbl = base_lbl.copy()
    out_img[..., ty, tx] = donor_img[..., ys, xs]
    out_lbl[ty, tx] = donor_lbl[ys, xs]
    return out_img, out_lbl


def tail_classes_by_frequency(
    label_maps: list[np.ndarray], num_categories: int, quantile: float = 0.3
) -> set[int]:
    """Classes in the bottom ``quantile`` share by labeled-pixel count.

    Returns the floor(quantile * C) classes with the fewest labeled pixels
    (ties broken by class index), the default notion of "long tail".
    """
    if not 0.0 <= quantile <= 1.0:
        raise InvalidValue(f"quantile is {quantile}, must be in [0, 1]")
    counts = np.zeros(num_categories, dtype=np.int64)
    for label_map in label_maps:
        flat = np.asarray(label_map).ravel()
        flat = flat[flat != IGNORE_LABEL]
        counts += np.bincount(flat, minlength=num_categories)[:num_categories]
    take = math.floor(quantile * num_categories)
    order = np.lexsort((np.arange(num_categories), counts))
    return {int(c) for c in order[:take]}


def plan_to_dict(plan) -> dict:
    if isinstance(plan, CutmixPlan):
        return {
            "kind": "cutmix",
            "base_id": plan.base_id,
            "donor_id": plan.donor_id,
            "rect": {"x0": plan.rect.x0, "y0": plan.rect.y0,
                     "width": plan.rect.width, "height": plan.rect.height},
            "seed": plan.seed,
        }
    if isinstance(plan, CopyPastePlan):
        return {
            "kind": "copy_paste",
            "base_id": plan.base_id,
            "donor_id": plan.donor_id,
            "copied_classes": list(plan.copied_classes),
            "paste_offset": {"dy": plan.paste_offset[0], "dx": plan.paste_offset[1]},
            "seed": plan.seed,
        }
    raise InvalidValue(f"not a plan: {plan!r}")


def plan_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "cutmix":
        r = data["rect"]
        return CutmixPlan(
            base_id=data["base_id"],
            donor_id=data["donor_id"],
            rect=Rect(x0=int(r["x0"]), y0=int(r["y0"]),
                      width=int(r["width"]), height=int(r["height"])),
            seed=int(data["seed"]),
        )
    if kind == "copy_paste":
        off = data["paste_offset"]
        return CopyPastePlan(
            base_id=data["base_id"],
            donor_id=data["donor_id"],
            copied_classes=tuple(int(c) for c in data["copied_classes"]),
            paste_offset=(int(off["dy"]), int(off["dx"])),
            seed=int(data["seed"]),
        )
    raise InvalidValue(f"unknown plan kind {kind!r}")


def save_plans(plans: list, path) -> None:
    Path(path).write_text(
        json.dumps([plan_to_dict(p) for p in plans], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_plans(path) -> list:
    return [plan_from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]
