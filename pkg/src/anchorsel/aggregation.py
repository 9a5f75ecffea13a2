"""Collapse dense feature maps into per-category and image-level vectors.

Each category's feature is the mean of the feature map over the pixels
that carry that category; concatenating the per-category means in
ascending category order yields the image-level vector used everywhere
downstream (clustering, distances, bank updates). Categories absent from
an image contribute an all-zero block so every vector lives in the same
C * C_feat space; ignore-labeled pixels (65535) contribute to no category.
Sums run in row-major pixel order, so results are bit-deterministic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CategoryOutOfRange, MissingMap, ShapeMismatch
from .tensor_io import IGNORE_LABEL, Manifest, read_tensor


@dataclass(frozen=True)
class CategoryMask:
    """Boolean pixel mask for one category of one image."""

    category: int
    pixels: np.ndarray  # H x W bool
    pixel_count: int

    @classmethod
    def from_map(cls, category_map: np.ndarray, category: int) -> "CategoryMask":
        pixels = np.asarray(category_map) == category
        return cls(category=category, pixels=pixels, pixel_count=int(pixels.sum()))


@dataclass(frozen=True)
class ImageVector:
    """Concatenated per-category mean features of one image."""

    values: np.ndarray  # length C * C_feat, float64
    presence: np.ndarray  # length C bool
    source_id: str = ""


def aggregate_category(feature_map: np.ndarray, mask: CategoryMask) -> np.ndarray:
    """Masked per-channel mean; all zeros when the mask is empty."""
    feature_map = np.asarray(feature_map, dtype=np.float64)
    if feature_map.ndim != 3:
        raise ShapeMismatch(f"feature map must be C_feat x H x W, got shape {feature_map.shape}")
    if mask.pixels.shape != feature_map.shape[1:]:
        raise ShapeMismatch(
            f"mask shape {mask.pixels.shape} does not match feature spatial dims "
            f"{feature_map.shape[1:]}"
        )
    if mask.pixel_count == 0:
        return np.zeros(feature_map.shape[0], dtype=np.float64)
    # boolean indexing walks pixels in row-major order
    return feature_map[:, mask.pixels].sum(axis=1) / mask.pixel_count


def build_image_vector(
    feature_map: np.ndarray,
    category_map: np.ndarray,
    num_categories: int,
    source_id: str = "",
) -> ImageVector:
    """Concatenate per-category means into one image-level vector."""
    feature_map = np.asarray(feature_map, dtype=np.float64)
    category_map = np.asarray(category_map)
    if feature_map.ndim != 3:
        raise ShapeMismatch(f"feature map must be C_feat x H x W, got shape {feature_map.shape}")
    if category_map.shape != feature_map.shape[1:]:
        raise ShapeMismatch(
            f"category map shape {category_map.shape} does not match feature spatial dims "
            f"{feature_map.shape[1:]}"
        )

    values = category_map[category_map != IGNORE_LABEL]
    if values.size and (values.min() < 0 or values.max() >= num_categories):
        bad = int(values.min()) if values.min() < 0 else int(values.max())
        raise CategoryOutOfRange(
            f"category value {bad} outside [0, {num_categories}) for sample {source_id!r}"
        )

    channels = feature_map.shape[0]
    out = np.zeros(num_categories * channels, dtype=np.float64)
    presence = np.zeros(num_categories, dtype=bool)
    for c in range(num_categories):
        mask = CategoryMask.from_map(category_map, c)
        if mask.pixel_count:
            out[c * channels:(c + 1) * channels] = aggregate_category(feature_map, mask)
            presence[c] = True
    return ImageVector(values=out, presence=presence, source_id=source_id)


def _vector_for_sample(sample, which_map: str, num_categories: int) -> ImageVector:
    if which_map == "ground_truth":
        map_path = sample.label_path
    elif which_map == "prediction":
        map_path = sample.prediction_path
    else:
        raise ValueError(f"which_map must be 'ground_truth' or 'prediction', got {which_map!r}")
    if map_path is None:
        raise MissingMap(sample.id, which_map)
    feature_map = read_tensor(sample.feature_path)
    category_map = read_tensor(map_path)
    return build_image_vector(feature_map, category_map, num_categories, source_id=sample.id)


def batch_vectors(manifest: Manifest, which_map: str, threads: int = 1) -> list[ImageVector]:
    """One ImageVector per manifest sample, in manifest order.

    Per-sample work may fan out over ``threads`` workers; results are
    returned in manifest order either way, so output does not depend on
    the thread count.
    """
    if threads <= 1 or len(manifest.samples) <= 1:
        return [
            _vector_for_sample(s, which_map, manifest.num_categories) for s in manifest.samples
        ]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(
            pool.map(
                lambda s: _vector_for_sample(s, which_map, manifest.num_categories),
                manifest.samples,
            )
        )
