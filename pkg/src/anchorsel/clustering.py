"""K-means clustering of image vectors into domain anchors.

Lloyd iterations start from distance-proportional (k-means++ style)
seeding driven by a counter-based generator keyed by the config seed, so
runs are bit-reproducible. Seeding candidates are walked in a canonical
(lexicographic) order rather than input order, which makes the chosen
initial centers independent of how the input happens to be shuffled.

Empty clusters are repaired by donating the farthest member of the
largest cluster. The clustering objective (sum of squared distances of
samples to their assigned anchors) is recorded after every iteration and
never increases.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .aggregation import ImageVector
from .errors import ShapeMismatch, TooFewSamples
from .rng import derive_seed, rng_for


@dataclass(frozen=True)
class KMeansConfig:
    K: int
    seed: int = 0
    max_iters: int = 100
    tol: float = 1e-6
    normalize: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K is {self.K}, must be >= 1")
        if self.max_iters < 1:
            raise ValueError(f"max_iters is {self.max_iters}, must be >= 1")
        if self.tol < 0:
            raise ValueError(f"tol is {self.tol}, must be >= 0")


@dataclass
class Clustering:
    anchors: np.ndarray  # K x D
    assignment: np.ndarray  # per-sample anchor index
    sse: float
    iterations_run: int
    sse_history: list[float] = field(default_factory=list)
    degenerate: bool = False
    config: KMeansConfig | None = None


def stack_vectors(vectors) -> np.ndarray:
    """Stack ImageVectors (or rows) into an N x D float64 matrix."""
    rows = [v.values if isinstance(v, ImageVector) else np.asarray(v, dtype=np.float64)
            for v in vectors]
    if not rows:
        return np.empty((0, 0), dtype=np.float64)
    width = rows[0].shape[0]
    for i, row in enumerate(rows):
        if row.ndim != 1 or row.shape[0] != width:
            raise ShapeMismatch(f"vector {i} has shape {row.shape}, expected ({width},)")
    return np.stack(rows).astype(np.float64)


def _normalized(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def _pairwise_sq(matrix: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    return ((matrix[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)


def assign(vectors, anchors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-anchor index (ties to the smallest index) and squared distance."""
    matrix = vectors if isinstance(vectors, np.ndarray) else stack_vectors(vectors)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    anchors = np.asarray(anchors, dtype=np.float64)
    if anchors.ndim != 2 or matrix.shape[1] != anchors.shape[1]:
        raise ShapeMismatch(
            f"vectors have width {matrix.shape[1]}, anchors have shape {anchors.shape}"
        )
    sq = _pairwise_sq(matrix, anchors)
    indices = sq.argmin(axis=1)  # argmin takes the first (smallest) index on ties
    return indices, sq[np.arange(len(matrix)), indices]


def kmeans_plus_plus_init(matrix: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Distance-proportional seeding over canonically ordered candidates."""
    n = matrix.shape[0]
    order = np.lexsort(matrix.T[::-1])
    candidates = matrix[order]
    rng = rng_for(seed, "kmeans++")

    centers = np.empty((k, matrix.shape[1]), dtype=np.float64)
    centers[0] = candidates[int(rng.integers(n))]
    d2 = ((candidates - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            # every remaining point coincides with a chosen center
            centers[j] = centers[0]
            continue
        target = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
        idx = min(idx, n - 1)
        centers[j] = candidates[idx]
        d2 = np.minimum(d2, ((candidates - centers[j]) ** 2).sum(axis=1))
    return centers


def _repair_empty(assignment: np.ndarray, matrix: np.ndarray, anchors: np.ndarray, k: int):
    """Donate the farthest member of the largest cluster to each empty one."""
    for empty in range(k):
        if np.any(assignment == empty):
            continue
        sizes = np.bincount(assignment, minlength=k)
        largest = int(sizes.argmax())
        members = np.flatnonzero(assignment == largest)
        dist = ((matrix[members] - anchors[largest]) ** 2).sum(axis=1)
        donor = members[int(dist.argmax())]
        assignment[donor] = empty


def kmeans_fit(vectors, cfg: KMeansConfig) -> Clustering:
    """Lloyd's algorithm from seeded k-means++ initialization."""
    matrix = vectors if isinstance(vectors, np.ndarray) else stack_vectors(vectors)
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if n < cfg.K:
        raise TooFewSamples(f"{n} vectors cannot support K={cfg.K}")
    if cfg.normalize:
        matrix = _normalized(matrix)

    if cfg.K > 1 and bool(np.all(matrix == matrix[0])):
        anchors = np.tile(matrix[0], (cfg.K, 1))
        return Clustering(
            anchors=anchors,
            assignment=np.zeros(n, dtype=np.int64),
            sse=0.0,
            iterations_run=0,
            sse_history=[0.0],
            degenerate=True,
            config=cfg,
        )

    anchors = kmeans_plus_plus_init(matrix, cfg.K, cfg.seed)
    assignment = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1
        assignment, _ = assign(matrix, anchors)
        assignment = assignment.astype(np.int64)
        _repair_empty(assignment, matrix, anchors, cfg.K)

        new_anchors = np.empty_like(anchors)
        for k in range(cfg.K):
            members = matrix[assignment == k]
            new_anchors[k] = members.sum(axis=0) / len(members)

        shift = float(np.sqrt(((new_anchors - anchors) ** 2).sum(axis=1)).max())
        anchors = new_anchors
        diffs = matrix - anchors[assignment]
        history.append(float((diffs * diffs).sum()))
        if shift < cfg.tol:
            break

    return Clustering(
        anchors=anchors,
        assignment=assignment,
        sse=history[-1],
        iterations_run=iterations,
        sse_history=history,
        degenerate=False,
        config=cfg,
    )


def best_of_restarts(vectors, cfg: KMeansConfig, restarts: int) -> Clustering:
    """Lowest-SSE clustering over seeded restarts (restart seeds derived from cfg.seed)."""
    best: Clustering | None = None
    for r in range(restarts):
        trial_cfg = dataclasses.replace(cfg, seed=derive_seed(cfg.seed, f"restart{r}"))
        trial = kmeans_fit(vectors, trial_cfg)
        if best is None or trial.sse < best.sse:
            best = trial
    assert best is not None
    return best


def sweep_anchor_count(vectors, k_list, cfg: KMeansConfig) -> list[tuple[int, float]]:
    """Cluster at each anchor count in turn, reporting (K, sse) per entry."""
    out = []
    for k in k_list:
        result = kmeans_fit(vectors, dataclasses.replace(cfg, K=int(k)))
        out.append((int(k), result.sse))
    return out
