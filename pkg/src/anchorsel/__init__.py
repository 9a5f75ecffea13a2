"""Multi-anchor active sample selection and semi-supervised loss tooling.

The package operates on precomputed tensors (features, labels,
predictions, probabilities): it aggregates per-image feature vectors,
clusters them into domain anchors, scores and selects target samples for
annotation, evaluates the semi-supervised loss kernels, plans mixing
augmentations, and benchmarks the selection strategies on synthetic
domains with known structure.
"""

from .aggregation import CategoryMask, ImageVector, aggregate_category, batch_vectors, build_image_vector
from .bank import AnchorBank, bank_fingerprint, ema_update, init_from_clustering, load_bank, nearest, save_bank
from .clustering import Clustering, KMeansConfig, assign, best_of_restarts, kmeans_fit, stack_vectors, sweep_anchor_count
from .selection import (
    METRICS,
    SampleRecord,
    SelectionConfig,
    SelectionReport,
    budget_sweep,
    dual_domain_distance,
    score_adversarial,
    score_entropy,
    score_entropy_adversarial,
    score_prototype,
    select,
)
from .losses import (
    LossValue,
    OhemConfig,
    PixelLossInput,
    confidence,
    consistency_loss,
    cross_entropy,
    ohem_cross_entropy,
    seg_loss,
    soft_alignment_loss,
    total_semi_loss,
)
from .augment import (
    CopyPastePlan,
    CutmixPlan,
    DonorDistribution,
    apply_copy_paste,
    apply_cutmix,
    donor_distribution,
    plan_copy_paste,
    plan_cutmix,
    tail_classes_by_frequency,
)
from .bench import (
    BenchmarkReport,
    SyntheticDomainSpec,
    canonical_domain_spec,
    generate_domains,
    run_anchor_sweep,
    run_budget_sweep,
    run_strategy_comparison,
)
from .tensor_io import IGNORE_LABEL, Manifest, ManifestSample, load_manifest, read_tensor, write_tensor

__version__ = "0.1.0"
