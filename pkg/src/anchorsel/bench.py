"""Synthetic-domain benchmarks for the selection machinery.

Real segmentation quality needs a trained network, so the harness swaps
it for a setting where the right answer is known by construction: both
domains are isotropic Gaussian mixtures, some modes are shared, and some
exist only in the target domain. A good selector should spend its budget
on samples from those target-exclusive modes. Reports therefore use
exclusive-mode recall (share of selected samples from exclusive modes),
exclusive-mode coverage (share of exclusive samples that got selected),
and mean nearest-anchor distance as stand-ins for segmentation accuracy;
every report says so in its ``note`` field.

Per-strategy wall times are collected but live outside the deterministic
payload: identical specs yield byte-identical report JSON.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .aggregation import ImageVector
from .bank import init_from_clustering
from .clustering import KMeansConfig, best_of_restarts, kmeans_fit
from .errors import InvalidValue
from .rng import box_muller, derive_seed, rng_for
from .selection import SampleRecord, SelectionConfig, budget_sweep, select

PROXY_NOTE = (
    "Synthetic-domain proxy metrics: exclusive-mode recall/coverage and anchor "
    "distances stand in for segmentation accuracy; no model is trained here."
)

DEFAULT_ALPHA = 0.999
DEFAULT_ANCHORS = 10


@dataclass(frozen=True)
class ModeSpec:
    mean: tuple[float, ...]
    covariance_scale: float
    weight: float
    exclusive: bool = False


@dataclass(frozen=True)
class SyntheticDomainSpec:
    modes: tuple[ModeSpec, ...]
    samples_per_domain: int
    seed: int

    def __post_init__(self):
        if not self.modes:
            raise InvalidValue("spec needs at least one mode")
        dim = len(self.modes[0].mean)
        if dim < 2:
            raise InvalidValue(f"mode dimension is {dim}, must be >= 2")
        for i, mode in enumerate(self.modes):
            if len(mode.mean) != dim:
                raise InvalidValue(f"mode {i} has dimension {len(mode.mean)}, expected {dim}")
            if mode.covariance_scale <= 0:
                raise InvalidValue(f"mode {i} covariance_scale must be positive")
            if mode.weight < 0:
                raise InvalidValue(f"mode {i} weight must be non-negative")
        total = sum(m.weight for m in self.modes)
        if abs(total - 1.0) > 1e-9:
            raise InvalidValue(f"mode weights sum to {total}, must sum to 1")
        if all(m.exclusive for m in self.modes):
            raise InvalidValue("at least one mode must be shared (non-exclusive)")
        if self.samples_per_domain < 1:
            raise InvalidValue("samples_per_domain must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.modes[0].mean)

    def to_dict(self) -> dict:
        return {
            "modes": [
                {
                    "mean": list(m.mean),
                    "covariance_scale": m.covariance_scale,
                    "weight": m.weight,
                    "exclusive": m.exclusive,
                }
                for m in self.modes
            ],
            "samples_per_domain": self.samples_per_domain,
            "seed": self.seed,
        }

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def spec_from_dict(data: dict) -> SyntheticDomainSpec:
    modes = tuple(
        ModeSpec(
            mean=tuple(float(x) for x in m["mean"]),
            covariance_scale=float(m["covariance_scale"]),
            weight=float(m["weight"]),
            exclusive=bool(m.get("exclusive", False)),
        )
        for m in data["modes"]
    )
    return SyntheticDomainSpec(
        modes=modes,
        samples_per_domain=int(data["samples_per_domain"]),
        seed=int(data["seed"]),
    )


def canonical_domain_spec(seed: int = 20260808) -> SyntheticDomainSpec:
    """The frozen 4-mode benchmark geometry: 2 shared + 2 target-exclusive.

    Modes sit at lattice corners separated by 8 units in a 64-dimensional
    space with per-axis variance 0.5, so mode membership is unambiguous
    while within-mode spread still dominates anchor-count effects.
    """
    dim = 64
    corners = [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0), (8.0, 8.0)]
    modes = []
    for i, (a, b) in enumerate(corners):
        mean = [0.0] * dim
        mean[0], mean[1] = a, b
        modes.append(
            ModeSpec(mean=tuple(mean), covariance_scale=0.5, weight=0.25, exclusive=i >= 2)
        )
    return SyntheticDomainSpec(modes=tuple(modes), samples_per_domain=500, seed=seed)


@dataclass
class DomainSamples:
    ids: list[str]
    vectors: np.ndarray  # N x D
    mode_labels: np.ndarray  # N, index into spec.modes
    exclusive: np.ndarray  # N bool


@dataclass
class SyntheticDomains:
    spec: SyntheticDomainSpec
    source: DomainSamples
    target: DomainSamples


def _draw_domain(spec, prefix, mode_indices, weights, rng) -> DomainSamples:
    n = spec.samples_per_domain
    cumulative = np.cumsum(weights)
    picks = np.searchsorted(cumulative, rng.random(n) * cumulative[-1], side="right")
    picks = np.minimum(picks, len(mode_indices) - 1)
    vectors = np.empty((n, spec.dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    exclusive = np.empty(n, dtype=bool)
    for i in range(n):
        mode = spec.modes[mode_indices[picks[i]]]
        noise = box_muller(rng, (spec.dim,)) * np.sqrt(mode.covariance_scale)
        vectors[i] = np.asarray(mode.mean) + noise
        labels[i] = mode_indices[picks[i]]
        exclusive[i] = mode.exclusive
    ids = [f"{prefix}{i:04d}" for i in range(n)]
    return DomainSamples(ids=ids, vectors=vectors, mode_labels=labels, exclusive=exclusive)


def generate_domains(spec: SyntheticDomainSpec) -> SyntheticDomains:
    """Seeded mixture draws; the source sees only the shared modes."""
    shared = [i for i, m in enumerate(spec.modes) if not m.exclusive]
    shared_weights = np.asarray([spec.modes[i].weight for i in shared])
    shared_weights = shared_weights / shared_weights.sum()
    all_weights = np.asarray([m.weight for m in spec.modes])

    source = _draw_domain(spec, "s", shared, shared_weights, rng_for(spec.seed, "domains.source"))
    target = _draw_domain(
        spec, "t", list(range(len(spec.modes))), all_weights, rng_for(spec.seed, "domains.target")
    )
    return SyntheticDomains(spec=spec, source=source, target=target)


@dataclass
class BenchmarkReport:
    kind: str
    note: str
    config_fingerprint: str
    rows: list[dict] = field(default_factory=list)
    runtimes: dict[str, float] = field(default_factory=dict)  # informational only

    def deterministic_payload(self) -> dict:
        return {
            "kind": self.kind,
            "note": self.note,
            "config_fingerprint": self.config_fingerprint,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.deterministic_payload(), indent=2, sort_keys=True) + "\n"


def _bench_records(domain: DomainSamples, spec: SyntheticDomainSpec) -> list[SampleRecord]:
    """Wrap raw vectors as sample records, synthesizing the baseline inputs.

    Entropy and discriminator baselines need probability maps and
    discriminator scores that no synthetic domain has, so stand-ins are
    derived from each sample's distance to the nearest shared-mode mean:
    far samples look target-like (low discriminator probability) and
    uncertain (probability mass moves toward 0.5).
    """
    shared_means = np.asarray(
        [m.mean for m in spec.modes if not m.exclusive], dtype=np.float64
    )
    records = []
    for i, sample_id in enumerate(domain.ids):
        vec = domain.vectors[i]
        d2 = float(((shared_means - vec) ** 2).sum(axis=1).min()) / spec.dim
        source_likeness = 1.0 / (1.0 + d2)
        q = min(max(source_likeness, 1e-6), 1.0 - 1e-6)
        prob = np.array([[[q]], [[1.0 - q]]], dtype=np.float64)
        records.append(
            SampleRecord(
                id=sample_id,
                vector=ImageVector(
                    values=vec, presence=np.ones(1, dtype=bool), source_id=sample_id
                ),
                probability=prob,
                discriminator_score=source_likeness,
            )
        )
    return records


def _build_banks(domains: SyntheticDomains, anchors_k: int):
    spec = domains.spec
    k_source = min(anchors_k, len(domains.source.ids))
    k_target = min(anchors_k, len(domains.target.ids))
    source_clustering = kmeans_fit(
        domains.source.vectors,
        KMeansConfig(K=k_source, seed=derive_seed(spec.seed, "bench.cluster.source")),
    )
    target_clustering = kmeans_fit(
        domains.target.vectors,
        KMeansConfig(K=k_target, seed=derive_seed(spec.seed, "bench.cluster.target")),
    )
    source_bank = init_from_clustering(source_clustering, "source", DEFAULT_ALPHA)
    target_bank = init_from_clustering(target_clustering, "target_warmup", DEFAULT_ALPHA)
    return source_bank, target_bank


def _recall(selected_ids, domain: DomainSamples) -> float:
    exclusive_ids = {sid for sid, flag in zip(domain.ids, domain.exclusive) if flag}
    hits = sum(1 for sid in selected_ids if sid in exclusive_ids)
    return hits / len(selected_ids)


def _coverage(selected_ids, domain: DomainSamples) -> float:
    exclusive_ids = {sid for sid, flag in zip(domain.ids, domain.exclusive) if flag}
    if not exclusive_ids:
        return 1.0
    hits = sum(1 for sid in selected_ids if sid in exclusive_ids)
    return hits / len(exclusive_ids)


def _mean_min_anchor_distance(selected_ids, domain: DomainSamples, bank) -> float:
    index = {sid: i for i, sid in enumerate(domain.ids)}
    rows = domain.vectors[[index[sid] for sid in selected_ids]]
    sq = ((rows[:, None, :] - bank.anchors[None, :, :]) ** 2).sum(axis=2)
    return float(sq.min(axis=1).mean())


def run_strategy_comparison(
    domains: SyntheticDomains,
    strategies: list[str],
    budget_fraction: float = 0.05,
    anchors_k: int = DEFAULT_ANCHORS,
) -> BenchmarkReport:
    """Score every strategy on the same domains and banks."""
    spec = domains.spec
    report = BenchmarkReport(
        kind="compare", note=PROXY_NOTE, config_fingerprint=spec.fingerprint()
    )
    if not strategies:
        return report

    source_bank, target_bank = _build_banks(domains, anchors_k)
    records = _bench_records(domains.target, spec)
    centroid = domains.target.vectors.mean(axis=0)

    for strategy in strategies:
        cfg = SelectionConfig(
            budget_fraction=budget_fraction,
            metric=strategy,
            seed=derive_seed(spec.seed, f"bench.select.{strategy}"),
        )
        start = time.perf_counter()
        selection = select(records, cfg, source_bank, target_bank, centroid)
        elapsed = time.perf_counter() - start

        recall = _recall(selection.selected_ids, domains.target)
        assert 0.0 <= recall <= 1.0
        report.rows.append(
            {
                "strategy": strategy,
                "budget_count": selection.budget_count,
                "exclusive_mode_recall": recall,
                "mean_min_anchor_distance": _mean_min_anchor_distance(
                    selection.selected_ids, domains.target, target_bank
                ),
            }
        )
        report.runtimes[strategy] = elapsed
    assert [row["strategy"] for row in report.rows] == list(strategies)
    return report


def run_budget_sweep(
    domains: SyntheticDomains,
    fractions: list[float] | None = None,
    metric: str = "dual_domain",
    anchors_k: int = DEFAULT_ANCHORS,
) -> BenchmarkReport:
    """Selections at growing budgets must nest and coverage must not drop."""
    fractions = list(fractions) if fractions is not None else [0.01, 0.02, 0.05, 0.10, 0.20]
    spec = domains.spec
    source_bank, target_bank = _build_banks(domains, anchors_k)
    records = _bench_records(domains.target, spec)
    centroid = domains.target.vectors.mean(axis=0)

    cfg = SelectionConfig(
        budget_fraction=fractions[0],
        metric=metric,
        seed=derive_seed(spec.seed, f"bench.select.{metric}"),
    )
    start = time.perf_counter()
    reports = budget_sweep(records, fractions, cfg, source_bank, target_bank, centroid)
    elapsed = time.perf_counter() - start

    out = BenchmarkReport(
        kind="budget_sweep", note=PROXY_NOTE, config_fingerprint=spec.fingerprint()
    )
    previous: set[str] = set()
    last_coverage = 0.0
    ordered = sorted(zip(fractions, reports), key=lambda pair: pair[0])
    for fraction, selection in ordered:
        chosen = set(selection.selected_ids)
        if not previous <= chosen:
            raise RuntimeError(f"selection at fraction {fraction} does not nest")
        coverage = _coverage(selection.selected_ids, domains.target)
        if coverage < last_coverage - 1e-12:
            raise RuntimeError(f"coverage dropped at fraction {fraction}")
        previous, last_coverage = chosen, coverage
    for fraction, selection in zip(fractions, reports):
        out.rows.append(
            {
                "fraction": fraction,
                "budget_count": selection.budget_count,
                "exclusive_coverage": _coverage(selection.selected_ids, domains.target),
                "exclusive_mode_recall": _recall(selection.selected_ids, domains.target),
            }
        )
    out.runtimes["sweep"] = elapsed
    assert [row["fraction"] for row in out.rows] == fractions
    return out


def run_anchor_sweep(
    domains: SyntheticDomains,
    k_list: list[int] | None = None,
    restarts: int = 5,
    source_k: int = DEFAULT_ANCHORS,
    budget_fraction: float = 0.05,
) -> BenchmarkReport:
    """Vary the target anchor count; source anchors stay fixed.

    For each K the target clustering takes the best of ``restarts`` seeded
    runs; the row records that SSE plus the selection recall it induces.
    """
    k_list = list(k_list) if k_list is not None else [1, 2, 5, 10, 20, 50, 100]
    spec = domains.spec
    source_clustering = kmeans_fit(
        domains.source.vectors,
        KMeansConfig(
            K=min(source_k, len(domains.source.ids)),
            seed=derive_seed(spec.seed, "bench.cluster.source"),
        ),
    )
    source_bank = init_from_clustering(source_clustering, "source", DEFAULT_ALPHA)
    records = _bench_records(domains.target, spec)
    centroid = domains.target.vectors.mean(axis=0)

    out = BenchmarkReport(
        kind="anchor_sweep", note=PROXY_NOTE, config_fingerprint=spec.fingerprint()
    )
    for k in k_list:
        start = time.perf_counter()
        clustering = best_of_restarts(
            domains.target.vectors,
            KMeansConfig(K=int(k), seed=derive_seed(spec.seed, f"bench.anchor_sweep.k{k}")),
            restarts=restarts,
        )
        target_bank = init_from_clustering(clustering, "target_warmup", DEFAULT_ALPHA)
        cfg = SelectionConfig(
            budget_fraction=budget_fraction,
            metric="dual_domain",
            seed=derive_seed(spec.seed, "bench.select.dual_domain"),
        )
        selection = select(records, cfg, source_bank, target_bank, centroid)
        elapsed = time.perf_counter() - start
        out.rows.append(
            {
                "K": int(k),
                "sse": clustering.sse,
                "exclusive_mode_recall": _recall(selection.selected_ids, domains.target),
            }
        )
        out.runtimes[f"K={k}"] = elapsed
    assert [row["K"] for row in out.rows] == [int(k) for k in k_list]
    return out
