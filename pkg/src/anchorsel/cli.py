"""Command-line pipelines over the library.

One-shot batch subcommands, each a pure function of its inputs, flags,
and seed: rerunning a command reproduces its output files byte for byte,
and ``--threads`` only changes how fast the answer arrives. All outputs
land under ``--out`` with fixed names (see the README).

Exit codes: 0 success, 2 usage or validation problem, 3 missing input,
4 computation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import aggregation, augment, bench, losses, report, selection, tensor_io
from .bank import init_from_clustering, load_bank, save_bank
from .clustering import KMeansConfig, kmeans_fit
from .errors import (
    AnchorselError,
    InvalidValue,
    IoFailure,
    MissingField,
    DuplicateId,
    MissingInput,
    MissingMap,
    UnresolvablePath,
)
from .rng import derive_seed, rng_for

log = logging.getLogger("anchorsel")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_COMPUTE = 4

_MISSING_ERRORS = (UnresolvablePath, MissingMap, MissingInput, IoFailure, FileNotFoundError)
_USAGE_ERRORS = (InvalidValue, MissingField, DuplicateId, ValueError)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_vectors(vectors_path: Path) -> tuple[np.ndarray, list[str]]:
    matrix = tensor_io.read_tensor(vectors_path).astype(np.float64)
    ids_path = vectors_path.parent / "vector_ids.json"
    if not ids_path.is_file():
        raise UnresolvablePath(f"expected id sidecar at {ids_path}")
    ids = json.loads(ids_path.read_text(encoding="utf-8"))
    if len(ids) != matrix.shape[0]:
        raise InvalidValue(
            f"{ids_path} lists {len(ids)} ids but {vectors_path} holds {matrix.shape[0]} rows"
        )
    return matrix, [str(s) for s in ids]


def cmd_aggregate(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    vectors = aggregation.batch_vectors(manifest, args.map, threads=args.threads)
    out = _out_dir(args)
    matrix = np.stack([v.values for v in vectors]).astype(np.float32)
    presence = np.stack([v.presence for v in vectors]).astype(np.uint16)
    tensor_io.write_tensor(out / "vectors.tnsr", matrix)
    tensor_io.write_tensor(out / "presence.tnsr", presence)
    _write_json(out / "vector_ids.json", [v.source_id for v in vectors])
    log.info("aggregated %d samples into %s", len(vectors), out / "vectors.tnsr")
    return EXIT_OK


def cmd_cluster(args) -> int:
    matrix, _ = _load_vectors(Path(args.vectors))
    cfg = KMeansConfig(
        K=args.k,
        seed=derive_seed(args.seed, "cluster"),
        normalize=args.normalize,
    )
    clustering = kmeans_fit(matrix, cfg)
    bank = init_from_clustering(clustering, args.domain_tag, args.alpha)
    out = _out_dir(args)
    save_bank(bank, out / f"bank_{args.domain_tag}.bank")
    _write_json(
        out / "clustering.json",
        {
            "K": cfg.K,
            "seed": cfg.seed,
            "sse": clustering.sse,
            "iterations_run": clustering.iterations_run,
            "degenerate": clustering.degenerate,
            "normalize": cfg.normalize,
        },
    )
    if clustering.degenerate:
        log.warning("all vectors identical: bank holds duplicated anchors")
    return EXIT_OK


def _sample_records(matrix, ids, manifest) -> list[selection.SampleRecord]:
    by_id = {}
    if manifest is not None:
        by_id = {s.id: s for s in manifest.samples}
    records = []
    for row, sample_id in zip(matrix, ids):
        probability = None
        discriminator = None
        entry = by_id.get(sample_id)
        if entry is not None:
            if entry.probability_path is not None:
                probability = tensor_io.read_tensor(entry.probability_path).astype(np.float64)
            discriminator = entry.discriminator_score
        records.append(
            selection.SampleRecord(
                id=sample_id,
                vector=aggregation.ImageVector(
                    values=row, presence=np.ones(1, dtype=bool), source_id=sample_id
                ),
                probability=probability,
                discriminator_score=discriminator,
            )
        )
    return records


def cmd_select(args) -> int:
    matrix, ids = _load_vectors(Path(args.vectors))
    manifest = tensor_io.load_manifest(args.manifest) if args.manifest else None
    records = _sample_records(matrix, ids, manifest)

    source_bank = load_bank(args.source_bank) if args.source_bank else None
    target_bank = load_bank(args.target_bank) if args.target_bank else None
    centroid = matrix.mean(axis=0) if args.metric == "prototype" else None

    cfg = selection.SelectionConfig(
        budget_fraction=args.budget,
        metric=args.metric,
        seed=derive_seed(args.seed, "select"),
        direction=args.direction,
    )
    result = selection.select(records, cfg, source_bank, target_bank, centroid)
    out = _out_dir(args)
    result.save(out / "selection.json")
    log.info("selected %d of %d samples by %s", result.budget_count, len(records), args.metric)
    return EXIT_OK


def cmd_update_bank(args) -> int:
    bank = load_bank(args.bank)
    out = _out_dir(args)
    if args.vectors is None:
        log.warning("no vectors supplied: bank written unchanged")
        save_bank(bank, out / "updated_bank.bank")
        return EXIT_OK
    matrix, _ = _load_vectors(Path(args.vectors))
    if matrix.shape[1] != bank.width:
        raise InvalidValue(
            f"vectors are {matrix.shape[1]}-wide but the bank is {bank.width}-wide"
        )
    from .bank import ema_update

    if bank.alpha == 1.0:
        log.warning("alpha is 1: updates are the identity, bank written unchanged")
    else:
        for row in matrix:
            ema_update(bank, row)
    save_bank(bank, out / "updated_bank.bank")
    log.info("applied %d updates", matrix.shape[0])
    return EXIT_OK


def cmd_loss_eval(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    target_bank = load_bank(args.target_bank) if args.target_bank else None
    ohem_cfg = losses.OhemConfig(
        prob_threshold=args.ohem_threshold, min_kept_fraction=args.ohem_min_kept
    )

    per_sample = {}
    for sample in manifest.samples:
        probability = None
        if sample.probability_path is not None:
            probability = tensor_io.read_tensor(sample.probability_path).astype(np.float64)
        label = (
            tensor_io.read_tensor(sample.label_path) if sample.label_path is not None else None
        )
        prediction = (
            tensor_io.read_tensor(sample.prediction_path)
            if sample.prediction_path is not None
            else None
        )

        seg = cons = dis = None
        if probability is not None and label is not None:
            seg = losses.cross_entropy(losses.PixelLossInput(probability, label)).value
        if probability is not None and prediction is not None:
            cons = losses.ohem_cross_entropy(
                losses.PixelLossInput(probability, prediction), ohem_cfg
            ).value
        category_map = prediction if prediction is not None else label
        in_scope = (
            args.dis_scope == "all"
            or (args.dis_scope == "labeled") == (sample.label_path is not None)
        )
        if target_bank is not None and category_map is not None and in_scope:
            feature_map = tensor_io.read_tensor(sample.feature_path)
            vector = aggregation.build_image_vector(
                feature_map, category_map, manifest.num_categories, source_id=sample.id
            )
            dis = losses.soft_alignment_loss(vector, target_bank).value
        total = sum(term for term in (seg, cons, dis) if term is not None)
        per_sample[sample.id] = {"seg": seg, "cons": cons, "dis": dis, "total": total}

    out = _out_dir(args)
    _write_json(
        out / "losses.json",
        {
            "ohem": {
                "prob_threshold": ohem_cfg.prob_threshold,
                "min_kept_fraction": ohem_cfg.min_kept_fraction,
            },
            "samples": per_sample,
        },
    )
    return EXIT_OK


def _augment_pairs(manifest, sample, kind):
    feature = tensor_io.read_tensor(sample.feature_path)
    if kind == "cutmix":
        if sample.prediction_path is None:
            raise MissingMap(sample.id, "prediction")
        label = tensor_io.read_tensor(sample.prediction_path)
    else:
        if sample.label_path is None:
            raise MissingMap(sample.id, "ground_truth")
        label = tensor_io.read_tensor(sample.label_path)
    return feature, label


def _plan_all_cutmix(manifest, seed, rect_range):
    eligible = [
        s
        for s in manifest.samples
        if s.probability_path is not None and s.prediction_path is not None
    ]
    if len(eligible) < 2:
        raise InvalidValue("cutmix planning needs at least two samples with probability and prediction maps")
    conf = {}
    for s in eligible:
        probability = tensor_io.read_tensor(s.probability_path).astype(np.float64)
        prediction = tensor_io.read_tensor(s.prediction_path)
        conf[s.id] = losses.confidence(probability, prediction, manifest.num_categories)

    plans = []
    for s in eligible:
        others = {cid: c for cid, c in conf.items() if cid != s.id}
        dist = augment.donor_distribution(others)
        label = tensor_io.read_tensor(s.prediction_path)
        plans.append(
            augment.plan_cutmix(
                s.id,
                list(others),
                dist,
                image_shape=label.shape,
                rect_fraction_range=rect_range,
                seed=derive_seed(seed, f"augment:{s.id}"),
            )
        )
    return plans


def _plan_all_copy_paste(manifest, seed, tail_quantile):
    eligible = [s for s in manifest.samples if s.label_path is not None]
    if len(eligible) < 2:
        raise InvalidValue("copy-paste planning needs at least two samples with label maps")
    label_maps = {s.id: tensor_io.read_tensor(s.label_path) for s in eligible}
    tail = augment.tail_classes_by_frequency(
        list(label_maps.values()), manifest.num_categories, quantile=tail_quantile
    )
    plans = []
    for s in eligible:
        others = [o for o in eligible if o.id != s.id]
        rng = rng_for(derive_seed(seed, f"augment:{s.id}"), "acp-donor")
        donor = others[int(rng.integers(len(others)))]
        try:
            plans.append(
                augment.plan_copy_paste(
                    (tensor_io.read_tensor(s.feature_path), label_maps[s.id]),
                    (tensor_io.read_tensor(donor.feature_path), label_maps[donor.id]),
                    tail_classes=tail,
                    seed=derive_seed(seed, f"augment:{s.id}"),
                    base_id=s.id,
                    donor_id=donor.id,
                )
            )
        except augment.NoCopyableClasses:
            log.warning("skipping %s: donor %s has only tail classes", s.id, donor.id)
    return plans


def cmd_augment(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    out = _out_dir(args)

    if args.plans:
        plans = augment.load_plans(args.plans)
    elif args.kind == "cutmix":
        plans = _plan_all_cutmix(manifest, args.seed, (args.rect_lo, args.rect_hi))
    else:
        plans = _plan_all_copy_paste(manifest, args.seed, args.tail_quantile)

    for plan in plans:
        kind = "cutmix" if isinstance(plan, augment.CutmixPlan) else "copy_paste"
        base = manifest.sample_by_id(plan.base_id)
        donor = manifest.sample_by_id(plan.donor_id)
        base_pair = _augment_pairs(manifest, base, kind)
        donor_pair = _augment_pairs(manifest, donor, kind)
        if kind == "cutmix":
            image, label = augment.apply_cutmix(base_pair, donor_pair, plan)
        else:
            image, label = augment.apply_copy_paste(base_pair, donor_pair, plan)
        tensor_io.write_tensor(out / f"{plan.base_id}_image.tnsr", image)
        tensor_io.write_tensor(out / f"{plan.base_id}_label.tnsr", label)
    augment.save_plans(plans, out / "plans.json")
    log.info("applied %d plans", len(plans))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.spec:
        spec = bench.spec_from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
    else:
        spec = bench.canonical_domain_spec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)

    domains = bench.generate_domains(spec)
    if args.protocol == "compare":
        result = bench.run_strategy_comparison(
            domains, list(selection.METRICS), budget_fraction=args.budget
        )
    elif args.protocol == "budget_sweep":
        result = bench.run_budget_sweep(domains)
    else:
        result = bench.run_anchor_sweep(domains)

    written = report.emit_report(result, args.out, args.protocol)
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anchorsel",
        description="Multi-anchor active sample selection and semi-supervised loss tooling.",
    )
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="collapse feature maps into per-sample vectors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--map", default="ground_truth", choices=["ground_truth", "prediction"])
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("cluster", help="group vectors into anchors")
    p.add_argument("--vectors", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.999)
    p.add_argument("--domain-tag", default="source",
                   choices=["source", "target_warmup", "target"])
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("select", help="rank samples and keep the annotation budget")
    p.add_argument("--vectors", required=True)
    p.add_argument("--source-bank")
    p.add_argument("--target-bank")
    p.add_argument("--manifest")
    p.add_argument("--metric", default="dual_domain", choices=list(selection.METRICS))
    p.add_argument("--budget", type=float, default=0.05)
    p.add_argument("--direction", default="largest", choices=["largest", "smallest"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("update-bank", help="EMA-update a bank with vectors, in order")
    p.add_argument("--bank", required=True)
    p.add_argument("--vectors")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_update_bank)

    p = sub.add_parser("loss-eval", help="per-sample loss terms as JSON")
    p.add_argument("--manifest", required=True)
    p.add_argument("--target-bank")
    p.add_argument("--ohem-threshold", type=float, default=0.7)
    p.add_argument("--ohem-min-kept", type=float, default=1.0 / 16.0)
    p.add_argument("--dis-scope", default="all", choices=["all", "labeled", "unlabeled"],
                   help="which samples receive the anchor-alignment term")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_loss_eval)

    p = sub.add_parser("augment", help="plan and apply mixing augmentations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", default="cutmix", choices=["cutmix", "copy_paste"])
    p.add_argument("--plans", help="replay a saved plans.json instead of planning")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rect-lo", type=float, default=0.25)
    p.add_argument("--rect-hi", type=float, default=0.5)
    p.add_argument("--tail-quantile", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("bench", help="synthetic-domain benchmark protocols")
    p.add_argument("--spec", help="domain spec JSON; defaults to the built-in canonical spec")
    p.add_argument("--protocol", default="compare",
                   choices=["compare", "budget_sweep", "anchor_sweep"])
    p.add_argument("--budget", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=getattr(logging, args.log_level))

    try:
        return args.func(args)
    except _MISSING_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    except _USAGE_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except AnchorselError as exc:
        log.error("%s", exc)
        return EXIT_COMPUTE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
