import json

import numpy as np
import pytest

from anchorsel.tensor_io import IGNORE_LABEL, write_tensor


@pytest.fixture
def make_manifest(tmp_path):
    """Factory writing a synthetic manifest plus its tensor files.

    Each sample gets a feature map, label map, prediction map, probability
    map, and discriminator score unless switched off. Returns the manifest
    path.
    """

    def _build(
        n_samples=3,
        num_categories=4,
        feature_channels=3,
        height=6,
        width=6,
        seed=0,
        with_labels=True,
        with_predictions=True,
        with_probabilities=True,
        with_discriminator=True,
        ignore_fraction=0.0,
        name="manifest.json",
    ):
        rng = np.random.default_rng(seed)
        samples = []
        for i in range(n_samples):
            sample_id = f"sample{i:03d}"
            entry = {"id": sample_id}

            features = rng.normal(size=(feature_channels, height, width)).astype(np.float32)
            feature_file = f"{sample_id}_feat.tnsr"
            write_tensor(tmp_path / feature_file, features)
            entry["feature_path"] = feature_file

            if with_labels:
                labels = rng.integers(0, num_categories, size=(height, width)).astype(np.uint16)
                if ignore_fraction > 0:
                    drop = rng.random(size=(height, width)) < ignore_fraction
                    labels[drop] = IGNORE_LABEL
                label_file = f"{sample_id}_label.tnsr"
                write_tensor(tmp_path / label_file, labels)
                entry["label_path"] = label_file

            if with_predictions:
                preds = rng.integers(0, num_categories, size=(height, width)).astype(np.uint16)
                pred_file = f"{sample_id}_pred.tnsr"
                write_tensor(tmp_path / pred_file, preds)
                entry["prediction_path"] = pred_file

            if with_probabilities:
                raw = rng.random(size=(num_categories, height, width)) + 0.05
                probs = (raw / raw.sum(axis=0)).astype(np.float32)
                prob_file = f"{sample_id}_prob.tnsr"
                write_tensor(tmp_path / prob_file, probs)
                entry["probability_path"] = prob_file

            if with_discriminator:
                entry["discriminator_score"] = float(0.1 + 0.8 * rng.random())

            samples.append(entry)

        manifest = {
            "schema_version": 1,
            "samples": samples,
            "num_categories": num_categories,
            "feature_channels": feature_channels,
        }
        path = tmp_path / name
        path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return path

    return _build


@pytest.fixture
def random_probabilities():
    """Factory for valid post-softmax maps with probabilities away from 0."""

    def _build(rng, num_categories, height, width, floor=0.05):
        raw = rng.random(size=(num_categories, height, width)) + floor
        return raw / raw.sum(axis=0)

    return _build
