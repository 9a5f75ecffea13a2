import numpy as np
import pytest

from anchorsel.aggregation import (
    CategoryMask,
    aggregate_category,
    batch_vectors,
    build_image_vector,
)
from anchorsel.errors import CategoryOutOfRange, MissingMap, ShapeMismatch
from anchorsel.tensor_io import IGNORE_LABEL, load_manifest

from oracles import masked_mean_oracle


class TestAggregateCategory:
    def test_constant_map_mean(self):
        features = np.full((3, 4, 4), 3.0)
        mask = CategoryMask.from_map(np.zeros((4, 4), dtype=np.uint16), 0)
        assert np.allclose(aggregate_category(features, mask), [3.0, 3.0, 3.0])

    def test_empty_mask_is_zero(self):
        features = np.ones((2, 3, 3))
        mask = CategoryMask.from_map(np.zeros((3, 3), dtype=np.uint16), 7)
        assert mask.pixel_count == 0
        assert np.array_equal(aggregate_category(features, mask), np.zeros(2))

    def test_row0_mask_example(self):
        features = np.array([[[1.0, 2.0], [3.0, 4.0]], [[0.0, 0.0], [10.0, 10.0]]])
        label = np.array([[0, 0], [1, 1]], dtype=np.uint16)
        mask = CategoryMask.from_map(label, 0)
        assert np.allclose(aggregate_category(features, mask), [1.5, 0.0])

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            features = rng.normal(size=(3, 5, 7))
            label = rng.integers(0, 3, size=(5, 7))
            c = int(rng.integers(0, 3))
            mask = CategoryMask.from_map(label, c)
            got = aggregate_category(features, mask)
            want = masked_mean_oracle(features, mask.pixels)
            assert np.allclose(got, want, rtol=1e-6)

    def test_shape_mismatch(self):
        features = np.ones((2, 3, 3))
        mask = CategoryMask.from_map(np.zeros((4, 4), dtype=np.uint16), 0)
        with pytest.raises(ShapeMismatch):
            aggregate_category(features, mask)


class TestBuildImageVector:
    def test_single_category_single_block(self):
        features = np.ones((2, 3, 3))
        label = np.full((3, 3), 1, dtype=np.uint16)
        vec = build_image_vector(features, label, num_categories=3)
        assert np.array_equal(vec.presence, [False, True, False])
        assert np.array_equal(vec.values[:2], [0.0, 0.0])
        assert np.allclose(vec.values[2:4], [1.0, 1.0])
        assert np.array_equal(vec.values[4:], [0.0, 0.0])

    def test_concatenation_order(self):
        features = np.array([[[1.0, 2.0], [3.0, 4.0]], [[0.0, 0.0], [10.0, 10.0]]])
        label = np.array([[0, 0], [1, 1]], dtype=np.uint16)
        vec = build_image_vector(features, label, num_categories=2)
        assert np.allclose(vec.values, [1.5, 0.0, 3.5, 10.0])

    def test_all_ignore_is_zero_vector(self):
        features = np.ones((2, 2, 2))
        label = np.full((2, 2), IGNORE_LABEL, dtype=np.uint16)
        vec = build_image_vector(features, label, num_categories=3)
        assert not vec.presence.any()
        assert not vec.values.any()

    def test_category_out_of_range(self):
        features = np.ones((1, 2, 2))
        label = np.full((2, 2), 5, dtype=np.uint16)
        with pytest.raises(CategoryOutOfRange):
            build_image_vector(features, label, num_categories=3)

    def test_linearity_under_feature_scaling(self):
        rng = np.random.default_rng(2)
        features = rng.normal(size=(3, 4, 4))
        label = rng.integers(0, 4, size=(4, 4)).astype(np.uint16)
        base = build_image_vector(features, label, num_categories=4)
        scaled = build_image_vector(2.5 * features, label, num_categories=4)
        assert np.allclose(scaled.values, 2.5 * base.values, rtol=1e-12)

    def test_pixel_permutation_invariance(self):
        rng = np.random.default_rng(3)
        features = rng.normal(size=(2, 4, 5))
        label = rng.integers(0, 3, size=(4, 5)).astype(np.uint16)
        perm = rng.permutation(20)
        permuted_features = features.reshape(2, -1)[:, perm].reshape(2, 4, 5)
        permuted_label = label.reshape(-1)[perm].reshape(4, 5)
        a = build_image_vector(features, label, num_categories=3)
        b = build_image_vector(permuted_features, permuted_label, num_categories=3)
        assert np.allclose(a.values, b.values, rtol=1e-12)
        assert np.array_equal(a.presence, b.presence)


class TestBatchVectors:
    def test_manifest_order(self, make_manifest):
        manifest = load_manifest(make_manifest(n_samples=3))
        vectors = batch_vectors(manifest, "ground_truth")
        assert [v.source_id for v in vectors] == ["sample000", "sample001", "sample002"]
        assert all(v.values.shape == (4 * 3,) for v in vectors)

    def test_missing_prediction_map(self, make_manifest):
        manifest = load_manifest(make_manifest(n_samples=2, with_predictions=False))
        with pytest.raises(MissingMap, match="sample000"):
            batch_vectors(manifest, "prediction")

    def test_recompute_is_bit_identical(self, make_manifest):
        manifest = load_manifest(make_manifest(n_samples=3))
        a = batch_vectors(manifest, "prediction")
        b = batch_vectors(manifest, "prediction")
        for x, y in zip(a, b):
            assert np.array_equal(x.values, y.values)

    def test_threaded_equals_serial(self, make_manifest):
        manifest = load_manifest(make_manifest(n_samples=5))
        serial = batch_vectors(manifest, "ground_truth", threads=1)
        threaded = batch_vectors(manifest, "ground_truth", threads=4)
        for x, y in zip(serial, threaded):
            assert np.array_equal(x.values, y.values)
            assert x.source_id == y.source_id
