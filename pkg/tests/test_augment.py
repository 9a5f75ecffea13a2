import numpy as np
import pytest

from anchorsel.augment import (
    CopyPastePlan,
    CutmixPlan,
    Rect,
    apply_copy_paste,
    apply_cutmix,
    donor_distribution,
    load_plans,
    plan_copy_paste,
    plan_cutmix,
    plan_from_dict,
    plan_to_dict,
    save_plans,
    tail_classes_by_frequency,
)
from anchorsel.errors import (
    EmptyRange,
    NoCandidates,
    NoCopyableClasses,
    RectOutOfBounds,
    ShapeMismatch,
)

from oracles import (
    copy_paste_oracle_check,
    cutmix_oracle_check,
    provenance_check,
    softmax_oracle,
)


def random_pair(rng, channels=2, height=6, width=6, num_categories=4):
    image = rng.normal(size=(channels, height, width)).astype(np.float32)
    label = rng.integers(0, num_categories, size=(height, width)).astype(np.uint16)
    return image, label


class TestDonorDistribution:
    def test_single_candidate(self):
        dist = donor_distribution({"only": np.array([-1.0, -2.0])})
        assert np.allclose(dist.weights, [1.0])

    def test_identical_candidates_split_evenly(self):
        conf = np.array([-1.0, -0.5])
        dist = donor_distribution({"a": conf, "b": conf.copy()})
        assert np.allclose(dist.weights, [0.5, 0.5])

    def test_worked_softmax_example(self):
        dist = donor_distribution({"a": np.array([-1.0]), "b": np.array([0.0])})
        want = softmax_oracle([2.0, 1.0])
        assert np.allclose(dist.weights, want, atol=1e-9)
        assert dist.weights[0] == pytest.approx(0.7311, abs=1e-4)
        assert dist.weights[1] == pytest.approx(0.2689, abs=1e-4)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            conf = {
                f"c{i}": np.where(rng.random(5) < 0.3, np.nan, -rng.random(5))
                for i in range(4)
            }
            if all(np.isnan(v).all() for v in conf.values()):
                continue
            dist = donor_distribution(conf)
            assert abs(dist.weights.sum() - 1.0) <= 1e-9

    def test_absent_class_excluded_from_softmax(self):
        dist = donor_distribution({"a": np.array([-1.0]), "b": np.array([np.nan])})
        assert np.allclose(dist.per_class_softmax, [[1.0, 0.0]])
        assert np.allclose(dist.weights, [1.0, 0.0])

    def test_class_absent_everywhere_contributes_zero_row(self):
        dist = donor_distribution(
            {"a": np.array([-1.0, np.nan]), "b": np.array([0.0, np.nan])}
        )
        assert np.allclose(dist.per_class_softmax[1], [0.0, 0.0])

    def test_monotone_in_raised_confidence_gap(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            base = -rng.random(size=(3, 4)) - 0.01
            conf = {f"c{i}": base[i].copy() for i in range(3)}
            before = donor_distribution(conf)
            i = int(rng.integers(3))
            c = int(rng.integers(4))
            bumped = {k: v.copy() for k, v in conf.items()}
            bumped[f"c{i}"][c] -= 0.5  # lower confidence -> larger (1 - Conf)
            after = donor_distribution(bumped)
            assert after.per_class_softmax[c, i] > before.per_class_softmax[c, i]

    def test_no_candidates(self):
        with pytest.raises(NoCandidates):
            donor_distribution({})

    def test_uniform_fallback_when_nothing_present(self):
        dist = donor_distribution({"a": np.array([np.nan]), "b": np.array([np.nan])})
        assert np.allclose(dist.weights, [0.5, 0.5])


class TestPlanCutmix:
    def _distribution(self):
        return donor_distribution({"d0": np.array([-1.0]), "d1": np.array([-2.0])})

    def test_seed_determinism(self):
        dist = self._distribution()
        a = plan_cutmix("base", ["d0", "d1"], dist, (8, 10), seed=5)
        b = plan_cutmix("base", ["d0", "d1"], dist, (8, 10), seed=5)
        assert a == b
        c = plan_cutmix("base", ["d0", "d1"], dist, (8, 10), seed=6)
        assert a != c

    def test_full_fraction_covers_image(self):
        dist = self._distribution()
        for seed in range(5):
            plan = plan_cutmix("base", ["d0", "d1"], dist, (8, 10),
                               rect_fraction_range=(1.0, 1.0), seed=seed)
            assert (plan.rect.x0, plan.rect.y0) == (0, 0)
            assert (plan.rect.width, plan.rect.height) == (10, 8)

    def test_degenerate_distribution_always_picks_first(self):
        # candidate d1 is absent in every class -> weights [1.0, 0.0]
        dist = donor_distribution({"d0": np.array([-5.0]), "d1": np.array([np.nan])})
        assert np.allclose(dist.weights, [1.0, 0.0])
        for seed in range(10):
            plan = plan_cutmix("base", ["d0", "d1"], dist, (6, 6), seed=seed)
            assert plan.donor_id == "d0"

    def test_rect_always_in_bounds(self):
        dist = self._distribution()
        for seed in range(50):
            plan = plan_cutmix("base", ["d0", "d1"], dist, (7, 5), seed=seed)
            r = plan.rect
            assert 0 <= r.x0 and r.x0 + r.width <= 5
            assert 0 <= r.y0 and r.y0 + r.height <= 7
            assert r.width >= 1 and r.height >= 1

    def test_empty_range(self):
        with pytest.raises(EmptyRange):
            plan_cutmix("base", ["d0"], self._distribution(), (6, 6),
                        rect_fraction_range=(0.5, 0.2), seed=0)


class TestApplyCutmix:
    def test_full_rect_copies_donor(self):
        rng = np.random.default_rng(2)
        base, donor = random_pair(rng), random_pair(rng)
        plan = CutmixPlan("b", "d", Rect(0, 0, 6, 6), seed=0)
        image, label = apply_cutmix(base, donor, plan)
        assert np.array_equal(image, donor[0])
        assert np.array_equal(label, donor[1])

    def test_single_pixel_rect(self):
        rng = np.random.default_rng(3)
        base, donor = random_pair(rng), random_pair(rng)
        plan = CutmixPlan("b", "d", Rect(0, 0, 1, 1), seed=0)
        image, label = apply_cutmix(base, donor, plan)
        assert np.array_equal(image[:, 0, 0], donor[0][:, 0, 0])
        assert np.array_equal(image[:, 1:, :], base[0][:, 1:, :])
        assert np.array_equal(image[:, 0, 1:], base[0][:, 0, 1:])

    def test_checker_base_constant_donor_oracle(self):
        checker = np.indices((1, 6, 6)).sum(axis=0) % 2
        base = (checker.astype(np.float32), (checker[0] % 2).astype(np.uint16))
        donor = (np.full((1, 6, 6), 9.0, dtype=np.float32), np.full((6, 6), 3, dtype=np.uint16))
        plan = CutmixPlan("b", "d", Rect(0, 0, 6, 2), seed=0)  # rows 0-1
        out = apply_cutmix(base, donor, plan)
        assert cutmix_oracle_check(base, donor, plan.rect, out)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        base = random_pair(rng)
        donor = random_pair(rng, height=5)
        with pytest.raises(ShapeMismatch):
            apply_cutmix(base, donor, CutmixPlan("b", "d", Rect(0, 0, 2, 2), seed=0))

    def test_rect_out_of_bounds(self):
        rng = np.random.default_rng(5)
        base, donor = random_pair(rng), random_pair(rng)
        with pytest.raises(RectOutOfBounds):
            apply_cutmix(base, donor, CutmixPlan("b", "d", Rect(4, 4, 5, 5), seed=0))


class TestCopyPaste:
    def test_tail_only_donor_rejected(self):
        rng = np.random.default_rng(6)
        base = random_pair(rng)
        donor_label = np.full((6, 6), 2, dtype=np.uint16)
        donor = (base[0].copy(), donor_label)
        with pytest.raises(NoCopyableClasses):
            plan_copy_paste(base, donor, tail_classes={2}, seed=0)

    def test_single_class_donor_pastes_its_mask(self):
        rng = np.random.default_rng(7)
        base = random_pair(rng, num_categories=3)
        donor_label = np.zeros((6, 6), dtype=np.uint16)
        donor_label[2:4, 1:5] = 1
        donor = (rng.normal(size=base[0].shape).astype(np.float32), donor_label)
        plan = plan_copy_paste(base, donor, tail_classes={0}, seed=0)
        assert plan.copied_classes == (1,)
        assert plan.paste_offset == (0, 0)
        image, label = apply_copy_paste(base, donor, plan)
        pasted = donor_label == 1
        assert np.array_equal(label[pasted], donor_label[pasted])
        assert np.array_equal(label[~pasted], base[1][~pasted])
        assert np.array_equal(image[:, pasted], donor[0][:, pasted])

    def test_three_class_donor_copied_set(self):
        rng = np.random.default_rng(8)
        base = random_pair(rng, num_categories=4)
        donor_label = np.zeros((6, 6), dtype=np.uint16)
        donor_label[0:2] = 1
        donor_label[2:4] = 2
        donor_label[4:6] = 3
        donor = (base[0].copy(), donor_label)
        plan = plan_copy_paste(base, donor, tail_classes={2}, seed=0)
        assert plan.copied_classes == (1, 3)
        out = apply_copy_paste(base, donor, plan)
        assert copy_paste_oracle_check(base, donor, plan, out)

    def test_offset_clipping_can_empty_the_paste(self):
        rng = np.random.default_rng(9)
        base = random_pair(rng)
        donor_label = np.zeros((6, 6), dtype=np.uint16)
        donor_label[0, 0] = 1
        donor = (base[0].copy(), donor_label)
        plan = CopyPastePlan("b", "d", (1,), paste_offset=(-3, -3), seed=0)
        image, label = apply_copy_paste(base, donor, plan)
        assert np.array_equal(image, base[0])
        assert np.array_equal(label, base[1])

    def test_every_pixel_from_base_or_donor(self):
        rng = np.random.default_rng(10)
        for trial in range(20):
            base, donor = random_pair(rng), random_pair(rng)
            jitter = int(rng.integers(0, 3))
            try:
                plan = plan_copy_paste(
                    base, donor, tail_classes={0}, seed=trial, offset_jitter=jitter
                )
            except NoCopyableClasses:
                continue
            out = apply_copy_paste(base, donor, plan)
            assert provenance_check(base, donor, plan, out, "copy_paste")
            assert copy_paste_oracle_check(base, donor, plan, out)


class TestTailClasses:
    def test_known_counts(self):
        label = np.zeros((4, 4), dtype=np.uint16)
        label[0, 0] = 1  # class 1: 1 pixel
        label[1, :2] = 2  # class 2: 2 pixels
        # class 0: 13 pixels, class 3: absent
        tail = tail_classes_by_frequency([label], num_categories=4, quantile=0.5)
        assert tail == {3, 1}  # two smallest counts: absent class 3 (0), class 1 (1)

    def test_zero_quantile_is_empty(self):
        label = np.zeros((2, 2), dtype=np.uint16)
        assert tail_classes_by_frequency([label], 4, quantile=0.0) == set()


class TestPlanSerialization:
    def test_round_trip(self, tmp_path):
        plans = [
            CutmixPlan("b0", "d1", Rect(1, 2, 3, 4), seed=9),
            CopyPastePlan("b1", "d0", (1, 3), (0, 0), seed=4),
        ]
        path = tmp_path / "plans.json"
        save_plans(plans, path)
        assert load_plans(path) == plans

    def test_dict_round_trip(self):
        plan = CutmixPlan("b", "d", Rect(0, 1, 2, 3), seed=7)
        assert plan_from_dict(plan_to_dict(plan)) == plan

    def test_replay_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(11)
        base, donor = random_pair(rng), random_pair(rng)
        dist = donor_distribution({"d": np.array([-1.0])})
        plan = plan_cutmix("b", ["d"], dist, (6, 6), seed=3)
        first = apply_cutmix(base, donor, plan)
        save_plans([plan], tmp_path / "p.json")
        (reloaded,) = load_plans(tmp_path / "p.json")
        second = apply_cutmix(base, donor, reloaded)
        assert first[0].tobytes() == second[0].tobytes()
        assert first[1].tobytes() == second[1].tobytes()
