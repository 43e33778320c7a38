"""Templates, mining, and image-view expansion."""
import pytest

from xmodal.augment import (
    TemplatePool,
    apply_template,
    expand_views,
    mine_templates,
    parse_view_policy,
    zero_shot_template_scores,
)
from xmodal.episodes import sample_episode
from xmodal.errors import BadTemplate, MissingView
from xmodal.evaluation import pairs_from_records
from xmodal.store import Modality
from xmodal.synth import make_vl_benchmark


class TestApplyTemplate:
    def test_photo_template(self):
        assert apply_template("a photo of a {cls}.", "dog") == "a photo of a dog."

    def test_identity_template(self):
        assert apply_template("{cls}", "otterhound") == "otterhound"

    def test_texture_template(self):
        assert apply_template("{cls} texture.", "banded") == "banded texture."

    def test_no_case_folding(self):
        assert apply_template("a {cls}!", "Egyptian Cat") == "a Egyptian Cat!"

    def test_zero_placeholders_rejected(self):
        with pytest.raises(BadTemplate):
            apply_template("a photo of a dog.", "dog")

    def test_multiple_placeholders_rejected(self):
        with pytest.raises(BadTemplate):
            apply_template("{cls} and {cls}", "dog")

    def test_not_reapplicable(self):
        rendered = apply_template("a photo of a {cls}.", "dog")
        with pytest.raises(BadTemplate):
            apply_template(rendered, "cat")


class TestTemplatePool:
    def test_shipped_pool_has_180_templates(self):
        pool = TemplatePool.mined_pool()
        assert len(pool) == 180
        assert all(t.count("{cls}") == 1 for t in pool.templates)

    def test_classname_policy(self):
        assert TemplatePool.classname().templates == ["{cls}"]

    def test_hand_engineered_pets(self):
        pool = TemplatePool.hand_engineered("oxford_pets")
        assert pool.templates == ["a photo of a {cls}, a type of pet."]

    def test_hand_engineered_imagenet_has_seven(self):
        pool = TemplatePool.hand_engineered("imagenet")
        assert len(pool) == 7
        assert "itap of a {cls}." in pool.templates

    def test_bad_pool_rejected(self):
        with pytest.raises(BadTemplate):
            TemplatePool(["no placeholder here"])

    def test_from_file(self, tmp_path):
        f = tmp_path / "pool.txt"
        f.write_text("a {cls}.\nthe {cls}!\n")
        assert len(TemplatePool.from_file(f)) == 2


class TestMineTemplates:
    def test_tie_breaks_to_lower_index(self):
        got = mine_templates([(0, 0.5), (1, 0.9), (2, 0.9)], 2)
        assert got == [1, 2]

    def test_top_21_of_180(self):
        scores = [(i, (i % 60) / 100.0) for i in range(180)]
        got = mine_templates(scores, 21)
        assert len(got) == 21
        best = sorted(scores, key=lambda ta: (-ta[1], ta[0]))[:21]
        assert got == [tid for tid, _ in best]

    def test_k_beyond_pool_returns_all(self):
        scores = [(0, 0.1), (1, 0.3), (2, 0.2)]
        assert mine_templates(scores, 10) == [1, 2, 0]

    def test_deterministic(self):
        scores = [(i, float((i * 37) % 11) / 11) for i in range(50)]
        assert mine_templates(scores, 7) == mine_templates(scores, 7)

    def test_controlled_quality_scores_separate(self):
        # views 0..9 carry clean text, 10..19 carry noise: mining the val
        # signal must prefer the clean ones
        img, txt = make_vl_benchmark(
            num_classes=8, dim=32, seed=0, text_views=20,
            text_view_noise=[0.05] * 10 + [2.5] * 10,
        )
        ep = sample_episode(img, 4, 0, Modality.IMAGE)
        scores = zero_shot_template_scores(
            txt, pairs_from_records(ep.val), ep.class_ids
        )
        mined = mine_templates(scores, 10)
        assert sum(1 for t in mined if t < 10) >= 8


class TestExpandViews:
    def test_center_only_is_identity(self):
        img, _ = make_vl_benchmark(num_classes=3, dim=8, seed=0)
        ep = sample_episode(img, 2, 0, Modality.IMAGE)
        assert expand_views(ep, img, "center_only") is ep

    def test_plus_flip_doubles_rows(self):
        img, _ = make_vl_benchmark(num_classes=1, dim=8, seed=0, flip_views=True)
        ep = sample_episode(img, 2, 0, Modality.IMAGE)
        out = expand_views(ep, img, "plus_flip")
        assert len(out.train) == 4  # 2 shots -> 4 image feature rows

    def test_missing_view_raises(self):
        img, _ = make_vl_benchmark(num_classes=2, dim=8, seed=0)  # no flips
        ep = sample_episode(img, 1, 0, Modality.IMAGE)
        with pytest.raises(MissingView) as err:
            expand_views(ep, img, "plus_flip")
        assert err.value.view_id == 1

    def test_no_duplicate_sample_view_pairs(self):
        img, _ = make_vl_benchmark(num_classes=4, dim=8, seed=1, flip_views=True)
        ep = sample_episode(img, 3, 2, Modality.IMAGE)
        out = expand_views(ep, img, "plus_flip")
        keys = [(r.sample_id, r.view_id) for r in out.train]
        assert len(keys) == len(set(keys))

    def test_policy_parsing(self):
        assert parse_view_policy("center_only") == ("center_only", 0)
        assert parse_view_policy("plus_flip") == ("plus_flip", 1)
        assert parse_view_policy("random_crops:10") == ("random_crops", 10)
        with pytest.raises(ValueError):
            parse_view_policy("sideways")

    def test_random_crops_counts(self, tmp_path):
        import numpy as np

        from xmodal.store import FeatureRecord, FeatureStore, StoreManifest

        rng = np.random.default_rng(0)
        records = []
        for sid in range(3):
            for view in range(11):  # center + 10 crops
                records.append(
                    FeatureRecord(
                        sid, 0, Modality.IMAGE, view,
                        rng.standard_normal(4).astype(np.float32),
                    )
                )
        store = FeatureStore(
            4, records, StoreManifest(classes={0: "c0"})
        )
        ep = sample_episode(store, 1, 0, Modality.IMAGE)
        out = expand_views(ep, store, "random_crops:10")
        assert len(out.train) == 11  # 1 + 10 rows per train sample
