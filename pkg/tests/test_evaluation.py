"""Metrics, shifted-set evaluation, PCA figures, and report emission."""
import csv
import json

import numpy as np
import pytest

from xmodal.episodes import assemble_crossmodal_trainset, sample_episode
from xmodal.errors import (
    ClassVocabularyMismatch,
    DegenerateCovariance,
    EmptyTestSet,
)
from xmodal.evaluation import (
    EvalReport,
    EvalRow,
    emit_report,
    eval_shifted,
    pairs_from_records,
    pca_figure,
    pca_project,
    read_rows_csv,
    top1_accuracy,
    write_rows_csv,
)
from xmodal.heads import ClassifierState, init_from_text
from xmodal.store import (
    FeatureRecord,
    FeatureStore,
    Modality,
    StoreManifest,
    store_from_records,
)
from xmodal.synth import make_vl_benchmark
from xmodal.training import TrainConfig, train


class TestTop1Accuracy:
    def test_perfect_on_onehot(self):
        state = ClassifierState(np.eye(3), [0, 1, 2])
        pairs = [(np.eye(3)[i], i) for i in range(3)]
        assert top1_accuracy(state, pairs) == 1.0

    def test_three_of_four(self):
        state = ClassifierState(np.eye(2), [0, 1])
        pairs = [
            (np.array([1.0, 0.0]), 0),
            (np.array([0.0, 1.0]), 1),
            (np.array([1.0, 0.0]), 0),
            (np.array([1.0, 0.0]), 1),  # wrong
        ]
        assert top1_accuracy(state, pairs) == 0.75

    def test_matches_brute_force_cosine_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            c, d = int(rng.integers(2, 6)), int(rng.integers(4, 10))
            texts = {
                i: [FeatureRecord(i, i, Modality.TEXT, 0,
                                  rng.standard_normal(d).astype(np.float32))]
                for i in range(c)
            }
            store = FeatureStore(
                d,
                [r for rs in texts.values() for r in rs],
                StoreManifest(classes={i: str(i) for i in range(c)}),
            )
            state = init_from_text(store, list(range(c)))
            pairs = []
            for _ in range(20):
                f = rng.standard_normal(d)
                pairs.append((f / np.linalg.norm(f), int(rng.integers(0, c))))
            # brute force: cosine to each normalized text vector, first max
            correct = 0
            for f, y in pairs:
                best, best_cos = 0, -np.inf
                for i in range(c):
                    t = texts[i][0].vector.astype(np.float64)
                    cos = float(f @ (t / np.linalg.norm(t)))
                    if cos > best_cos:
                        best, best_cos = i, cos
                correct += int(best == y)
            assert top1_accuracy(state, pairs) == correct / len(pairs)

    def test_invariant_to_weight_scale_and_logit_scale(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((4, 8))
        pairs = []
        for _ in range(30):
            f = rng.standard_normal(8)
            pairs.append((f / np.linalg.norm(f), int(rng.integers(0, 4))))
        base = top1_accuracy(ClassifierState(w, [0, 1, 2, 3], 100.0), pairs)
        assert base == top1_accuracy(ClassifierState(5 * w, [0, 1, 2, 3], 1.0), pairs)

    def test_empty_test_set(self):
        with pytest.raises(EmptyTestSet):
            top1_accuracy(ClassifierState(np.eye(2), [0, 1]), [])


def _test_store(rng, dataset, classes, d=6, per_class=10, class_ids=None):
    ids = class_ids or list(range(classes))
    records = []
    sid = 0
    for cid in ids:
        direction = np.zeros(d)
        direction[cid % d] = 1.0
        for _ in range(per_class):
            v = direction + 0.1 * rng.standard_normal(d)
            records.append(
                FeatureRecord(sid, cid, Modality.IMAGE, 0, v.astype(np.float32))
            )
            sid += 1
    return FeatureStore(
        d, records, StoreManifest(dataset=dataset,
                                  classes={c: str(c) for c in ids})
    )


class TestEvalShifted:
    def test_target_equals_source(self):
        rng = np.random.default_rng(0)
        store = _test_store(rng, "src", 3)
        state = ClassifierState(np.eye(6)[:3], [0, 1, 2])
        rows = eval_shifted(state, store, [store])
        assert rows[0].accuracy == rows[1].accuracy
        direct = top1_accuracy(
            state, pairs_from_records(store.records)
        )
        assert rows[0].accuracy == direct

    def test_five_stores_five_rows(self):
        rng = np.random.default_rng(1)
        src = _test_store(rng, "src", 3)
        targets = [_test_store(rng, f"t{i}", 3) for i in range(4)]
        state = ClassifierState(np.eye(6)[:3], [0, 1, 2])
        rows = eval_shifted(state, src, targets)
        assert len(rows) == 5
        assert [r.dataset for r in rows] == ["src", "t0", "t1", "t2", "t3"]

    def test_remap_restricts_argmax(self):
        rng = np.random.default_rng(2)
        # target uses its own ids {0,1} mapping to classifier classes {2,0}
        target = _test_store(rng, "shift", 2, class_ids=[0, 1])
        # relabel target directions to match source classes 2 and 0
        remapped_records = []
        for r in target.records:
            direction = np.zeros(6)
            direction[(2 if r.class_id == 0 else 0) % 6] = 1.0
            v = direction + 0.1 * rng.standard_normal(6)
            remapped_records.append(
                FeatureRecord(r.sample_id, r.class_id, r.modality, 0,
                              v.astype(np.float32))
            )
        target = store_from_records(remapped_records, 6, target.manifest)
        state = ClassifierState(np.eye(6)[:4], [0, 1, 2, 3])
        src = _test_store(rng, "src", 4)
        remap = {"shift": {0: 2, 1: 0}}
        rows = eval_shifted(state, src, [target], remap_tables=remap)
        # brute-force masked argmax over allowed rows {0, 2}
        correct = 0
        for r in remapped_records:
            f = r.vector.astype(np.float64)
            f /= np.linalg.norm(f)
            logits = state.weights @ f
            allowed = [0, 2]
            best = max(allowed, key=lambda i: logits[i])
            correct += int(best == remap["shift"][r.class_id])
        assert rows[1].accuracy == correct / len(remapped_records)

    def test_vocabulary_mismatch_without_remap(self):
        rng = np.random.default_rng(3)
        src = _test_store(rng, "src", 2)
        bad = _test_store(rng, "bad", 3, class_ids=[7, 8, 9])
        state = ClassifierState(np.eye(6)[:2], [0, 1])
        with pytest.raises(ClassVocabularyMismatch):
            eval_shifted(state, src, [bad])


class TestPca:
    def test_pc1_aligns_with_displacement(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((40, 8)) * 0.05
        a[:, 0] += 3.0
        b = rng.standard_normal((40, 8)) * 0.05
        b[:, 0] -= 3.0
        comps, proj, _ = pca_project(np.vstack([a, b]))
        e1 = np.zeros(8)
        e1[0] = 1.0
        assert abs(float(comps[0] @ e1)) >= 0.99

    def test_variance_ordering(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((100, 5)) * np.array([3.0, 1.0, 0.5, 0.2, 0.1])
        _, proj, _ = pca_project(x)
        assert proj[:, 0].var() >= proj[:, 1].var()

    def test_rank2_reconstruction(self):
        rng = np.random.default_rng(2)
        basis = np.linalg.qr(rng.standard_normal((6, 2)))[0].T  # (2, 6)
        coeffs = rng.standard_normal((50, 2))
        x = coeffs @ basis
        comps, proj, mean = pca_project(x)
        recon = proj @ comps + mean
        assert np.max(np.abs(recon - x)) <= 1e-6

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((30, 4))
        c1, _, _ = pca_project(x)
        c2, _, _ = pca_project(x.copy())
        np.testing.assert_array_equal(c1, c2)
        for comp in c1:
            assert comp[np.argmax(np.abs(comp))] > 0

    def test_degenerate_cloud_rejected(self):
        x = np.ones((5, 3))
        with pytest.raises(DegenerateCovariance):
            pca_project(x)

    def test_figure_and_sidecar(self, tmp_path):
        img, txt = make_vl_benchmark(num_classes=2, dim=16, seed=0)
        ep = sample_episode(img, 2, 0, Modality.IMAGE)
        samples = assemble_crossmodal_trainset(ep, [(txt, Modality.TEXT)])
        state = ClassifierState(np.eye(16)[:2], [0, 1])
        out = tmp_path / "fig.svg"
        sidecar = pca_figure(samples, state, out)
        assert out.exists() and out.stat().st_size > 0
        assert out.read_bytes()[:5] == b"<?xml"  # vector graphics, not raster
        saved = json.loads((tmp_path / "fig.json").read_text())
        assert saved == sidecar
        assert len(saved["points"]) == len(samples)
        assert {p["modality"] for p in saved["points"]} == {"image", "text"}
        assert set(saved["boundary"]) == {"a", "b", "c"}

    def test_text_shot_moves_boundary(self, tmp_path):
        """Adding a text point per class to a 2-shot episode changes the
        trained boundary's PC-plane parameters."""
        from xmodal.heads import random_init

        # noisy enough that the softmax is not saturated at init
        img, txt = make_vl_benchmark(num_classes=2, dim=16, seed=1,
                                     image_noise=0.5, text_noise=0.3,
                                     modality_offset=0.5)
        ep = sample_episode(img, 2, 1, Modality.IMAGE)
        val = pairs_from_records(ep.val)
        cfg = TrainConfig(max_iters=150, eval_every=50, batch_size=4, seed=1,
                          warmup_iters=10)
        uni = assemble_crossmodal_trainset(ep)
        cross = assemble_crossmodal_trainset(ep, [(txt, Modality.TEXT)])
        init = random_init(16, ep.class_ids, 1)
        state_u = train(cfg, uni, val, init, primary=Modality.IMAGE).best_state
        state_x = train(cfg, cross, val, init, primary=Modality.IMAGE).best_state
        side_u = pca_figure(cross, state_u, tmp_path / "u.svg")
        side_x = pca_figure(cross, state_x, tmp_path / "x.svg")
        assert side_u["boundary"] != side_x["boundary"]


class TestReports:
    def test_three_seed_aggregate(self, tmp_path):
        report = EvalReport()
        for seed, acc in enumerate([0.5, 0.6, 0.7]):
            report.add(EvalRow("ds", "m", 1, seed, acc, 1.0))
        aggs = report.aggregates()
        assert len(aggs) == 1
        assert abs(aggs[0]["mean"] - 0.6) < 1e-12
        assert abs(aggs[0]["std"] - 0.1) < 1e-12  # sample std

    def test_single_seed_std_zero(self):
        report = EvalReport(rows=[EvalRow("ds", "m", 1, 0, 0.5)])
        assert report.aggregates()[0]["std"] == 0.0

    def test_single_row_csv(self, tmp_path):
        report = EvalReport(rows=[EvalRow("ds", "m", 2, 0, 0.3125, 4.0)])
        out = tmp_path / "r.csv"
        emit_report(report, "csv", out)
        lines = out.read_text().splitlines()
        assert lines[0] == "dataset,method,shots,mean,std,seconds"
        assert lines[1] == "ds,m,2,31.25,0.00,4.00"
        assert len(lines) == 2

    def test_markdown_matches_csv_numbers(self, tmp_path):
        report = EvalReport()
        for seed, acc in enumerate([0.511, 0.623, 0.702]):
            report.add(EvalRow("ds", "m", 4, seed, acc, 2.0))
        emit_report(report, "csv", tmp_path / "r.csv")
        emit_report(report, "markdown", tmp_path / "r.md")
        with open(tmp_path / "r.csv") as fh:
            csv_cells = list(csv.reader(fh))[1]
        md_cells = [
            c.strip()
            for c in (tmp_path / "r.md").read_text().splitlines()[2].split("|")
            if c.strip()
        ]
        assert md_cells == csv_cells

    def test_deterministic_order(self, tmp_path):
        report = EvalReport()
        for ds in ("b", "a"):
            for shots in (4, 1):
                report.add(EvalRow(ds, "m", shots, 0, 0.5))
        aggs = report.aggregates()
        assert [(a["dataset"], a["shots"]) for a in aggs] == [
            ("a", 1), ("a", 4), ("b", 1), ("b", 4)
        ]

    def test_rows_csv_round_trip(self, tmp_path):
        rows = [EvalRow("ds", "m", 1, 3, 0.123456789, 1.25)]
        write_rows_csv(rows, tmp_path / "rows.csv")
        back = read_rows_csv(tmp_path / "rows.csv")
        assert back[0].accuracy == rows[0].accuracy
        assert back[0].seed == 3

    def test_empty_report_rejected(self, tmp_path):
        with pytest.raises(EmptyTestSet):
            emit_report(EvalReport(), "csv", tmp_path / "r.csv")


class TestIdentityRemap:
    def test_identity_remap_equals_plain_accuracy(self):
        rng = np.random.default_rng(7)
        store = _test_store(rng, "same", 3)
        state = ClassifierState(np.eye(6)[:3], [0, 1, 2])
        plain = eval_shifted(state, store, [])[0].accuracy
        remapped = eval_shifted(
            state, store, [], remap_tables={"same": {0: 0, 1: 1, 2: 2}}
        )[0].accuracy
        assert plain == remapped


class TestFigureDeterminism:
    def test_pca_svg_bytes_reproduce(self, tmp_path):
        rng = np.random.default_rng(0)
        samples = [
            (rng.standard_normal(6), i % 2, Modality.IMAGE) for i in range(12)
        ]
        state = ClassifierState(np.eye(6)[:2], [0, 1])
        pca_figure(samples, state, tmp_path / "a.svg")
        pca_figure(samples, state, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
