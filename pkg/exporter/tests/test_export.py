"""Exporter tests, including the release sanity criterion: template
text export shapes, matched-vs-mismatched cosine on hand-picked pairs,
and validation through the consumer's store reader."""
import csv
import json
import math
import wave

import numpy as np
import pytest
from PIL import Image

from xmodal_export.cli import main
from xmodal_export.errors import ModelLoadError, UnreadableInput
from xmodal_export.export import ExportJob, export_features, read_listing
from xmodal_export.models import ToyEncoder, load_encoder

# the store is consumed through the package that defines the reader side
from xmodal.store import Modality, read_store

IMAGENET_TEMPLATES = [
    "itap of a {cls}.",
    "a bad photo of the {cls}.",
    "a origami {cls}.",
    "a photo of the large {cls}.",
    "a {cls} in a video game.",
    "art of the {cls}.",
    "a photo of the small {cls}.",
]


def write_text_listing(path, names):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_name", "class_id"])
        for cid, name in enumerate(names):
            writer.writerow([name, cid])


def solid(color, size=(48, 48)):
    return Image.new("RGB", size, color)


def stripes(direction, size=(48, 48), period=6):
    img = Image.new("RGB", size)
    px = img.load()
    for x in range(size[0]):
        for y in range(size[1]):
            k = (x if direction == "vertical" else y) // period
            px[x, y] = (255, 255, 255) if k % 2 == 0 else (0, 0, 0)
    return img


def noisy(seed, size=(48, 48)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    return Image.fromarray(arr, "RGB")


def write_image_listing(tmp_path, images_with_classes, splits=None):
    listing = tmp_path / "imgs.csv"
    with open(listing, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "class_id", "split"])
        for i, (img, cid) in enumerate(images_with_classes):
            p = tmp_path / f"img_{i}.png"
            img.save(p)
            writer.writerow([p, cid, splits[i] if splits else "train"])
    return listing


def write_wav(path, freq, seconds=0.25, rate=8000, amplitude=0.5):
    t = np.arange(int(rate * seconds)) / rate
    samples = (amplitude * np.sin(2 * math.pi * freq * t) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(samples.tobytes())


class TestTextExport:
    def test_two_classes_seven_templates_gives_14_records(self, tmp_path):
        listing = tmp_path / "classes.csv"
        write_text_listing(listing, ["otterhound", "egyptian cat"])
        pool = tmp_path / "templates.txt"
        pool.write_text("\n".join(IMAGENET_TEMPLATES) + "\n")
        out = tmp_path / "texts.xmf"
        rc = main(["export", "--modality", "text", "--model", "toy",
                   "--inputs", str(listing), "--templates", str(pool),
                   "--out", str(out)])
        assert rc == 0
        store = read_store(out)  # full validation by the consumer
        assert len(store.records) == 14
        assert store.dimension == ToyEncoder.dimension
        per_class = {}
        for rec in store.records:
            assert rec.modality == Modality.TEXT
            per_class.setdefault(rec.class_id, set()).add(rec.view_id)
        assert per_class == {0: set(range(7)), 1: set(range(7))}
        assert store.manifest.templates == IMAGENET_TEMPLATES
        assert store.manifest.classes == {0: "otterhound", 1: "egyptian cat"}

    def test_default_template_is_bare_classname(self, tmp_path):
        listing = tmp_path / "classes.csv"
        write_text_listing(listing, ["dog"])
        out = tmp_path / "t.xmf"
        assert main(["export", "--modality", "text", "--inputs", str(listing),
                     "--out", str(out)]) == 0
        store = read_store(out)
        assert len(store.records) == 1
        assert store.manifest.templates == ["{cls}"]


class TestMatchedPairs:
    # hand-picked image/caption pairs; the caption names what the image
    # shows, and every pair is discriminable by pixel statistics
    PAIRS = [
        (("red",), solid((230, 20, 20)), "a red square"),
        (("green",), solid((20, 200, 20)), "a green square"),
        (("blue",), solid((20, 20, 230)), "a blue square"),
        (("yellow",), solid((240, 240, 10)), "a yellow square"),
        (("orange",), solid((250, 130, 10)), "an orange square"),
        (("purple",), solid((130, 10, 250)), "a purple square"),
        (("cyan",), solid((10, 240, 240)), "a cyan square"),
        (("magenta",), solid((240, 10, 240)), "a magenta square"),
        (("white",), solid((250, 250, 250)), "a bright white square"),
        (("black",), solid((5, 5, 5)), "a dark black square"),
        (("vstripes",), stripes("vertical"), "vertical stripes"),
        (("hstripes",), stripes("horizontal"), "horizontal stripes"),
        (("gray",), solid((128, 128, 128)), "a plain gray square"),
    ]

    def test_matched_cosine_exceeds_mismatched(self):
        enc = ToyEncoder()
        imgs = enc.encode_image_batch([img for _, img, _ in self.PAIRS])
        txts = enc.encode_text_batch([cap for _, _, cap in self.PAIRS])
        imgs = imgs / np.linalg.norm(imgs, axis=1, keepdims=True)
        txts = txts / np.linalg.norm(txts, axis=1, keepdims=True)
        sims = imgs @ txts.T
        n = len(self.PAIRS)
        assert n >= 10
        for i in range(n):
            matched = sims[i, i]
            for j in range(n):
                if j != i:
                    assert matched > sims[i, j], (
                        f"pair {i} vs caption {j}: "
                        f"{matched:.3f} <= {sims[i, j]:.3f}"
                    )
        print(f"[PASS] exporter sanity: matched > mismatched on all "
              f"{n} pairs x {n - 1} foils")


class TestImageExport:
    def test_flip_views_double_records(self, tmp_path):
        listing = write_image_listing(
            tmp_path, [(solid((200, 0, 0)), 0), (solid((0, 200, 0)), 1),
                       (noisy(1), 2)]
        )
        out = tmp_path / "imgs.xmf"
        rc = main(["export", "--modality", "image", "--inputs", str(listing),
                   "--views", "flip", "--out", str(out)])
        assert rc == 0
        store = read_store(out)
        assert len(store.records) == 6
        assert {r.view_id for r in store.records} == {0, 1}

    def test_crops_views_and_seed_in_manifest(self, tmp_path):
        listing = write_image_listing(tmp_path, [(noisy(2, (64, 48)), 0)])
        out = tmp_path / "crops.xmf"
        rc = main(["export", "--modality", "image", "--inputs", str(listing),
                   "--views", "crops:4", "--seed", "9", "--out", str(out)])
        assert rc == 0
        store = read_store(out)
        assert sorted(r.view_id for r in store.records) == [0, 1, 2, 3, 4]
        assert store.manifest.extra["export_info"]["seed"] == 9

    def test_determinism_byte_identical(self, tmp_path):
        listing = write_image_listing(
            tmp_path, [(noisy(3), 0), (solid((10, 10, 240)), 1)]
        )
        out1, out2 = tmp_path / "a.xmf", tmp_path / "b.xmf"
        for out in (out1, out2):
            assert main(["export", "--modality", "image", "--inputs",
                         str(listing), "--views", "crops:3", "--seed", "4",
                         "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_normalize_flag_truthful(self, tmp_path):
        listing = write_image_listing(tmp_path, [(solid((200, 30, 30)), 0)])
        out = tmp_path / "n.xmf"
        assert main(["export", "--modality", "image", "--inputs", str(listing),
                     "--normalize", "--out", str(out)]) == 0
        store = read_store(out)
        assert store.manifest.normalized is True
        for rec in store.records:
            assert abs(float(np.linalg.norm(rec.vector)) - 1.0) < 1e-5

    def test_unreadable_image_fails(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not an image")
        listing = tmp_path / "l.csv"
        listing.write_text(f"path,class_id\n{bad},0\n")
        rc = main(["export", "--modality", "image", "--inputs", str(listing),
                   "--out", str(tmp_path / "x.xmf")])
        assert rc == 1


class TestAudioExport:
    def test_low_vs_high_frequency_matches_captions(self, tmp_path):
        low, high = tmp_path / "low.wav", tmp_path / "high.wav"
        write_wav(low, freq=120)
        write_wav(high, freq=3000)
        listing = tmp_path / "aud.csv"
        listing.write_text(f"path,class_id\n{low},0\n{high},1\n")
        out = tmp_path / "aud.xmf"
        assert main(["export", "--modality", "audio", "--inputs", str(listing),
                     "--out", str(out)]) == 0
        store = read_store(out)
        assert len(store.records) == 2
        enc = ToyEncoder()
        caps = enc.encode_text_batch(["a low hum", "a high whistle"])
        caps = caps / np.linalg.norm(caps, axis=1, keepdims=True)
        for rec, own in zip(store.records, range(2)):
            v = rec.vector / np.linalg.norm(rec.vector)
            sims = caps @ v
            assert sims[own] > sims[1 - own]

    def test_silent_clip_rejected(self, tmp_path):
        silent = tmp_path / "s.wav"
        write_wav(silent, freq=100, amplitude=0.0)
        listing = tmp_path / "l.csv"
        listing.write_text(f"path,class_id\n{silent},0\n")
        rc = main(["export", "--modality", "audio", "--inputs", str(listing),
                   "--out", str(tmp_path / "x.xmf")])
        assert rc == 1


class TestModelRegistry:
    def test_unknown_model_rejected(self):
        with pytest.raises(ModelLoadError):
            load_encoder("resnet-everything")

    def test_clip_without_weights_raises_model_load_error(self):
        # hub access is unavailable here; the error class must be stable
        with pytest.raises(ModelLoadError):
            load_encoder("clip:definitely/not-cached-anywhere")

    def test_empty_listing_rejected(self, tmp_path):
        f = tmp_path / "e.csv"
        f.write_text("path,class_id\n")
        with pytest.raises(UnreadableInput):
            read_listing(f, text_mode=False)


class TestEndToEndConsumption:
    def test_exported_stores_drive_a_training_run(self, tmp_path):
        """Full loop: export image + text stores with the toy model, then
        run a zero-shot evaluation through the consumer CLI."""
        colors = {
            0: ("red", (230, 20, 20)),
            1: ("green", (20, 200, 20)),
            2: ("blue", (20, 20, 230)),
        }
        pairs = []
        rng = np.random.default_rng(0)
        for cid, (_, base) in colors.items():
            for _ in range(6):
                jitter = tuple(
                    int(np.clip(c + rng.integers(-30, 30), 0, 255))
                    for c in base
                )
                pairs.append((solid(jitter), cid))
        listing = write_image_listing(tmp_path, pairs)
        img_store = tmp_path / "imgs.xmf"
        assert main(["export", "--modality", "image", "--inputs", str(listing),
                     "--out", str(img_store)]) == 0

        text_listing = tmp_path / "names.csv"
        write_text_listing(text_listing, [v[0] for v in colors.values()])
        pool = tmp_path / "pool.txt"
        pool.write_text("a {cls} square\n")
        txt_store = tmp_path / "texts.xmf"
        assert main(["export", "--modality", "text", "--inputs",
                     str(text_listing), "--templates", str(pool),
                     "--out", str(txt_store)]) == 0

        from xmodal.cli import main as consumer_main

        out = tmp_path / "zs"
        rc = consumer_main(["zeroshot", "--features", str(img_store),
                            "--text", str(txt_store), "--out", str(out)])
        assert rc == 0
        report = (out / "rows.csv").read_text().splitlines()
        acc = float(report[1].split(",")[4])
        assert acc == 1.0  # color concepts align by construction

    def test_exported_split_column_supports_training(self, tmp_path):
        """Rows marked split=test become the store's held-out partition,
        enough for a full seeded training run downstream."""
        rng = np.random.default_rng(1)
        pairs, splits = [], []
        for cid, base in enumerate([(230, 20, 20), (20, 200, 20)]):
            for i in range(8):
                jitter = tuple(
                    int(np.clip(c + rng.integers(-40, 40), 0, 255))
                    for c in base
                )
                pairs.append((solid(jitter), cid))
                splits.append("test" if i >= 5 else "train")
        listing = write_image_listing(tmp_path, pairs, splits)
        img_store = tmp_path / "imgs.xmf"
        assert main(["export", "--modality", "image", "--inputs", str(listing),
                     "--out", str(img_store)]) == 0
        store = read_store(img_store)
        assert len(store.manifest.test_samples) == 6

        text_listing = tmp_path / "names.csv"
        write_text_listing(text_listing, ["red", "green"])
        txt_store = tmp_path / "texts.xmf"
        assert main(["export", "--modality", "text", "--inputs",
                     str(text_listing), "--out", str(txt_store)]) == 0

        from xmodal.cli import main as consumer_main

        out = tmp_path / "tr"
        rc = consumer_main(
            ["train", "--features", str(img_store), "--text", str(txt_store),
             "--shots", "1", "--seeds", "0", "--iters", "60", "--warmup", "5",
             "--eval-every", "20", "--out", str(out)]
        )
        assert rc == 0
        report = (out / "rows.csv").read_text().splitlines()
        acc = float(report[1].split(",")[4])
        assert acc >= 0.5


class TestCliErrors:
    def test_missing_args_exit_1(self, capsys):
        assert main(["export"]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_flag_exit_1(self, capsys):
        assert main(["export", "--bogus"]) == 1
