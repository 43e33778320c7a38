"""Seeded synthetic benchmarks.

Desk-scale stand-ins for real encoder output: class means are random
unit vectors, each (class, modality) pair gets a fixed offset (the
modality gap), and samples are unit-normalized noisy draws around the
shifted mean. Modality noise is kept smaller than class separation so
an extra shot from another modality carries usable signal. Generation
uses numpy's PCG64 stream, which is stable across platforms for a given
seed; all structure is a pure function of the arguments.
"""
from __future__ import annotations

import numpy as np

from .episodes import EscMatching
from .store import FeatureRecord, FeatureStore, Modality, StoreManifest


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _class_means(rng, num_classes: int, dim: int) -> np.ndarray:
    return np.stack([_unit(rng.standard_normal(dim)) for _ in range(num_classes)])


def _offset(rng, dim: int, scale: float) -> np.ndarray:
    return scale * _unit(rng.standard_normal(dim))


def _draw(rng, mean: np.ndarray, noise: float) -> np.ndarray:
    return _unit(mean + noise * rng.standard_normal(mean.shape)).astype(np.float32)


def make_vl_benchmark(
    num_classes: int = 10,
    dim: int = 64,
    seed: int = 0,
    train_candidates: int = 24,
    test_per_class: int = 20,
    image_noise: float = 0.12,
    text_noise: float = 0.04,
    modality_offset: float = 0.25,
    text_views: int = 1,
    text_view_noise: list[float] | None = None,
    flip_views: bool = False,
    dataset: str = "synthetic-vl",
) -> tuple[FeatureStore, FeatureStore]:
    """Image + text stores over one shared class structure.

    The image store carries train candidates plus a flagged test
    partition; the text store carries one record per (class, view).
    Per-view text noise can be overridden to control template quality
    for mining experiments.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    means = _class_means(rng, num_classes, dim)
    img_off = [_offset(rng, dim, modality_offset) for _ in range(num_classes)]
    txt_off = [_offset(rng, dim, modality_offset) for _ in range(num_classes)]
    view_noise = list(text_view_noise or [text_noise] * text_views)

    classes = {c: f"class_{c:02d}" for c in range(num_classes)}
    image_records: list[FeatureRecord] = []
    test_ids: list[int] = []
    sid = 0
    for c in range(num_classes):
        center = means[c] + img_off[c]
        for _ in range(train_candidates):
            vec = _draw(rng, center, image_noise)
            image_records.append(FeatureRecord(sid, c, Modality.IMAGE, 0, vec))
            if flip_views:
                # a flipped crop lands near, not on, the original feature
                flip = _draw(rng, vec.astype(np.float64), 0.2 * image_noise)
                image_records.append(FeatureRecord(sid, c, Modality.IMAGE, 1, flip))
            sid += 1
        for _ in range(test_per_class):
            vec = _draw(rng, center, image_noise)
            image_records.append(FeatureRecord(sid, c, Modality.IMAGE, 0, vec))
            test_ids.append(sid)
            sid += 1

    text_records: list[FeatureRecord] = []
    for c in range(num_classes):
        center = means[c] + txt_off[c]
        for view, noise in enumerate(view_noise):
            vec = _draw(rng, center, noise)
            text_records.append(FeatureRecord(c, c, Modality.TEXT, view, vec))

    image_store = FeatureStore(
        dim,
        image_records,
        StoreManifest(dataset=dataset, classes=dict(classes), test_samples=test_ids),
    )
    text_store = FeatureStore(
        dim,
        text_records,
        StoreManifest(dataset=dataset + "-text", classes=dict(classes)),
    )
    return image_store, text_store


def make_esc_benchmark(
    variant: str = "ESC19",
    dim: int = 64,
    seed: int = 0,
    image_train_candidates: int = 16,
    image_test_per_class: int = 10,
    audio_per_fold: int = 8,
    num_folds: int = 5,
    image_noise: float = 0.12,
    audio_noise: float = 0.22,
    modality_offset: float = 0.3,
) -> tuple[FeatureStore, FeatureStore]:
    """Image + audio stores named after the audiovisual benchmark classes.

    The audio store mimics the five-fold layout: audio_per_fold records
    per class per fold, fold membership recorded in the manifest.
    """
    matching = EscMatching.load(variant)
    k = len(matching.pairs)
    rng = np.random.default_rng(np.random.PCG64(seed))
    means = _class_means(rng, k, dim)
    img_off = [_offset(rng, dim, modality_offset) for _ in range(k)]
    aud_off = [_offset(rng, dim, modality_offset) for _ in range(k)]

    image_records: list[FeatureRecord] = []
    test_ids: list[int] = []
    sid = 0
    for c in range(k):
        center = means[c] + img_off[c]
        for _ in range(image_train_candidates):
            image_records.append(
                FeatureRecord(sid, c, Modality.IMAGE, 0, _draw(rng, center, image_noise))
            )
            sid += 1
        for _ in range(image_test_per_class):
            image_records.append(
                FeatureRecord(sid, c, Modality.IMAGE, 0, _draw(rng, center, image_noise))
            )
            test_ids.append(sid)
            sid += 1

    audio_records: list[FeatureRecord] = []
    folds: dict[int, int] = {}
    aid = 0
    for c in range(k):
        center = means[c] + aud_off[c]
        for fold in range(1, num_folds + 1):
            for _ in range(audio_per_fold):
                audio_records.append(
                    FeatureRecord(aid, c, Modality.AUDIO, 0, _draw(rng, center, audio_noise))
                )
                folds[aid] = fold
                aid += 1

    image_store = FeatureStore(
        dim,
        image_records,
        StoreManifest(
            dataset=f"synthetic-imagenet-{variant.lower()}",
            classes={i: name for i, name in enumerate(p[1] for p in matching.pairs)},
            test_samples=test_ids,
        ),
    )
    audio_store = FeatureStore(
        dim,
        audio_records,
        StoreManifest(
            dataset=f"synthetic-esc-{variant.lower()}",
            classes={i: name for i, name in enumerate(p[0] for p in matching.pairs)},
            folds=folds,
        ),
    )
    return image_store, audio_store


def make_trainset_features(
    num_classes: int,
    dim: int,
    per_class: int,
    seed: int,
    noise: float = 0.3,
) -> list[tuple[np.ndarray, int, Modality]]:
    """Flat unit-feature trainset for benchmarking the optimizer itself."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    means = _class_means(rng, num_classes, dim)
    out = []
    for c in range(num_classes):
        for _ in range(per_class):
            vec = _unit(means[c] + noise * rng.standard_normal(dim))
            out.append((vec, c, Modality.IMAGE))
    return out
