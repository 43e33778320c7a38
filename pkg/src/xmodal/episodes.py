"""Seeded few-shot episode construction.

An episode is one experiment instance: n training shots and min(n, 4)
validation shots per class in the primary modality, plus a fixed test
set. Sampling is per-class without replacement, classes processed in
ascending class_id with candidates sorted by sample_id before shuffling,
so a split is a pure function of (store contents, shots, seed) and never
of store ordering.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    InsufficientSamples,
    MissingClassInModality,
    MissingFold,
    UnmatchedClass,
)
from .rng import SplitMix64, mix
from .store import FeatureRecord, FeatureStore, Modality, unit_vector


def val_size(shots: int) -> int:
    """Validation shots per class: min(n, 4)."""
    return min(shots, 4)


@dataclass
class EpisodeSplit:
    train: list[FeatureRecord]
    val: list[FeatureRecord]
    test: list[FeatureRecord]
    shots: int
    seed: int
    class_ids: list[int]
    modality: Modality

    def check_disjoint(self) -> bool:
        def keys(recs):
            return {(r.sample_id, r.modality, r.view_id) for r in recs}

        tr, va, te = keys(self.train), keys(self.val), keys(self.test)
        return not (tr & va) and not ((tr | va) & te)

    def to_json_dict(self) -> dict:
        def dump(recs):
            return [
                {
                    "sample_id": r.sample_id,
                    "class_id": r.class_id,
                    "modality": int(r.modality),
                    "view_id": r.view_id,
                }
                for r in recs
            ]

        return {
            "shots": self.shots,
            "seed": self.seed,
            "modality": int(self.modality),
            "class_ids": list(self.class_ids),
            "train": dump(self.train),
            "val": dump(self.val),
            "test": dump(self.test),
        }


def _test_partition(
    store: FeatureStore, modality: Modality, test_store: FeatureStore | None
) -> tuple[list[FeatureRecord], set[int]]:
    """Test records plus the sample_ids to exclude from train/val candidates.
    Ordering is canonical (class, then sample id), never store order."""
    if test_store is not None:
        test = test_store.select(modality=modality, view_id=0)
        flagged: set[int] = set()
    else:
        flagged = set(store.manifest.test_samples or [])
        test = [
            r
            for r in store.select(modality=modality, view_id=0)
            if r.sample_id in flagged
        ]
    test.sort(key=lambda r: (r.class_id, r.sample_id))
    return test, flagged


def sample_episode(
    store: FeatureStore,
    shots: int,
    seed: int,
    modality: Modality,
    test_store: FeatureStore | None = None,
    split_override: dict | None = None,
    classes: list[int] | None = None,
) -> EpisodeSplit:
    """Draw a deterministic n-shot episode.

    Test records come from the manifest's test partition (or a second
    store). A split_override dict {"train": [ids], "val": [ids],
    "test": [ids]} bypasses seeded sampling so externally published
    splits can be reproduced exactly.
    """
    class_ids = sorted(classes) if classes is not None else store.class_ids()
    test, excluded = _test_partition(store, modality, test_store)
    if classes is not None:
        keep = set(class_ids)
        test = [r for r in test if r.class_id in keep]

    if split_override is not None:
        return _episode_from_override(
            store, shots, seed, modality, class_ids, split_override, test
        )

    n_val = val_size(shots)
    rng = SplitMix64(mix(seed, int(modality)))
    train: list[FeatureRecord] = []
    val: list[FeatureRecord] = []
    for cid in class_ids:
        cands = [
            r
            for r in store.select(modality=modality, class_id=cid, view_id=0)
            if r.sample_id not in excluded
        ]
        if len(cands) < shots + n_val:
            name = store.manifest.classes.get(cid, str(cid))
            raise InsufficientSamples(
                f"class {cid} ({name}): {len(cands)} candidates, "
                f"need {shots}+{n_val}"
            )
        cands.sort(key=lambda r: r.sample_id)
        rng.shuffle(cands)
        train.extend(cands[:shots])
        val.extend(cands[shots : shots + n_val])

    return EpisodeSplit(train, val, test, shots, seed, class_ids, modality)


def _episode_from_override(
    store, shots, seed, modality, class_ids, override, default_test
):
    by_id = {
        r.sample_id: r for r in store.select(modality=modality, view_id=0)
    }

    def lookup(ids, part):
        recs = []
        for sid in ids:
            if sid not in by_id:
                raise InsufficientSamples(
                    f"split manifest {part} references unknown sample {sid}"
                )
            recs.append(by_id[sid])
        return recs

    train = lookup(override["train"], "train")
    val = lookup(override["val"], "val")
    test = lookup(override["test"], "test") if "test" in override else default_test
    return EpisodeSplit(train, val, test, shots, seed, class_ids, modality)


def load_split_manifest(path) -> dict:
    """Load an external split manifest; flat lists or per-class maps are
    both accepted and flattened."""
    raw = json.loads(Path(path).read_text())
    out: dict[str, list[int]] = {}
    for part in ("train", "val", "test"):
        if part not in raw:
            continue
        v = raw[part]
        if isinstance(v, dict):
            ids: list[int] = []
            for cid in sorted(v, key=int):
                ids.extend(int(s) for s in v[cid])
            out[part] = ids
        else:
            out[part] = [int(s) for s in v]
    return out


# -- audiovisual benchmark protocol -----------------------------------------

ESC19 = "ESC19"
ESC27 = "ESC27"


@dataclass
class EscMatching:
    """Sound-class to object-class name pairs for the audiovisual benchmark."""

    pairs: list[tuple[str, str]]
    variant: str

    @classmethod
    def load(cls, variant: str) -> "EscMatching":
        variant = variant.upper().replace("-", "")
        if variant in ("19", "ESC19"):
            variant = ESC19
        elif variant in ("27", "ESC27"):
            variant = ESC27
        else:
            raise ValueError(f"unknown matching variant {variant!r}")
        data = json.loads(
            resources.files("xmodal._data")
            .joinpath("esc_matchings.json")
            .read_text()
        )
        pairs = [tuple(p) for p in data["esc19"]]
        if variant == ESC27:
            pairs += [tuple(p) for p in data["esc27_extra"]]
        return cls(pairs=pairs, variant=variant)


def _retag(records: list[FeatureRecord], new_class: int) -> list[FeatureRecord]:
    return [
        FeatureRecord(r.sample_id, new_class, r.modality, r.view_id, r.vector)
        for r in records
    ]


def _resolve_pair_classes(store: FeatureStore, names: list[str], side: str):
    ids = []
    for name in names:
        cid = store.class_id_for_name(name)
        if cid is None:
            raise UnmatchedClass(
                f"{side} class {name!r} not found in manifest of "
                f"{store.manifest.dataset!r}"
            )
        ids.append(cid)
    return ids


def build_esc_episode(
    image_store: FeatureStore,
    audio_store: FeatureStore,
    matching: EscMatching,
    audio_fold: int,
    image_split: int,
    shots: int,
    base_seed: int = 0,
) -> tuple[EpisodeSplit, EpisodeSplit]:
    """One cell of the 5x5 audiovisual run matrix.

    The audio side uses the chosen fold, divided per class into half
    training / half validation candidates, and tests on the other four
    folds. The image side is a seeded split whose test records are the
    store's test partition. Records in both episodes are retagged to the
    shared pair index 0..K-1 so either side can serve as extra shots for
    the other.
    """
    esc_names = [p[0] for p in matching.pairs]
    img_names = [p[1] for p in matching.pairs]
    audio_cids = _resolve_pair_classes(audio_store, esc_names, "sound")
    image_cids = _resolve_pair_classes(image_store, img_names, "object")
    pair_ids = list(range(len(matching.pairs)))

    folds = audio_store.manifest.folds or {}
    if audio_fold not in set(folds.values()):
        raise MissingFold(f"fold {audio_fold} absent from audio manifest")

    n_val = val_size(shots)
    audio_seed = mix(base_seed, 2, audio_fold)
    rng = SplitMix64(audio_seed)
    a_train: list[FeatureRecord] = []
    a_val: list[FeatureRecord] = []
    a_test: list[FeatureRecord] = []
    for pid, cid in zip(pair_ids, audio_cids):
        recs = audio_store.select(modality=Modality.AUDIO, class_id=cid, view_id=0)
        in_fold = sorted(
            (r for r in recs if folds.get(r.sample_id) == audio_fold),
            key=lambda r: r.sample_id,
        )
        if not in_fold:
            raise MissingFold(
                f"fold {audio_fold} has no records for sound class "
                f"{esc_names[pid]!r}"
            )
        rng.shuffle(in_fold)
        half = len(in_fold) // 2
        train_pool, val_pool = in_fold[:half], in_fold[half:]
        if len(train_pool) < shots or len(val_pool) < n_val:
            raise InsufficientSamples(
                f"sound class {esc_names[pid]!r}: fold halves hold "
                f"{len(train_pool)}/{len(val_pool)}, need {shots}/{n_val}"
            )
        a_train.extend(_retag(train_pool[:shots], pid))
        a_val.extend(_retag(val_pool[:n_val], pid))
        held_out = [
            r
            for r in recs
            if r.sample_id in folds and folds[r.sample_id] != audio_fold
        ]
        a_test.extend(_retag(sorted(held_out, key=lambda r: r.sample_id), pid))
    audio_episode = EpisodeSplit(
        a_train, a_val, a_test, shots, audio_seed, pair_ids, Modality.AUDIO
    )

    image_seed = mix(base_seed, 0, image_split)
    raw = sample_episode(
        image_store,
        shots,
        image_seed,
        Modality.IMAGE,
        classes=image_cids,
    )
    remap = {cid: pid for pid, cid in zip(pair_ids, image_cids)}

    def retag_all(recs):
        return [
            FeatureRecord(r.sample_id, remap[r.class_id], r.modality, r.view_id, r.vector)
            for r in recs
        ]

    image_episode = EpisodeSplit(
        retag_all(raw.train),
        retag_all(raw.val),
        retag_all(raw.test),
        shots,
        image_seed,
        pair_ids,
        Modality.IMAGE,
    )
    return image_episode, audio_episode


# -- cross-modal train-set assembly ------------------------------------------

def assemble_crossmodal_trainset(
    episode: EpisodeSplit,
    extra_stores: list[tuple[FeatureStore, Modality]] | None = None,
    views_per_class: dict[Modality, int] | None = None,
) -> list[tuple[np.ndarray, int, Modality]]:
    """Episode train shots plus one extra shot per (class, modality, view).

    Each extra store contributes, for every episode class and every view
    id it carries for that class, exactly one record; when several
    records share a (class, view) slot the pick is seeded from the
    episode. Vectors come out unit-normalized in float64. With one text
    view this is the (n+1)-shot conversion; with no extra stores the
    output is the uni-modal baseline.
    """
    samples: list[tuple[np.ndarray, int, Modality]] = [
        (unit_vector(r), r.class_id, r.modality) for r in episode.train
    ]
    for store, modality in extra_stores or []:
        rng = SplitMix64(mix(episode.seed, 0xE7, int(modality)))
        expected = (views_per_class or {}).get(modality)
        for cid in episode.class_ids:
            recs = store.select(modality=modality, class_id=cid)
            if not recs:
                raise MissingClassInModality(
                    f"class {cid} has no {modality.name.lower()} record"
                )
            by_view: dict[int, list[FeatureRecord]] = {}
            for r in recs:
                by_view.setdefault(r.view_id, []).append(r)
            if expected is not None and len(by_view) != expected:
                raise MissingClassInModality(
                    f"class {cid}: {len(by_view)} {modality.name.lower()} "
                    f"views, expected {expected}"
                )
            for view in sorted(by_view):
                cands = sorted(by_view[view], key=lambda r: r.sample_id)
                pick = cands[rng.bounded(len(cands))] if len(cands) > 1 else cands[0]
                samples.append((unit_vector(pick), cid, modality))
    return samples
