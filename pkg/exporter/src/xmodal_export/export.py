"""Export pipeline: read an input listing, run the encoder per view,
write the store.

View policies (image modality): ``center`` keeps the square center crop
only (view 0); ``flip`` adds the mirrored image as view 1;
``crops:k`` adds k seeded random crops as views 1..k. The crop
generator seed goes into the manifest so an export is reproducible from
its own metadata. No normalization is applied unless asked for: the
manifest's ``normalized`` flag always states what actually happened.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UnreadableInput
from .models import Encoder
from .xmfs import ExportManifest, ExportRecord, write_xmfs


@dataclass
class InputRow:
    class_id: int
    path: str | None = None
    class_name: str | None = None
    split: str = "train"  # "train" | "test"; test rows get flagged in the manifest


def read_listing(path, text_mode: bool) -> list[InputRow]:
    """CSV with header. Image/audio mode: path,class_id[,class_name][,split];
    text mode: class_name,class_id. A split value of 'test' marks the row
    for the store's held-out test partition."""
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                if text_mode:
                    if "class_name" not in rec or "class_id" not in rec:
                        raise UnreadableInput(
                            f"{path}: text listing needs class_name,class_id"
                        )
                    rows.append(
                        InputRow(int(rec["class_id"]),
                                 class_name=rec["class_name"])
                    )
                else:
                    if "path" not in rec or "class_id" not in rec:
                        raise UnreadableInput(
                            f"{path}: listing needs path,class_id"
                        )
                    split = (rec.get("split") or "train").strip()
                    if split not in ("train", "test"):
                        raise UnreadableInput(
                            f"{path}: split must be train or test, got {split!r}"
                        )
                    rows.append(
                        InputRow(int(rec["class_id"]), path=rec["path"],
                                 class_name=rec.get("class_name"), split=split)
                    )
    except OSError as exc:
        raise UnreadableInput(f"cannot read listing {path}: {exc}") from exc
    if not rows:
        raise UnreadableInput(f"listing {path} is empty")
    return rows


def parse_views(spec: str) -> tuple[str, int]:
    """'center' -> 0 extra views, 'flip' -> 1, 'crops:k' -> k."""
    if spec == "center":
        return "center", 0
    if spec == "flip":
        return "flip", 1
    if spec.startswith("crops:"):
        k = int(spec.split(":", 1)[1])
        if k < 1:
            raise ValueError("crops:k needs k >= 1")
        return "crops", k
    raise ValueError(f"unknown view policy {spec!r}")


def _center_crop(image: Image.Image) -> Image.Image:
    w, h = image.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    return image.crop((left, top, left + side, top + side))


def _random_crop(image: Image.Image, rng: np.random.Generator) -> Image.Image:
    w, h = image.size
    side = int(min(w, h) * rng.uniform(0.6, 1.0))
    side = max(1, side)
    left = int(rng.integers(0, w - side + 1))
    top = int(rng.integers(0, h - side + 1))
    return image.crop((left, top, left + side, top + side))


def _load_image(path) -> Image.Image:
    try:
        with Image.open(path) as im:
            return im.convert("RGB")
    except (OSError, UnidentifiedImageError) as exc:
        raise UnreadableInput(f"cannot decode image {path}: {exc}") from exc


@dataclass
class ExportJob:
    modality: str  # "image" | "text" | "audio"
    model: Encoder
    rows: list[InputRow]
    out_path: Path
    views: str = "center"
    templates: list[str] | None = None  # text mode
    normalize: bool = False
    seed: int = 0
    dataset: str = "export"
    extra_info: dict = field(default_factory=dict)


def _maybe_normalize(matrix: np.ndarray, enabled: bool) -> np.ndarray:
    if not enabled:
        return matrix
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise UnreadableInput("cannot normalize a zero embedding")
    return (matrix / norms).astype(np.float32)


def export_features(job: ExportJob) -> int:
    """Run the job and write the store + manifest; returns record count."""
    if job.modality == "text":
        records, classes, templates = _export_text(job)
    elif job.modality == "image":
        records, classes, templates = _export_images(job)
    elif job.modality == "audio":
        records, classes, templates = _export_audio(job)
    else:
        raise ValueError(f"unknown modality {job.modality!r}")

    test_samples = [
        sid for sid, row in enumerate(job.rows) if row.split == "test"
    ] if job.modality != "text" else []
    manifest = ExportManifest(
        dataset=job.dataset,
        classes=classes,
        normalized=job.normalize,
        templates=templates,
        test_samples=test_samples or None,
        export_info={
            "model": job.model.name,
            "modality": job.modality,
            "views": job.views,
            "seed": job.seed,
            **job.extra_info,
        },
    )
    write_xmfs(job.out_path, job.model.dimension, records, manifest)
    return len(records)


def _export_text(job: ExportJob):
    templates = job.templates or ["{cls}"]
    for t in templates:
        if t.count("{cls}") != 1:
            raise UnreadableInput(f"template {t!r} needs exactly one {{cls}}")
    classes = {}
    texts, keys = [], []
    for row in job.rows:
        if row.class_name is None:
            raise UnreadableInput("text rows need class_name")
        classes[row.class_id] = row.class_name
        for view, template in enumerate(templates):
            texts.append(template.replace("{cls}", row.class_name))
            keys.append((row.class_id, view))
    feats = _maybe_normalize(job.model.encode_text_batch(texts), job.normalize)
    records = [
        ExportRecord(sample_id=cid, class_id=cid, modality="text",
                     view_id=view, vector=feats[i])
        for i, (cid, view) in enumerate(keys)
    ]
    return records, classes, templates


def _export_images(job: ExportJob):
    policy, extra = parse_views(job.views)
    rng = np.random.default_rng(job.seed)
    classes = {}
    images, keys = [], []
    for sid, row in enumerate(job.rows):
        classes.setdefault(row.class_id,
                           row.class_name or f"class_{row.class_id}")
        base = _load_image(row.path)
        images.append(_center_crop(base))
        keys.append((sid, row.class_id, 0))
        if policy == "flip":
            images.append(_center_crop(base).transpose(Image.FLIP_LEFT_RIGHT))
            keys.append((sid, row.class_id, 1))
        elif policy == "crops":
            for view in range(1, extra + 1):
                images.append(_random_crop(base, rng))
                keys.append((sid, row.class_id, view))
    feats = _maybe_normalize(job.model.encode_image_batch(images), job.normalize)
    records = [
        ExportRecord(sample_id=sid, class_id=cid, modality="image",
                     view_id=view, vector=feats[i])
        for i, (sid, cid, view) in enumerate(keys)
    ]
    return records, classes, None


def _export_audio(job: ExportJob):
    classes = {}
    paths, keys = [], []
    for sid, row in enumerate(job.rows):
        classes.setdefault(row.class_id,
                           row.class_name or f"class_{row.class_id}")
        paths.append(row.path)
        keys.append((sid, row.class_id))
    feats = _maybe_normalize(job.model.encode_audio_batch(paths), job.normalize)
    records = [
        ExportRecord(sample_id=sid, class_id=cid, modality="audio",
                     view_id=0, vector=feats[i])
        for i, (sid, cid) in enumerate(keys)
    ]
    return records, classes, None
