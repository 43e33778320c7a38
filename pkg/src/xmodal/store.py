"""Feature stores: modality-tagged embedding vectors and their on-disk format.

Binary layout (XMFS, all little-endian)::

    magic   "XMFS"      4 bytes
    version u32         currently 1
    dim     u32         embedding width D
    count   u64         number of records
    records x count, each:
      sample_id u32 | modality u8 | view_id u16 | class_id u32 | D x f32

A sibling JSON manifest ``<name>.manifest.json`` carries class names and
other human-editable metadata:

    dataset      str
    classes      map class_id -> name (keys are stringified ints)
    normalized   bool, whether vectors were already unit-norm when written
    templates    optional list of template strings with a "{cls}" slot
    folds        optional map sample_id -> fold number (audio protocols)
    test_samples optional list of sample_ids forming the test partition
"""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    CorruptRecord,
    DimensionMismatch,
    IoError,
    NonFiniteValue,
    UnsupportedVersion,
    ZeroVector,
)

MAGIC = b"XMFS"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_REC_PREFIX = struct.Struct("<IBHI")


class Modality(enum.IntEnum):
    IMAGE = 0
    TEXT = 1
    AUDIO = 2


@dataclass(eq=False)
class FeatureRecord:
    """One embedding vector. view_id 0 is the canonical view; higher ids are
    augmented views (flip, crop index, or template index for text)."""

    sample_id: int
    class_id: int
    modality: Modality
    view_id: int
    vector: np.ndarray  # float32, shape (D,)

    def key(self) -> tuple:
        return (self.class_id, self.modality, self.sample_id, self.view_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.key() == other.key()
            and self.vector.tobytes() == other.vector.tobytes()
        )


_MANIFEST_KEYS = ("dataset", "classes", "normalized", "templates", "folds",
                  "test_samples")


@dataclass
class StoreManifest:
    dataset: str = "unnamed"
    classes: dict[int, str] = field(default_factory=dict)
    normalized: bool = False
    templates: list[str] | None = None
    folds: dict[int, int] | None = None
    test_samples: list[int] | None = None
    # unknown keys survive a read/write cycle (the manifest is
    # human-editable; exporters record provenance here)
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out: dict = {
            "dataset": self.dataset,
            "classes": {str(k): v for k, v in sorted(self.classes.items())},
            "normalized": self.normalized,
        }
        if self.templates is not None:
            out["templates"] = list(self.templates)
        if self.folds is not None:
            out["folds"] = {str(k): v for k, v in sorted(self.folds.items())}
        if self.test_samples is not None:
            out["test_samples"] = sorted(self.test_samples)
        out.update(self.extra)
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "StoreManifest":
        return cls(
            dataset=d.get("dataset", "unnamed"),
            classes={int(k): v for k, v in d.get("classes", {}).items()},
            normalized=bool(d.get("normalized", False)),
            templates=d.get("templates"),
            folds={int(k): int(v) for k, v in d["folds"].items()}
            if "folds" in d
            else None,
            test_samples=[int(s) for s in d["test_samples"]]
            if "test_samples" in d
            else None,
            extra={k: v for k, v in d.items() if k not in _MANIFEST_KEYS},
        )


@dataclass
class FeatureStore:
    """Immutable-after-load collection of records sharing one dimension."""

    dimension: int
    records: list[FeatureRecord]
    manifest: StoreManifest

    def validate(self) -> None:
        seen: set[tuple] = set()
        for rec in self.records:
            if rec.vector.shape != (self.dimension,):
                raise DimensionMismatch(
                    f"record {rec.sample_id}: vector has length "
                    f"{rec.vector.shape}, store dimension is {self.dimension}"
                )
            if not np.all(np.isfinite(rec.vector)):
                raise NonFiniteValue(f"record {rec.sample_id} contains NaN/Inf")
            k = rec.key()
            if k in seen:
                raise CorruptRecord(f"duplicate record key {k}")
            seen.add(k)
            if rec.class_id not in self.manifest.classes:
                raise CorruptRecord(
                    f"class_id {rec.class_id} has no name in the manifest"
                )

    def class_ids(self) -> list[int]:
        return sorted({rec.class_id for rec in self.records})

    def select(
        self,
        modality: Modality | None = None,
        class_id: int | None = None,
        view_id: int | None = None,
    ) -> list[FeatureRecord]:
        out = []
        for rec in self.records:
            if modality is not None and rec.modality != modality:
                continue
            if class_id is not None and rec.class_id != class_id:
                continue
            if view_id is not None and rec.view_id != view_id:
                continue
            out.append(rec)
        return out

    def modalities(self) -> list[Modality]:
        return sorted({rec.modality for rec in self.records})

    def class_id_for_name(self, name: str) -> int | None:
        for cid, cname in self.manifest.classes.items():
            if cname == name:
                return cid
        return None

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureStore):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.records == other.records
            and self.manifest == other.manifest
        )


def normalize(vector) -> np.ndarray:
    """L2-normalize to unit length, in float64.

    Raises ZeroVector when the norm is exactly zero or underflows; zero
    vectors indicate exporter bugs and are never silently skipped.
    """
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def manifest_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".manifest.json")


def write_store(store: FeatureStore, path) -> None:
    """Write the binary body and the sibling JSON manifest."""
    store.validate()
    p = Path(path)
    try:
        with open(p, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, store.dimension, len(store.records)))
            for rec in store.records:
                fh.write(
                    _REC_PREFIX.pack(
                        rec.sample_id, int(rec.modality), rec.view_id, rec.class_id
                    )
                )
                fh.write(np.ascontiguousarray(rec.vector, dtype="<f4").tobytes())
        manifest_path(p).write_text(
            json.dumps(store.manifest.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise IoError(f"cannot write store {p}: {exc}") from exc


def read_store(path) -> FeatureStore:
    """Read and fully validate a store; malformed input raises rather than
    truncating silently."""
    p = Path(path)
    try:
        blob = p.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read store {p}: {exc}") from exc

    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise BadMagic(f"{p} does not start with {MAGIC!r}")
    _, version, dim, count = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"{p}: version {version}, expected {VERSION}")
    rec_size = _REC_PREFIX.size + 4 * dim
    body = len(blob) - _HEADER.size
    if body != count * rec_size:
        raise CorruptRecord(
            f"{p}: header declares {count} records "
            f"({count * rec_size} bytes) but body holds {body} bytes"
        )

    mp = manifest_path(p)
    try:
        manifest = StoreManifest.from_json_dict(json.loads(mp.read_text()))
    except OSError as exc:
        raise IoError(f"missing manifest {mp}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise IoError(f"malformed manifest {mp}: {exc}") from exc

    records = []
    off = _HEADER.size
    for _ in range(count):
        sample_id, modality, view_id, class_id = _REC_PREFIX.unpack_from(blob, off)
        off += _REC_PREFIX.size
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).copy()
        off += 4 * dim
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValue(f"{p}: record {sample_id} contains NaN/Inf")
        try:
            mod = Modality(modality)
        except ValueError as exc:
            raise CorruptRecord(f"{p}: unknown modality byte {modality}") from exc
        records.append(FeatureRecord(sample_id, class_id, mod, view_id, vec))

    store = FeatureStore(dimension=dim, records=records, manifest=manifest)
    store.validate()
    return store


def store_from_records(
    records: list[FeatureRecord], dimension: int, manifest: StoreManifest
) -> FeatureStore:
    """In-memory store over existing records (e.g. an episode's train split
    repurposed as an extra-shot pool)."""
    return FeatureStore(dimension=dimension, records=list(records), manifest=manifest)


def unit_vector(rec: FeatureRecord) -> np.ndarray:
    """Float64 unit-norm view of a record's vector; the pipeline normalizes
    at load time regardless of the manifest flag."""
    return normalize(rec.vector)
