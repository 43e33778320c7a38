"""Writer for the XMFS feature-store wire format.

Self-contained on purpose: the byte layout and manifest schema are the
contract between this exporter and downstream consumers, so this module
implements them directly rather than importing a consumer library.

Layout (little-endian): magic "XMFS" | version u32 = 1 | dimension u32 |
record_count u64 | records, each sample_id u32 | modality u8 |
view_id u16 | class_id u32 | D x f32. Sibling manifest
``<name>.manifest.json``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"XMFS"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_REC_PREFIX = struct.Struct("<IBHI")

MODALITY_CODES = {"image": 0, "text": 1, "audio": 2}


@dataclass
class ExportRecord:
    sample_id: int
    class_id: int
    modality: str  # "image" | "text" | "audio"
    view_id: int
    vector: np.ndarray


@dataclass
class ExportManifest:
    dataset: str
    classes: dict[int, str]
    normalized: bool = False
    templates: list[str] | None = None
    test_samples: list[int] | None = None
    export_info: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out: dict = {
            "dataset": self.dataset,
            "classes": {str(k): v for k, v in sorted(self.classes.items())},
            "normalized": self.normalized,
        }
        if self.templates is not None:
            out["templates"] = list(self.templates)
        if self.test_samples is not None:
            out["test_samples"] = sorted(self.test_samples)
        if self.export_info:
            out["export_info"] = self.export_info
        return out


def write_xmfs(
    path, dimension: int, records: list[ExportRecord], manifest: ExportManifest
) -> None:
    p = Path(path)
    for rec in records:
        if rec.vector.shape != (dimension,):
            raise ValueError(
                f"record {rec.sample_id}: vector length {rec.vector.shape} "
                f"!= dimension {dimension}"
            )
        if not np.all(np.isfinite(rec.vector)):
            raise ValueError(f"record {rec.sample_id}: non-finite coordinate")
    with open(p, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dimension, len(records)))
        for rec in records:
            fh.write(
                _REC_PREFIX.pack(
                    rec.sample_id,
                    MODALITY_CODES[rec.modality],
                    rec.view_id,
                    rec.class_id,
                )
            )
            fh.write(np.ascontiguousarray(rec.vector, dtype="<f4").tobytes())
    manifest_file = p.with_name(p.stem + ".manifest.json")
    manifest_file.write_text(
        json.dumps(manifest.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
