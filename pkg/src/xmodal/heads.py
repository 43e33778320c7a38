"""Classifier heads over the shared embedding space.

The linear head is a C x D weight matrix whose rows live in the same
space as the features; logits are the inner products amplified by a
fixed logit scale (inverse softmax temperature, 100 by default). The
optional adapter is a residual two-layer bottleneck MLP applied to
features before the head. Weight rows are initialized from normalized
class text embeddings but are never re-normalized during training.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    ClassOrderMismatch,
    DimensionMismatch,
    IoError,
    MissingClassText,
    NonFiniteValue,
    ScaleMismatch,
    ShapeMismatch,
)
from .rng import SplitMix64, mix
from .store import FeatureStore, Modality, normalize

DEFAULT_LOGIT_SCALE = 100.0
DEFAULT_RESIDUAL_RATIO = 0.2


@dataclass
class ClassifierState:
    weights: np.ndarray  # (C, D) float64, row y = class weight w_y
    class_ids: list[int]
    logit_scale: float = DEFAULT_LOGIT_SCALE

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.class_ids):
            raise ShapeMismatch(
                f"weights {self.weights.shape} vs {len(self.class_ids)} classes"
            )
        if not np.all(np.isfinite(self.weights)):
            raise NonFiniteValue("classifier weights contain NaN/Inf")
        if not self.logit_scale > 0:
            raise ValueError("logit scale must be positive")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ClassifierState":
        return ClassifierState(
            self.weights.copy(), list(self.class_ids), self.logit_scale
        )

    def row_index(self) -> dict[int, int]:
        return {cid: i for i, cid in enumerate(self.class_ids)}


def hidden_width(dimension: int) -> int:
    """Bottleneck width: a quarter of D, rounded up when D % 4 != 0."""
    return max(1, math.ceil(dimension / 4))


@dataclass
class AdapterState:
    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (D, H)
    b2: np.ndarray  # (D,)
    residual_ratio: float = DEFAULT_RESIDUAL_RATIO

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValue(f"adapter {name} contains NaN/Inf")
        if not 0.0 <= self.residual_ratio <= 1.0:
            raise ValueError("residual ratio must lie in [0, 1]")
        h, d = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (d, h) or self.b2.shape != (d,):
            raise ShapeMismatch("adapter tensor shapes are inconsistent")

    @property
    def dimension(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "AdapterState":
        return AdapterState(
            self.w1.copy(),
            self.b1.copy(),
            self.w2.copy(),
            self.b2.copy(),
            self.residual_ratio,
        )

    @classmethod
    def zeros(cls, dimension: int, residual_ratio: float = DEFAULT_RESIDUAL_RATIO):
        h = hidden_width(dimension)
        return cls(
            np.zeros((h, dimension)),
            np.zeros(h),
            np.zeros((dimension, h)),
            np.zeros(dimension),
            residual_ratio,
        )

    @classmethod
    def seeded_init(
        cls,
        dimension: int,
        seed: int,
        residual_ratio: float = DEFAULT_RESIDUAL_RATIO,
    ) -> "AdapterState":
        """Gaussian fan-in init through the deterministic generator; biases
        start at zero."""
        h = hidden_width(dimension)
        rng = SplitMix64(mix(seed, 0xADA))
        w1 = np.array(
            [rng.gauss() for _ in range(h * dimension)], dtype=np.float64
        ).reshape(h, dimension) / math.sqrt(dimension)
        w2 = np.array(
            [rng.gauss() for _ in range(dimension * h)], dtype=np.float64
        ).reshape(dimension, h) / math.sqrt(h)
        return cls(w1, np.zeros(h), w2, np.zeros(dimension), residual_ratio)


def init_from_text(
    text_store: FeatureStore,
    class_ids: list[int],
    view_ids: list[int] | None = None,
    logit_scale: float = DEFAULT_LOGIT_SCALE,
) -> ClassifierState:
    """Text-initialized head: each row is the re-normalized mean of the
    class's normalized text views (all views, or the given template ids)."""
    rows = []
    for cid in class_ids:
        recs = text_store.select(modality=Modality.TEXT, class_id=cid)
        if view_ids is not None:
            wanted = set(view_ids)
            recs = [r for r in recs if r.view_id in wanted]
        if not recs:
            raise MissingClassText(f"no text view for class {cid}")
        vecs = np.stack([normalize(r.vector) for r in recs])
        rows.append(normalize(vecs.mean(axis=0)))
    return ClassifierState(np.stack(rows), list(class_ids), logit_scale)


def random_init(
    dimension: int,
    class_ids: list[int],
    seed: int,
    logit_scale: float = DEFAULT_LOGIT_SCALE,
) -> ClassifierState:
    """Seeded Gaussian rows scaled by 1/sqrt(D) (ablation baseline)."""
    rng = SplitMix64(mix(seed, 0x1717))
    w = np.array(
        [rng.gauss() for _ in range(len(class_ids) * dimension)], dtype=np.float64
    ).reshape(len(class_ids), dimension) / math.sqrt(dimension)
    return ClassifierState(w, list(class_ids), logit_scale)


def scores(state: ClassifierState, features: np.ndarray) -> np.ndarray:
    """Unscaled inner products, (B, C). Accepts one vector or a batch."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if f.shape[1] != state.dimension:
        raise DimensionMismatch(
            f"feature dimension {f.shape[1]} vs classifier {state.dimension}"
        )
    return f @ state.weights.T


def predict(state: ClassifierState, feature: np.ndarray) -> int:
    """Argmax class for a single feature; ties go to the lowest row index."""
    row = int(np.argmax(scores(state, feature)[0]))
    return state.class_ids[row]


def predict_rows(state: ClassifierState, features: np.ndarray) -> np.ndarray:
    """Row indices (not class ids) of the argmax for a feature batch."""
    return np.argmax(scores(state, features), axis=1)


def adapter_transform(adapter: AdapterState, features: np.ndarray) -> np.ndarray:
    """Residual bottleneck output before re-normalization:
    rho * relu(W2 relu(W1 f + b1) + b2) + (1 - rho) * f."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if f.shape[1] != adapter.dimension:
        raise DimensionMismatch(
            f"feature dimension {f.shape[1]} vs adapter {adapter.dimension}"
        )
    h = np.maximum(f @ adapter.w1.T + adapter.b1, 0.0)
    r = np.maximum(h @ adapter.w2.T + adapter.b2, 0.0)
    rho = adapter.residual_ratio
    return rho * r + (1.0 - rho) * f


def adapter_forward(adapter: AdapterState, features: np.ndarray) -> np.ndarray:
    """Adapter output re-normalized to unit length, keeping the logit-scale
    semantics of the normalize-then-classify pipeline."""
    out = adapter_transform(adapter, features)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NonFiniteValue("adapter produced a zero vector")
    squeezed = out / norms
    return squeezed if np.asarray(features).ndim > 1 else squeezed[0]


def _check_compatible(a: ClassifierState, b: ClassifierState) -> None:
    if a.weights.shape != b.weights.shape:
        raise ShapeMismatch(f"{a.weights.shape} vs {b.weights.shape}")
    if a.class_ids != b.class_ids:
        raise ClassOrderMismatch("class id orderings differ")
    if a.logit_scale != b.logit_scale:
        raise ScaleMismatch(f"{a.logit_scale} vs {b.logit_scale}")


def wise_ft(
    learned: ClassifierState, zeroshot: ClassifierState, alpha: float
) -> ClassifierState:
    """Weight-space ensemble alpha * zeroshot + (1 - alpha) * learned.

    The endpoints return exact copies so alpha in {0, 1} is bit-equal to
    the corresponding input.
    """
    _check_compatible(learned, zeroshot)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return learned.copy()
    if alpha == 1.0:
        return zeroshot.copy()
    w = alpha * zeroshot.weights + (1.0 - alpha) * learned.weights
    return ClassifierState(w, list(learned.class_ids), learned.logit_scale)


def representer_residual(
    trained: ClassifierState,
    init: ClassifierState,
    train_features: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Decompose the learned weight change over the training features.

    Returns (residuals, coefficients): per class y, the norm of the
    component of w_y - w_y_init orthogonal to span(train_features), and
    the least-squares coefficients alpha expressing the in-span part as
    a combination of the features (rows of the coefficient matrix index
    training samples, columns index classes).
    """
    _check_compatible(trained, init)
    feats = np.atleast_2d(np.asarray(train_features, dtype=np.float64))
    if feats.shape[0] < 1:
        raise ShapeMismatch("need at least one training feature")
    if feats.shape[1] != trained.dimension:
        raise DimensionMismatch(
            f"feature dimension {feats.shape[1]} vs classifier {trained.dimension}"
        )
    diff = trained.weights - init.weights  # (C, D)

    _, svals, vt = np.linalg.svd(feats, full_matrices=False)
    tol = (svals[0] if svals.size else 0.0) * max(feats.shape) * np.finfo(float).eps
    basis = vt[svals > tol]  # orthonormal rows spanning the feature row space
    in_span = (diff @ basis.T) @ basis if basis.size else np.zeros_like(diff)
    residuals = np.linalg.norm(diff - in_span, axis=1)

    coeffs, *_ = np.linalg.lstsq(feats.T, diff.T, rcond=None)
    return residuals, coeffs


# -- checkpoint serialization -------------------------------------------------

CKPT_MAGIC = b"XMCK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIBII")


def save_checkpoint(path, state: ClassifierState, adapter: AdapterState | None = None):
    """Versioned little-endian binary checkpoint plus a JSON sidecar header."""
    p = Path(path)
    flags = 1 if adapter is not None else 0
    try:
        with open(p, "wb") as fh:
            fh.write(
                _CKPT_HEADER.pack(
                    CKPT_MAGIC, CKPT_VERSION, flags, state.num_classes, state.dimension
                )
            )
            fh.write(np.ascontiguousarray(state.weights, dtype="<f8").tobytes())
            if adapter is not None:
                for arr in (adapter.w1, adapter.b1, adapter.w2, adapter.b2):
                    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        header = {
            "version": CKPT_VERSION,
            "class_ids": list(state.class_ids),
            "logit_scale": state.logit_scale,
            "has_adapter": adapter is not None,
        }
        if adapter is not None:
            header["residual_ratio"] = adapter.residual_ratio
            header["hidden"] = adapter.hidden
        p.with_suffix(p.suffix + ".json").write_text(
            json.dumps(header, indent=2, sort_keys=True) + "\n"
        )
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {p}: {exc}") from exc


def load_checkpoint(path) -> tuple[ClassifierState, AdapterState | None]:
    p = Path(path)
    try:
        blob = p.read_bytes()
        header = json.loads(p.with_suffix(p.suffix + ".json").read_text())
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {p}: {exc}") from exc
    magic, version, flags, c, d = _CKPT_HEADER.unpack_from(blob, 0)
    if magic != CKPT_MAGIC:
        raise BadMagic(f"{p} is not a checkpoint")
    if version != CKPT_VERSION:
        raise IoError(f"{p}: unsupported checkpoint version {version}")
    off = _CKPT_HEADER.size

    def take(shape):
        nonlocal off
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
        off += 8 * n
        return arr.reshape(shape)

    weights = take((c, d))
    state = ClassifierState(weights, list(header["class_ids"]), header["logit_scale"])
    adapter = None
    if flags & 1:
        h = int(header["hidden"])
        adapter = AdapterState(
            take((h, d)),
            take((h,)),
            take((d, h)),
            take((d,)),
            float(header["residual_ratio"]),
        )
    return state, adapter
