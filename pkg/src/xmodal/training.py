"""Cross-modal training loop.

One run is: draw half-and-half modality batches from shuffled pool
cycles, take temperature-scaled cross-entropy steps under a linear
warmup + cosine annealing schedule, evaluate top-1 accuracy on the
few-shot validation set every eval_every iterations, and return the
best checkpoint seen (earliest iteration on ties), not the final one.
Runs are single-threaded and bit-deterministic for a fixed
configuration.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyGrid,
    EmptyTrainset,
    UnknownLabel,
)
from .heads import (
    AdapterState,
    ClassifierState,
    adapter_forward,
    predict_rows,
)
from .rng import SplitMix64, mix
from .store import Modality

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    optimizer: str = "adamw"  # "adamw" | "sgd"
    lr0: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 8
    max_iters: int = 12800
    warmup_iters: int = 50
    warmup_start_lr: float = 1e-5
    eval_every: int = 100
    logit_scale: float = 100.0
    seed: int = 0
    adapter_enabled: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adamw", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.max_iters > 0 and not self.warmup_iters < self.max_iters:
            raise ValueError("warmup_iters must be < max_iters")
        if self.lr0 <= 0 or self.warmup_start_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("batch_size and eval_every must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls(**json.loads(text))


def lr_at(config: TrainConfig, t: int) -> float:
    """Learning rate at iteration t: linear from warmup_start_lr to lr0
    over the warmup, then cosine annealing down to zero at max_iters."""
    if not 0 <= t <= config.max_iters:
        raise ValueError(f"iteration {t} outside [0, {config.max_iters}]")
    w = config.warmup_iters
    if t < w:
        return config.warmup_start_lr + (config.lr0 - config.warmup_start_lr) * t / w
    span = config.max_iters - w
    if span == 0:
        return config.lr0
    return config.lr0 * 0.5 * (1.0 + math.cos(math.pi * ((t - w) / span)))


# -- loss and gradients ------------------------------------------------------

def _label_rows(state: ClassifierState, labels: np.ndarray) -> np.ndarray:
    index = state.row_index()
    try:
        return np.array([index[int(y)] for y in labels], dtype=np.intp)
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]} not among classifier classes")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ce_loss(
    state: ClassifierState,
    features: np.ndarray,
    labels: np.ndarray,
    adapter: AdapterState | None = None,
) -> float:
    """Mean temperature-scaled cross-entropy: -log softmax(s * W f)[y]."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if f.shape[1] != state.dimension:
        raise DimensionMismatch(
            f"feature dimension {f.shape[1]} vs classifier {state.dimension}"
        )
    if adapter is not None:
        f = np.atleast_2d(adapter_forward(adapter, f))
    rows = _label_rows(state, np.asarray(labels))
    logits = state.logit_scale * (f @ state.weights.T)
    logp = _log_softmax(logits)
    return float(-np.mean(logp[np.arange(len(rows)), rows]))


@dataclass
class Gradients:
    weights: np.ndarray
    adapter: dict[str, np.ndarray] | None = None


def loss_and_grad(
    state: ClassifierState,
    features: np.ndarray,
    labels: np.ndarray,
    adapter: AdapterState | None = None,
) -> tuple[float, Gradients]:
    """Loss plus analytic gradients for the head (and adapter if given).

    Head gradient row y' is the batch mean of (p_y' - 1[y'=y]) * s * f;
    adapter gradients chain through the residual MLP and the output
    re-normalization.
    """
    f_in = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if f_in.shape[1] != state.dimension:
        raise DimensionMismatch(
            f"feature dimension {f_in.shape[1]} vs classifier {state.dimension}"
        )
    rows = _label_rows(state, np.asarray(labels))
    b = f_in.shape[0]

    if adapter is not None:
        z1 = f_in @ adapter.w1.T + adapter.b1
        h = np.maximum(z1, 0.0)
        z2 = h @ adapter.w2.T + adapter.b2
        r = np.maximum(z2, 0.0)
        rho = adapter.residual_ratio
        a = rho * r + (1.0 - rho) * f_in
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        f_out = a / norms
    else:
        f_out = f_in

    s = state.logit_scale
    logits = s * (f_out @ state.weights.T)
    logp = _log_softmax(logits)
    loss = float(-np.mean(logp[np.arange(b), rows]))

    p = np.exp(logp)
    p[np.arange(b), rows] -= 1.0
    g = p / b  # (B, C)
    grad_w = s * (g.T @ f_out)

    if adapter is None:
        return loss, Gradients(weights=grad_w)

    d_fout = s * (g @ state.weights)  # (B, D)
    # d(a / |a|) = (d_fout - (d_fout . f_out) f_out) / |a|
    inner = np.sum(d_fout * f_out, axis=1, keepdims=True)
    d_a = (d_fout - inner * f_out) / norms
    d_r = rho * d_a
    d_z2 = d_r * (z2 > 0.0)
    grad_w2 = d_z2.T @ h
    grad_b2 = d_z2.sum(axis=0)
    d_h = d_z2 @ adapter.w2
    d_z1 = d_h * (z1 > 0.0)
    grad_w1 = d_z1.T @ f_in
    grad_b1 = d_z1.sum(axis=0)
    return loss, Gradients(
        weights=grad_w,
        adapter={"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2},
    )


# -- batching ----------------------------------------------------------------

class _PoolCycle:
    """Shuffled cycle over a fixed index pool, reshuffled each epoch."""

    def __init__(self, indices: list[int], seed: int):
        self._indices = list(indices)
        self._rng = SplitMix64(seed)
        self._order: list[int] = []
        self._pos = 0

    def draw(self, k: int) -> list[int]:
        out = []
        while len(out) < k:
            if self._pos >= len(self._order):
                self._order = list(self._indices)
                self._rng.shuffle(self._order)
                self._pos = 0
            take = min(k - len(out), len(self._order) - self._pos)
            out.extend(self._order[self._pos : self._pos + take])
            self._pos += take
        return out


def batch_plan(
    batch_size: int, modalities: list[Modality], primary: Modality
) -> dict[Modality, int]:
    """Per-batch draw counts: ceil(B/2) from the primary pool, floor(B/2)
    split evenly over auxiliary pools with the remainder going to the
    earlier modality enum."""
    plan = {}
    aux = sorted(m for m in modalities if m != primary)
    if not aux:
        return {primary: batch_size}
    plan[primary] = (batch_size + 1) // 2
    aux_total = batch_size // 2
    base, rem = divmod(aux_total, len(aux))
    for i, m in enumerate(aux):
        plan[m] = base + (1 if i < rem else 0)
    return plan


def infer_primary(modalities: list[Modality]) -> Modality:
    for m in (Modality.IMAGE, Modality.AUDIO, Modality.TEXT):
        if m in modalities:
            return m
    raise EmptyTrainset("no modalities present")


def make_batches(
    trainset: list[tuple[np.ndarray, int, Modality]],
    batch_size: int,
    seed: int,
    primary: Modality | None = None,
):
    """Endless iterator of index batches into trainset.

    With two or more modalities each batch is half primary samples and
    half auxiliary ones; a single-modality trainset yields plain
    shuffled batches. Pools are independently seeded shuffled cycles.
    """
    if not trainset:
        raise EmptyTrainset("trainset is empty")
    pools: dict[Modality, list[int]] = {}
    for i, (_, _, modality) in enumerate(trainset):
        pools.setdefault(Modality(modality), []).append(i)
    modalities = sorted(pools)
    if len(modalities) > 1 and batch_size < 2:
        raise ValueError(
            "batch_size must be >= 2 when multiple modalities are present"
        )
    if primary is None:
        primary = infer_primary(modalities)
    if primary not in pools:
        raise EmptyTrainset(f"no {primary.name.lower()} samples in trainset")
    plan = batch_plan(batch_size, modalities, primary)
    cycles = {
        m: _PoolCycle(pools[m], mix(seed, 0xB, int(m))) for m in modalities
    }

    def generator():
        while True:
            batch: list[int] = []
            for m in modalities:
                k = plan.get(m, 0)
                if k:
                    batch.extend(cycles[m].draw(k))
            yield np.array(batch, dtype=np.intp)

    return generator()


# -- optimizers ---------------------------------------------------------------

class _AdamW:
    """Bias-corrected moments with decoupled weight decay; the update is
    done in place through preallocated scratch buffers (the optimizer
    step dominates the iteration cost at realistic D and C)."""

    def __init__(self, shapes: dict[str, tuple], weight_decay: float, decay_mask):
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self._scratch = {k: np.zeros(s) for k, s in shapes.items()}
        self.wd = weight_decay
        self.decay_mask = decay_mask  # name -> bool, decoupled decay applied?
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr):
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1**self.t
        bc2 = 1.0 - ADAM_BETA2**self.t
        for k, g in grads.items():
            m, v, scratch = self.m[k], self.v[k], self._scratch[k]
            m *= ADAM_BETA1
            np.multiply(g, 1.0 - ADAM_BETA1, out=scratch)
            m += scratch
            v *= ADAM_BETA2
            np.multiply(g, g, out=scratch)
            scratch *= 1.0 - ADAM_BETA2
            v += scratch
            # scratch <- bc1 * (sqrt(v / bc2) + eps), then m / scratch
            np.divide(v, bc2, out=scratch)
            np.sqrt(scratch, out=scratch)
            scratch += ADAM_EPS
            scratch *= bc1
            np.divide(m, scratch, out=scratch)
            p = params[k]
            if self.decay_mask[k] and self.wd:
                p *= 1.0 - lr * self.wd  # decoupled decay on the pre-step value
            scratch *= lr
            p -= scratch


class _SGD:
    """Plain SGD, no momentum; L2 decay folded into the gradient."""

    def __init__(self, weight_decay: float, decay_mask):
        self.wd = weight_decay
        self.decay_mask = decay_mask

    def step(self, params, grads, lr):
        for k, g in grads.items():
            if self.decay_mask[k] and self.wd:
                g = g + self.wd * params[k]
            params[k] -= lr * g


@dataclass
class TrainResult:
    best_state: ClassifierState
    best_adapter: AdapterState | None
    best_val_accuracy: float
    best_iter: int
    loss_curve: list[tuple[int, float]] = field(default_factory=list)
    wallclock_seconds: float = 0.0


def _accuracy(state, adapter, features, label_rows) -> float:
    f = features
    if adapter is not None:
        f = np.atleast_2d(adapter_forward(adapter, f))
    return float(np.mean(predict_rows(state, f) == label_rows))


def train(
    config: TrainConfig,
    trainset: list[tuple[np.ndarray, int, Modality]],
    valset: list[tuple[np.ndarray, int]],
    init: ClassifierState,
    adapter_init: AdapterState | None = None,
    primary: Modality | None = None,
) -> TrainResult:
    """Run the full iteration budget and keep the best validation
    checkpoint. With max_iters=0 the init state is returned unchanged."""
    start = time.perf_counter()
    state = init.copy()
    state.logit_scale = config.logit_scale
    adapter = None
    if config.adapter_enabled:
        adapter = (
            adapter_init.copy()
            if adapter_init is not None
            else AdapterState.seeded_init(state.dimension, config.seed)
        )

    if not valset:
        raise EmptyTrainset("validation set is empty")
    val_f = np.stack([np.asarray(v, dtype=np.float64) for v, _ in valset])
    val_rows = _label_rows(state, np.array([y for _, y in valset]))

    # best-so-far among training-iterate evaluations; the init itself is a
    # candidate only in the degenerate max_iters=0 run
    best_acc = _accuracy(state, adapter, val_f, val_rows)
    best_iter = 0
    best_state = state.copy()
    best_adapter = adapter.copy() if adapter is not None else None
    seen_eval = False
    curve: list[tuple[int, float]] = []

    if config.max_iters > 0:
        feats = np.stack(
            [np.asarray(v, dtype=np.float64) for v, _, _ in trainset]
        )
        labels = np.array([y for _, y, _ in trainset])
        if feats.shape[1] != state.dimension:
            raise DimensionMismatch(
                f"trainset dimension {feats.shape[1]} vs classifier "
                f"{state.dimension}"
            )
        batches = make_batches(trainset, config.batch_size, config.seed, primary)

        params = {"w": state.weights}
        mask = {"w": True}
        if adapter is not None:
            params.update(
                {"a.w1": adapter.w1, "a.b1": adapter.b1,
                 "a.w2": adapter.w2, "a.b2": adapter.b2}
            )
            # no decoupled decay on adapter biases
            mask.update({"a.w1": True, "a.b1": False, "a.w2": True, "a.b2": False})
        if config.optimizer == "adamw":
            opt = _AdamW(
                {k: v.shape for k, v in params.items()}, config.weight_decay, mask
            )
        else:
            opt = _SGD(config.weight_decay, mask)

        for t in range(config.max_iters):
            lr = lr_at(config, t)
            idx = next(batches)
            loss, grads = loss_and_grad(state, feats[idx], labels[idx], adapter)
            gdict = {"w": grads.weights}
            if grads.adapter is not None:
                gdict.update({f"a.{k}": v for k, v in grads.adapter.items()})
            opt.step(params, gdict, lr)
            curve.append((t, loss))

            done = t + 1
            if done % config.eval_every == 0 or done == config.max_iters:
                acc = _accuracy(state, adapter, val_f, val_rows)
                if not seen_eval or acc > best_acc:
                    seen_eval = True
                    best_acc = acc
                    best_iter = done
                    best_state = state.copy()
                    best_adapter = adapter.copy() if adapter is not None else None

    return TrainResult(
        best_state=best_state,
        best_adapter=best_adapter,
        best_val_accuracy=best_acc,
        best_iter=best_iter,
        loss_curve=curve,
        wallclock_seconds=time.perf_counter() - start,
    )


# -- grid search ---------------------------------------------------------------

DEFAULT_GRIDS: dict[str, dict] = {
    # linear probing: lr x wd x batch = 2 * 3 * 2 = 12 runs
    "linear-default": {
        "lrs": [1e-3, 1e-4],
        "wds": [0.0, 0.01, 1e-4],
        "batches": [8, 32],
        "adapter": False,
    },
    # adapter: 4 * 3 * 1 = 12 runs
    "adapter-default": {
        "lrs": [1e-4, 1e-5, 1e-6, 1e-7],
        "wds": [0.0, 1e-3, 1e-5],
        "batches": [8],
        "adapter": True,
    },
    # audiovisual benchmark linear probing: 4 * 3 * 1 = 12 runs
    "esc-default": {
        "lrs": [0.1, 0.01, 1e-3, 1e-4],
        "wds": [0.0, 0.01, 1e-4],
        "batches": [8],
        "adapter": False,
    },
}


def grid_search(
    lrs: list[float],
    wds: list[float],
    batches: list[int],
    base_config: TrainConfig,
    trainset,
    valset,
    init: ClassifierState,
    adapter_init: AdapterState | None = None,
    primary: Modality | None = None,
    on_result=None,
) -> tuple[TrainConfig, TrainResult]:
    """Train one model per grid point (lr-major, then weight decay, then
    batch size) and keep the highest validation accuracy; ties keep the
    earlier point. on_result(config, result) sees every child run."""
    if not lrs or not wds or not batches:
        raise EmptyGrid("grid axes must be non-empty")
    best: tuple[TrainConfig, TrainResult] | None = None
    for lr in lrs:
        for wd in wds:
            for bs in batches:
                cfg = replace(base_config, lr0=lr, weight_decay=wd, batch_size=bs)
                result = train(cfg, trainset, valset, init, adapter_init, primary)
                if on_result is not None:
                    on_result(cfg, result)
                if best is None or result.best_val_accuracy > best[1].best_val_accuracy:
                    best = (cfg, result)
    return best
