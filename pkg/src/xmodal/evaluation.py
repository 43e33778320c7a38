"""Metrics, distribution-shift evaluation, figures, and result tables.

Accuracies are fractions in [0, 1] internally; report renders show
percentage points rounded to 0.01 only at render time. Figures are
self-contained SVG files with a JSON sidecar of the raw projected
coordinates, so downstream tooling never has to parse the drawing.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ClassVocabularyMismatch,
    DegenerateCovariance,
    EmptyTestSet,
    IoError,
)
from .heads import AdapterState, ClassifierState, adapter_forward, scores
from .store import FeatureStore, Modality, unit_vector


def _as_arrays(test_pairs) -> tuple[np.ndarray, np.ndarray]:
    if not test_pairs:
        raise EmptyTestSet("test set is empty")
    feats = np.stack([np.asarray(v, dtype=np.float64) for v, _ in test_pairs])
    labels = np.array([int(y) for _, y in test_pairs])
    return feats, labels


def pairs_from_records(records) -> list:
    """(unit feature, class_id) pairs from canonical store records."""
    return [(unit_vector(r), r.class_id) for r in records]


def top1_accuracy(
    state: ClassifierState,
    test_pairs: list,
    adapter: AdapterState | None = None,
) -> float:
    """Fraction of samples whose argmax class equals the label; ties go to
    the lowest class row, matching predict."""
    feats, labels = _as_arrays(test_pairs)
    if adapter is not None:
        feats = np.atleast_2d(adapter_forward(adapter, feats))
    logit = scores(state, feats)
    rows = np.argmax(logit, axis=1)
    predicted = np.array(state.class_ids)[rows]
    return float(np.mean(predicted == labels))


@dataclass
class EvalRow:
    dataset: str
    method: str
    shots: int
    seed: int
    accuracy: float
    seconds: float = 0.0

    def as_list(self) -> list:
        return [
            self.dataset, self.method, self.shots, self.seed,
            self.accuracy, self.seconds,
        ]


def eval_shifted(
    state: ClassifierState,
    source_test: FeatureStore,
    target_tests: list[FeatureStore],
    remap_tables: dict[str, dict[int, int]] | None = None,
    adapter: AdapterState | None = None,
    method: str = "fixed-classifier",
    shots: int = 0,
    seed: int = 0,
) -> list[EvalRow]:
    """One row per test store with the single fixed classifier.

    A remap table (dataset name -> {target class id: classifier class
    id}) restricts the argmax to the mapped classifier rows, as needed
    for subset target vocabularies. No per-target adaptation happens.
    """
    rows = []
    for store in [source_test] + list(target_tests):
        table = (remap_tables or {}).get(store.manifest.dataset)
        acc = _masked_accuracy(state, store, table, adapter)
        rows.append(
            EvalRow(store.manifest.dataset, method, shots, seed, acc)
        )
    return rows


def _masked_accuracy(state, store, remap, adapter):
    recs = [r for r in store.records if r.view_id == 0]
    if not recs:
        raise EmptyTestSet(f"store {store.manifest.dataset!r} has no records")
    index = state.row_index()
    mapped: dict[int, int] = {}
    for cid in sorted({r.class_id for r in recs}):
        target = remap.get(cid) if remap else cid
        if target is None or target not in index:
            raise ClassVocabularyMismatch(
                f"class {cid} of {store.manifest.dataset!r} has no classifier "
                f"row (remap table needed)"
            )
        mapped[cid] = index[target]

    feats = np.stack([unit_vector(r) for r in recs])
    if adapter is not None:
        feats = np.atleast_2d(adapter_forward(adapter, feats))
    logit = scores(state, feats)
    allowed = sorted(set(mapped.values()))
    masked = np.full_like(logit, -np.inf)
    masked[:, allowed] = logit[:, allowed]
    pred_rows = np.argmax(masked, axis=1)
    truth_rows = np.array([mapped[r.class_id] for r in recs])
    return float(np.mean(pred_rows == truth_rows))


# -- PCA projection figures ----------------------------------------------------

_MODALITY_MARKERS = {Modality.IMAGE: "o", Modality.TEXT: "^", Modality.AUDIO: "s"}


def pca_project(features: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-2 principal directions of the mean-centered features.

    Returns (components (2, D), projected (N, 2), mean). Sign convention:
    each component's largest-magnitude coordinate is made positive, so
    repeated runs draw identical figures.
    """
    x = np.asarray(features, dtype=np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    if not np.any(centered):
        raise DegenerateCovariance("all points identical")
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2].copy()
    if comps.shape[0] < 2:  # rank-1 cloud: complete an arbitrary fixed basis
        pad = np.zeros((2 - comps.shape[0], x.shape[1]))
        comps = np.vstack([comps, pad])
    for i in range(2):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return comps, centered @ comps.T, mean


def pca_figure(
    samples: list[tuple[np.ndarray, int, Modality]],
    state: ClassifierState,
    out_path,
    class_names: dict[int, str] | None = None,
) -> dict:
    """Project samples to the top-2 PC plane and render an SVG.

    For a two-class state the decision line (w0 - w1) . x = 0 is drawn
    intersected with the PC plane. Raw coordinates go to a sidecar
    '<stem>.json' next to the figure.
    """
    if len(samples) < 2:
        raise DegenerateCovariance("need at least two feature points")
    feats = np.stack([np.asarray(v, dtype=np.float64) for v, _, _ in samples])
    comps, proj, mean = pca_project(feats)

    sidecar: dict = {
        "points": [
            {
                "x": float(proj[i, 0]),
                "y": float(proj[i, 1]),
                "class": int(samples[i][1]),
                "modality": Modality(samples[i][2]).name.lower(),
            }
            for i in range(len(samples))
        ],
        "boundary": None,
    }
    if state.num_classes == 2:
        # (w0 - w1) . (mean + a*pc1 + b*pc2) = 0  ->  a*u + b*v + c = 0
        dw = state.weights[0] - state.weights[1]
        a, b = float(dw @ comps[0]), float(dw @ comps[1])
        c = float(dw @ mean)
        sidecar["boundary"] = {"a": a, "b": b, "c": c}

    _render_pca_svg(out_path, proj, samples, sidecar["boundary"], state, class_names)
    out = Path(out_path)
    out.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )
    return sidecar


def _figure_backend():
    """Agg backend with byte-deterministic SVG output (fixed hash salt,
    no embedded creation date), so re-runs reproduce figure files."""
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "xmodal"
    import matplotlib.pyplot as plt

    return plt


SVG_METADATA = {"Date": None}


def _render_pca_svg(out_path, proj, samples, boundary, state, class_names):
    plt = _figure_backend()
    fig, ax = plt.subplots(figsize=(5, 4))
    cmap = plt.get_cmap("tab10")
    class_order = sorted({int(c) for _, c, _ in samples})
    for cls in class_order:
        for modality in Modality:
            xs = [
                proj[i]
                for i, (_, c, m) in enumerate(samples)
                if int(c) == cls and Modality(m) == modality
            ]
            if not xs:
                continue
            pts = np.stack(xs)
            label = class_names.get(cls, str(cls)) if class_names else str(cls)
            ax.scatter(
                pts[:, 0],
                pts[:, 1],
                c=[cmap(class_order.index(cls) % 10)],
                marker=_MODALITY_MARKERS[modality],
                label=f"{label} ({modality.name.lower()})",
                edgecolors="black",
                linewidths=0.3,
            )
    if boundary is not None:
        a, b, c = boundary["a"], boundary["b"], boundary["c"]
        lo, hi = proj[:, 0].min(), proj[:, 0].max()
        span = (hi - lo) or 1.0
        xs = np.linspace(lo - 0.1 * span, hi + 0.1 * span, 50)
        if abs(b) > 1e-12:
            ax.plot(xs, -(a * xs + c) / b, "k--", linewidth=1, label="boundary")
        elif abs(a) > 1e-12:
            ax.axvline(-c / a, color="k", linestyle="--", linewidth=1)
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    try:
        fig.savefig(out_path, format="svg", metadata=dict(SVG_METADATA))
    except OSError as exc:
        raise IoError(f"cannot write figure {out_path}: {exc}") from exc
    finally:
        plt.close(fig)


# -- report emission -----------------------------------------------------------

@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def add(self, row: EvalRow) -> None:
        self.rows.append(row)

    def aggregates(self) -> list[dict]:
        """Mean and sample std of accuracy across seeds per (dataset,
        method, shots); std is 0 for a single seed."""
        groups: dict[tuple, list[EvalRow]] = {}
        for row in self.rows:
            groups.setdefault((row.dataset, row.method, row.shots), []).append(row)
        out = []
        for key in sorted(groups):
            rs = groups[key]
            accs = np.array([r.accuracy for r in rs])
            std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
            out.append(
                {
                    "dataset": key[0],
                    "method": key[1],
                    "shots": key[2],
                    "mean": float(accs.mean()),
                    "std": std,
                    "seconds": float(np.mean([r.seconds for r in rs])),
                }
            )
        return out


REPORT_COLUMNS = ["dataset", "method", "shots", "mean", "std", "seconds"]
ROW_COLUMNS = ["dataset", "method", "shots", "seed", "accuracy", "seconds"]


def _format_aggregate(agg: dict) -> list[str]:
    # accuracies render as percentage points, 0.01 granularity
    return [
        agg["dataset"],
        agg["method"],
        str(agg["shots"]),
        f"{100.0 * agg['mean']:.2f}",
        f"{100.0 * agg['std']:.2f}",
        f"{agg['seconds']:.2f}",
    ]


def emit_report(report: EvalReport, fmt: str, out_path) -> None:
    """Aggregate table as CSV or a pipe-delimited markdown table; both
    render from the same aggregate rows."""
    if not report.rows:
        raise EmptyTestSet("report has no rows")
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    aggs = report.aggregates()
    try:
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for agg in aggs:
                writer.writerow(_format_aggregate(agg))
            Path(out_path).write_text(buf.getvalue())
        else:
            lines = [
                "| " + " | ".join(REPORT_COLUMNS) + " |",
                "|" + "|".join(["---"] * len(REPORT_COLUMNS)) + "|",
            ]
            for agg in aggs:
                lines.append("| " + " | ".join(_format_aggregate(agg)) + " |")
            Path(out_path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write report {out_path}: {exc}") from exc


def write_rows_csv(rows: list[EvalRow], out_path) -> None:
    """Raw per-run rows (one seed per line), the input format cmd_report
    merges."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_COLUMNS)
    for row in rows:
        writer.writerow(
            [row.dataset, row.method, row.shots, row.seed,
             repr(row.accuracy), f"{row.seconds:.3f}"]
        )
    Path(out_path).write_text(buf.getvalue())


def read_rows_csv(path) -> list[EvalRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                EvalRow(
                    rec["dataset"],
                    rec["method"],
                    int(rec["shots"]),
                    int(rec["seed"]),
                    float(rec["accuracy"]),
                    float(rec["seconds"]),
                )
            )
    return rows
