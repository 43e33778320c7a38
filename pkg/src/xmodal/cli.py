"""Command-line surface.

Commands: train, zeroshot, sweep, mine, esc, eval, pca, report,
store inspect. Every run writes a runspec.json holding the fully
resolved parameters; re-running a command with --runspec reproduces the
artifacts bit-exactly (with timing recording off, since wallclock is
inherently non-deterministic). All randomness flows from explicit
--seed/--seeds flags. Exit codes: 0 success, 1 user/input error,
2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import augment, episodes, evaluation, heads, training
from .errors import XmodalError
from .rng import mix
from .store import Modality, read_store, store_from_records, StoreManifest


class UsageError(XmodalError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; flag errors are user errors
        raise UsageError(message)


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s != ""]
    except ValueError as exc:
        raise UsageError(f"bad seed list {text!r}") from exc


def _modality_of(store, override: str | None):
    if override:
        return Modality[override.upper()]
    mods = store.modalities()
    if len(mods) != 1:
        raise UsageError(
            "store holds multiple modalities; pass --modality explicitly"
        )
    return mods[0]


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_runspec(out_dir: Path, command: str, params: dict) -> None:
    _json_dump({"command": command, "params": params}, out_dir / "runspec.json")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("XMODAL_THREADS", "1")))
    except ValueError:
        return 1


def _log(msg: str) -> None:
    print(msg, flush=True)


# -- shared episode/train plumbing -------------------------------------------

def _train_config(p: dict) -> training.TrainConfig:
    return training.TrainConfig(
        optimizer=p["optimizer"],
        lr0=p["lr"],
        weight_decay=p["weight_decay"],
        batch_size=p["batch_size"],
        max_iters=p["iters"],
        warmup_iters=p["warmup"],
        warmup_start_lr=p["warmup_start_lr"],
        eval_every=p["eval_every"],
        logit_scale=p["logit_scale"],
        seed=0,
        adapter_enabled=p["adapter"],
    )


def _text_view_ids(p: dict) -> list[int] | None:
    tv = p.get("text_views", "all")
    if tv in (None, "all"):
        return None
    return [int(v) for v in tv.split(",")]


def _seconds(p: dict, measured: float) -> float:
    return measured if p.get("timing", "wallclock") == "wallclock" else 0.0


def _run_one_seed(p, stores, seed):
    """One seeded episode: sample, assemble, train, test. Returns
    (row, artifacts dict)."""
    primary_store = stores["features"]
    modality = _modality_of(primary_store, p.get("modality"))
    override = None
    if p.get("split_manifest"):
        override = episodes.load_split_manifest(p["split_manifest"])
    episode = episodes.sample_episode(
        primary_store, p["shots"], seed, modality,
        test_store=stores.get("test_features"),
        split_override=override,
    )
    episode = augment.expand_views(episode, primary_store, p["view_policy"])

    extras = []
    wanted = set(p["modalities"])
    if stores.get("text") is not None and "text" in wanted:
        text_views = _text_view_ids(p)
        if text_views is None:
            extras.append((stores["text"], Modality.TEXT))
        else:
            keep = set(text_views)
            recs = [
                r
                for r in stores["text"].records
                if r.modality != Modality.TEXT or r.view_id in keep
            ]
            extras.append(
                (
                    store_from_records(
                        recs, stores["text"].dimension, stores["text"].manifest
                    ),
                    Modality.TEXT,
                )
            )
    if stores.get("audio") is not None and "audio" in wanted:
        extras.append((stores["audio"], Modality.AUDIO))

    trainset = episodes.assemble_crossmodal_trainset(episode, extras)

    if p["init"] == "text":
        if stores.get("text") is None:
            raise UsageError("--init text requires --text store")
        init = heads.init_from_text(
            stores["text"],
            episode.class_ids,
            view_ids=_text_view_ids(p),
            logit_scale=p["logit_scale"],
        )
    else:
        init = heads.random_init(
            primary_store.dimension, episode.class_ids, seed, p["logit_scale"]
        )

    config = replace(_train_config(p), seed=seed)
    valset = evaluation.pairs_from_records(episode.val)
    result = training.train(config, trainset, valset, init, primary=modality)

    test_pairs = evaluation.pairs_from_records(episode.test)
    test_acc = evaluation.top1_accuracy(
        result.best_state, test_pairs, result.best_adapter
    )
    method = "{}-{}".format(
        "cross-modal" if extras else "uni-modal",
        "adapter" if p["adapter"] else "linear",
    )
    row = evaluation.EvalRow(
        primary_store.manifest.dataset,
        method,
        p["shots"],
        seed,
        test_acc,
        _seconds(p, result.wallclock_seconds),
    )

    wise_rows = []
    wise_state = None
    alpha = p.get("wise_ft_alpha")
    if alpha is not None:
        zs = init if p["init"] == "text" else None
        if zs is None:
            raise UsageError("--wise-ft-alpha requires --init text")
        wise_state = heads.wise_ft(result.best_state, zs, alpha)
        wise_acc = evaluation.top1_accuracy(wise_state, test_pairs, result.best_adapter)
        wise_rows.append(
            evaluation.EvalRow(
                primary_store.manifest.dataset,
                f"{method}-wiseft{alpha:g}",
                p["shots"],
                seed,
                wise_acc,
                _seconds(p, result.wallclock_seconds),
            )
        )
    return row, wise_rows, episode, result, wise_state


def _emit_reports(rows, out_dir: Path) -> None:
    evaluation.write_rows_csv(rows, out_dir / "rows.csv")
    report = evaluation.EvalReport(rows=list(rows))
    evaluation.emit_report(report, "csv", out_dir / "report.csv")
    evaluation.emit_report(report, "markdown", out_dir / "report.md")


# -- commands -----------------------------------------------------------------

def cmd_train(p: dict) -> int:
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stores = {
        "features": read_store(p["features"]),
        "text": read_store(p["text"]) if p.get("text") else None,
        "audio": read_store(p["audio"]) if p.get("audio") else None,
        "test_features": read_store(p["test_features"])
        if p.get("test_features") else None,
    }
    _write_runspec(out_dir, "train", p)
    all_rows = []
    for seed in p["seeds"]:
        row, wise_rows, episode, result, wise_state = _run_one_seed(p, stores, seed)
        seed_dir = out_dir / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        heads.save_checkpoint(
            seed_dir / "checkpoint.xmck", result.best_state, result.best_adapter
        )
        if wise_state is not None:
            heads.save_checkpoint(seed_dir / "wiseft.xmck", wise_state)
        _json_dump(episode.to_json_dict(), seed_dir / "episode.json")
        _json_dump(
            {
                "best_iter": result.best_iter,
                "best_val_accuracy": result.best_val_accuracy,
                "test_accuracy": row.accuracy,
                "wallclock_seconds": _seconds(p, result.wallclock_seconds),
                "final_loss": result.loss_curve[-1][1] if result.loss_curve else None,
                "config": json.loads(_train_config(p).to_json()),
            },
            seed_dir / "result.json",
        )
        all_rows.append(row)
        all_rows.extend(wise_rows)
        _log(
            f"seed {seed}: val {result.best_val_accuracy:.4f} "
            f"@ iter {result.best_iter}, test {row.accuracy:.4f}"
        )
    _emit_reports(all_rows, out_dir)
    return 0


def cmd_zeroshot(p: dict) -> int:
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    feats = read_store(p["features"])
    text = read_store(p["text"])
    _write_runspec(out_dir, "zeroshot", p)
    modality = _modality_of(feats, p.get("modality"))
    test = [r for r in feats.select(modality=modality, view_id=0)
            if r.sample_id in set(feats.manifest.test_samples or [])]
    if not test:
        test = feats.select(modality=modality, view_id=0)
    class_ids = sorted({r.class_id for r in test})
    state = heads.init_from_text(
        text, class_ids, view_ids=_text_view_ids(p), logit_scale=p["logit_scale"]
    )
    heads.save_checkpoint(out_dir / "checkpoint.xmck", state)
    acc = evaluation.top1_accuracy(state, evaluation.pairs_from_records(test))
    rows = [evaluation.EvalRow(feats.manifest.dataset, "zeroshot", 0, 0, acc, 0.0)]
    _emit_reports(rows, out_dir)
    _log(f"zeroshot accuracy {acc:.4f} over {len(test)} test records")
    return 0


def cmd_sweep(p: dict) -> int:
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stores = {
        "features": read_store(p["features"]),
        "text": read_store(p["text"]) if p.get("text") else None,
        "audio": read_store(p["audio"]) if p.get("audio") else None,
        "test_features": read_store(p["test_features"])
        if p.get("test_features") else None,
    }
    _write_runspec(out_dir, "sweep", p)
    grid = training.DEFAULT_GRIDS.get(p["grid"])
    if grid is None:
        raise UsageError(
            f"unknown grid {p['grid']!r}; known: {sorted(training.DEFAULT_GRIDS)}"
        )
    p = dict(p, adapter=grid["adapter"])
    seed = p["seed"]
    primary_store = stores["features"]
    modality = _modality_of(primary_store, p.get("modality"))
    episode = episodes.sample_episode(
        primary_store, p["shots"], seed, modality,
        test_store=stores.get("test_features"),
    )
    episode = augment.expand_views(episode, primary_store, p["view_policy"])
    extras = []
    if stores.get("text") is not None and "text" in set(p["modalities"]):
        extras.append((stores["text"], Modality.TEXT))
    if stores.get("audio") is not None and "audio" in set(p["modalities"]):
        extras.append((stores["audio"], Modality.AUDIO))
    trainset = episodes.assemble_crossmodal_trainset(episode, extras)
    if p["init"] == "text":
        if stores.get("text") is None:
            raise UsageError("--init text requires --text store")
        init = heads.init_from_text(
            stores["text"], episode.class_ids, logit_scale=p["logit_scale"]
        )
    else:
        init = heads.random_init(
            primary_store.dimension, episode.class_ids, seed, p["logit_scale"]
        )
    valset = evaluation.pairs_from_records(episode.val)
    base = replace(_train_config(p), seed=seed)

    points = [
        (lr, wd, bs)
        for lr in grid["lrs"]
        for wd in grid["wds"]
        for bs in grid["batches"]
    ]

    def run_point(point):
        lr, wd, bs = point
        cfg = replace(base, lr0=lr, weight_decay=wd, batch_size=bs)
        return cfg, training.train(cfg, trainset, valset, init, primary=modality)

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_point, points))
    else:
        results = [run_point(pt) for pt in points]

    best_cfg, best_res = None, None
    lines = ["lr,weight_decay,batch_size,val_accuracy,best_iter"]
    for cfg, res in results:
        lines.append(
            f"{cfg.lr0:g},{cfg.weight_decay:g},{cfg.batch_size},"
            f"{res.best_val_accuracy!r},{res.best_iter}"
        )
        if best_res is None or res.best_val_accuracy > best_res.best_val_accuracy:
            best_cfg, best_res = cfg, res
    (out_dir / "children.csv").write_text("\n".join(lines) + "\n")
    _json_dump(json.loads(best_cfg.to_json()), out_dir / "best_config.json")
    heads.save_checkpoint(
        out_dir / "checkpoint.xmck", best_res.best_state, best_res.best_adapter
    )
    test_pairs = evaluation.pairs_from_records(episode.test)
    acc = evaluation.top1_accuracy(
        best_res.best_state, test_pairs, best_res.best_adapter
    )
    method = "sweep-" + p["grid"]
    rows = [
        evaluation.EvalRow(
            primary_store.manifest.dataset, method, p["shots"], seed, acc,
            _seconds(p, best_res.wallclock_seconds),
        )
    ]
    _emit_reports(rows, out_dir)
    _log(
        f"{len(points)} child runs; best lr={best_cfg.lr0:g} "
        f"wd={best_cfg.weight_decay:g} bs={best_cfg.batch_size} "
        f"val {best_res.best_val_accuracy:.4f} test {acc:.4f}"
    )
    return 0


def cmd_mine(p: dict) -> int:
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    feats = read_store(p["features"])
    text = read_store(p["text"])
    _write_runspec(out_dir, "mine", p)
    if p.get("pool") in (None, "builtin:180"):
        pool = augment.TemplatePool.mined_pool()
    else:
        pool = augment.TemplatePool.from_file(p["pool"])
    modality = _modality_of(feats, p.get("modality"))
    episode = episodes.sample_episode(feats, p["shots"], p["seed"], modality)
    val_pairs = evaluation.pairs_from_records(episode.val)
    scores = augment.zero_shot_template_scores(text, val_pairs, episode.class_ids)
    mined = augment.mine_templates(scores, p["k"])
    (out_dir / "scores.csv").write_text(
        "template_id,val_accuracy\n"
        + "\n".join(f"{tid},{acc!r}" for tid, acc in scores)
        + "\n"
    )
    _json_dump({"k": p["k"], "template_ids": mined}, out_dir / "mined_ids.json")
    names = [
        pool.templates[tid] if tid < len(pool.templates) else f"<view {tid}>"
        for tid in mined
    ]
    (out_dir / "mined_templates.txt").write_text("\n".join(names) + "\n")
    _log(f"mined {len(mined)} of {len(scores)} templates")
    return 0


def cmd_esc(p: dict) -> int:
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    image_store = read_store(p["image_store"])
    audio_store = read_store(p["audio_store"])
    _write_runspec(out_dir, "esc", p)
    matching = episodes.EscMatching.load(p["variant"])
    task = p["task"]
    cells = [(fold, split) for fold in range(1, 6) for split in range(1, 6)]

    def run_cell(cell):
        fold, split = cell
        image_ep, audio_ep = episodes.build_esc_episode(
            image_store, audio_store, matching, fold, split, p["shots"],
            base_seed=p["seed"],
        )
        episode = image_ep if task == "image" else audio_ep
        other = audio_ep if task == "image" else image_ep
        extras = []
        if not p["uni_modal"]:
            pool_manifest = StoreManifest(
                dataset="extras",
                classes={i: f"pair_{i}" for i in episode.class_ids},
            )
            extras.append(
                (
                    store_from_records(
                        other.train, image_store.dimension, pool_manifest
                    ),
                    other.modality,
                )
            )
        trainset = episodes.assemble_crossmodal_trainset(episode, extras)
        cell_seed = mix(p["seed"], fold, split)
        init = heads.random_init(
            image_store.dimension, episode.class_ids, cell_seed, p["logit_scale"]
        )
        cfg = replace(_train_config(p), seed=cell_seed)
        valset = evaluation.pairs_from_records(episode.val)
        result = training.train(
            cfg, trainset, valset, init, primary=episode.modality
        )
        acc = evaluation.top1_accuracy(
            result.best_state, evaluation.pairs_from_records(episode.test),
            result.best_adapter,
        )
        method = "{}-{}-linear".format(
            task, "only" if p["uni_modal"] else other.modality.name.lower()
        )
        return evaluation.EvalRow(
            f"imagenet-esc-{p['variant']}",
            method,
            p["shots"],
            (fold - 1) * 5 + (split - 1),
            acc,
            _seconds(p, result.wallclock_seconds),
        )

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    _emit_reports(rows, out_dir)
    accs = [r.accuracy for r in rows]
    _log(
        f"25 runs: mean {100 * float(np.mean(accs)):.2f} "
        f"std {100 * float(np.std(accs, ddof=1)):.2f}"
    )
    return 0


def cmd_eval(p: dict) -> int:
    out_dir = Path(p["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    state, adapter = heads.load_checkpoint(p["checkpoint"])
    test_stores = [read_store(t) for t in p["tests"]]
    _write_runspec(out_dir, "eval", p)
    remap = None
    if p.get("remap"):
        raw = json.loads(Path(p["remap"]).read_text())
        remap = {
            ds: {int(k): int(v) for k, v in table.items()}
            for ds, table in raw.items()
        }
    rows = evaluation.eval_shifted(
        state,
        test_stores[0],
        test_stores[1:],
        remap_tables=remap,
        adapter=adapter,
        method=p["method"],
        shots=p["shots"],
        seed=p["seed"],
    )
    _emit_reports(rows, out_dir)
    for row in rows:
        _log(f"{row.dataset}: {row.accuracy:.4f}")
    return 0


def cmd_pca(p: dict) -> int:
    out_path = Path(p["out"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    feats = read_store(p["features"])
    text = read_store(p["text"]) if p.get("text") else None
    classes = [int(c) for c in p["classes"].split(",")]
    modality = _modality_of(feats, p.get("modality"))
    episode = episodes.sample_episode(
        feats, p["shots"], p["seed"], modality, classes=classes
    )
    extras = [(text, Modality.TEXT)] if text is not None else []
    trainset = episodes.assemble_crossmodal_trainset(episode, extras)
    if text is not None:
        init = heads.init_from_text(text, episode.class_ids, logit_scale=p["logit_scale"])
    else:
        init = heads.random_init(
            feats.dimension, episode.class_ids, p["seed"], p["logit_scale"]
        )
    cfg = replace(_train_config(p), seed=p["seed"])
    valset = evaluation.pairs_from_records(episode.val)
    result = training.train(cfg, trainset, valset, init, primary=modality)
    evaluation.pca_figure(
        trainset, result.best_state, out_path,
        class_names=feats.manifest.classes,
    )
    _write_runspec(out_path.parent, "pca", p)
    _log(f"wrote {out_path} and {out_path.with_suffix('.json')}")
    return 0


def cmd_report(p: dict) -> int:
    rows = []
    for path in p["rows"]:
        rows.extend(evaluation.read_rows_csv(path))
    if not rows:
        raise UsageError("no rows found in inputs")
    report = evaluation.EvalReport(rows=rows)
    out_path = Path(p["out"])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    evaluation.emit_report(report, p["format"], out_path)
    if p.get("figure"):
        _report_figure(report, p["figure"])
    _write_runspec(out_path.parent, "report", p)
    _log(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def _report_figure(report, fig_path) -> None:
    """Mean accuracy vs shots, one line per (dataset, method)."""
    plt = evaluation._figure_backend()

    aggs = report.aggregates()
    series: dict[tuple, list] = {}
    for agg in aggs:
        series.setdefault((agg["dataset"], agg["method"]), []).append(
            (agg["shots"], agg["mean"], agg["std"])
        )
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for (dataset, method), pts in sorted(series.items()):
        pts.sort()
        xs = [s for s, _, _ in pts]
        ys = [100 * m for _, m, _ in pts]
        es = [100 * sd for _, _, sd in pts]
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2,
                    label=f"{dataset}/{method}")
    ax.set_xlabel("shots")
    ax.set_ylabel("top-1 accuracy (%)")
    ax.set_xscale("log", base=2)
    ax.legend(fontsize=7)
    fig.tight_layout()
    kwargs = (
        {"metadata": dict(evaluation.SVG_METADATA)}
        if str(fig_path).endswith(".svg") else {}
    )
    fig.savefig(fig_path, **kwargs)
    plt.close(fig)


def cmd_store_inspect(p: dict) -> int:
    store = read_store(p["path"])
    m = store.manifest
    _log(f"dataset: {m.dataset}")
    _log(f"dimension: {store.dimension}")
    _log(f"records: {len(store.records)}")
    _log(f"normalized flag: {m.normalized}")
    counts: dict[tuple, int] = {}
    for rec in store.records:
        counts[(rec.modality.name.lower(), rec.class_id)] = (
            counts.get((rec.modality.name.lower(), rec.class_id), 0) + 1
        )
    for modality in sorted({k[0] for k in counts}):
        n_classes = len([k for k in counts if k[0] == modality])
        n_recs = sum(v for k, v in counts.items() if k[0] == modality)
        _log(f"{modality}: {n_recs} records over {n_classes} classes")
    if m.folds:
        _log(f"folds: {sorted(set(m.folds.values()))}")
    if m.test_samples:
        _log(f"test partition: {len(m.test_samples)} samples")
    if m.templates:
        _log(f"templates: {len(m.templates)}")
    return 0


# -- argument wiring -----------------------------------------------------------

def _add_train_flags(sp, with_seeds=True):
    sp.add_argument("--features", required=False, help="primary feature store")
    sp.add_argument("--test-features",
                    help="second store holding the test partition")
    sp.add_argument("--text", help="text feature store")
    sp.add_argument("--audio", help="audio feature store")
    sp.add_argument("--modality", choices=["image", "text", "audio"],
                    help="primary modality if the store is mixed")
    sp.add_argument("--modalities", default="image,text,audio",
                    help="comma list of modalities to train on")
    sp.add_argument("--shots", type=int, default=1)
    if with_seeds:
        sp.add_argument("--seeds", default="0", help="comma list of episode seeds")
    else:
        sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--init", choices=["text", "random"], default="text")
    sp.add_argument("--text-views", default="all",
                    help="'all' or comma list of text view ids")
    sp.add_argument("--view-policy", default="center_only",
                    help="center_only | plus_flip | random_crops:k")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--weight-decay", type=float, default=0.0)
    sp.add_argument("--batch-size", type=int, default=8)
    sp.add_argument("--iters", type=int, default=12800)
    sp.add_argument("--warmup", type=int, default=50)
    sp.add_argument("--warmup-start-lr", type=float, default=1e-5)
    sp.add_argument("--eval-every", type=int, default=100)
    sp.add_argument("--optimizer", choices=["adamw", "sgd"], default="adamw")
    sp.add_argument("--logit-scale", type=float, default=100.0)
    sp.add_argument("--adapter", action="store_true")
    sp.add_argument("--split-manifest", help="external split override JSON")
    sp.add_argument("--wise-ft-alpha", type=float,
                    help="also emit the weight-space ensemble at this alpha")
    sp.add_argument("--timing", choices=["wallclock", "off"], default="wallclock")
    sp.add_argument("--out", required=False)
    sp.add_argument("--runspec", help="re-run from a saved runspec.json")


def _params_from_args(args, keys) -> dict:
    return {k: getattr(args, k.replace("-", "_")) for k in keys}


_TRAIN_KEYS = [
    "features", "test_features", "text", "audio", "modality", "shots",
    "init", "text_views",
    "view_policy", "lr", "weight_decay", "batch_size", "iters", "warmup",
    "warmup_start_lr", "eval_every", "optimizer", "logit_scale", "adapter",
    "split_manifest", "wise_ft_alpha", "timing", "out",
]


def build_parser() -> _Parser:
    parser = _Parser(prog="xmodal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="cross-modal training over seeded episodes")
    _add_train_flags(sp)

    sp = sub.add_parser("zeroshot", help="text-initialized classifier, no updates")
    sp.add_argument("--features", required=False)
    sp.add_argument("--text", required=False)
    sp.add_argument("--modality", choices=["image", "text", "audio"])
    sp.add_argument("--text-views", default="all")
    sp.add_argument("--logit-scale", type=float, default=100.0)
    sp.add_argument("--out", required=False)
    sp.add_argument("--runspec")

    sp = sub.add_parser("sweep", help="hyperparameter grid search")
    _add_train_flags(sp, with_seeds=False)
    sp.add_argument("--grid", default="linear-default",
                    choices=sorted(training.DEFAULT_GRIDS))

    sp = sub.add_parser("mine", help="select templates by zero-shot val accuracy")
    sp.add_argument("--pool", default="builtin:180",
                    help="template pool file (default: shipped 180 pool)")
    sp.add_argument("--k", type=int, default=21)
    sp.add_argument("--features", required=False)
    sp.add_argument("--text", required=False)
    sp.add_argument("--modality", choices=["image", "text", "audio"])
    sp.add_argument("--shots", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=False)
    sp.add_argument("--runspec")

    sp = sub.add_parser("esc", help="25-run audiovisual benchmark matrix")
    sp.add_argument("--image-store", required=False)
    sp.add_argument("--audio-store", required=False)
    sp.add_argument("--variant", default="19", choices=["19", "27"])
    sp.add_argument("--task", default="image", choices=["image", "audio"])
    sp.add_argument("--uni-modal", action="store_true",
                    help="drop the counterpart extra shot (baseline arm)")
    sp.add_argument("--shots", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--lr", type=float, default=1e-2)
    sp.add_argument("--weight-decay", type=float, default=0.0)
    sp.add_argument("--batch-size", type=int, default=8)
    sp.add_argument("--iters", type=int, default=12800)
    sp.add_argument("--warmup", type=int, default=50)
    sp.add_argument("--warmup-start-lr", type=float, default=1e-5)
    sp.add_argument("--eval-every", type=int, default=100)
    sp.add_argument("--optimizer", choices=["adamw", "sgd"], default="adamw")
    sp.add_argument("--logit-scale", type=float, default=100.0)
    sp.add_argument("--adapter", action="store_true")
    sp.add_argument("--timing", choices=["wallclock", "off"], default="wallclock")
    sp.add_argument("--out", required=False)
    sp.add_argument("--runspec")

    sp = sub.add_parser("eval", help="fixed classifier over shifted test stores")
    sp.add_argument("--checkpoint", required=False)
    sp.add_argument("--tests", nargs="+", required=False,
                    help="source store first, then shifted targets")
    sp.add_argument("--remap", help="JSON {dataset: {target_id: source_id}}")
    sp.add_argument("--method", default="fixed-classifier")
    sp.add_argument("--shots", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=False)
    sp.add_argument("--runspec")

    sp = sub.add_parser("pca", help="2-D projection figure with decision boundary")
    _add_train_flags(sp, with_seeds=False)
    sp.add_argument("--classes", default="0,1", help="comma list of class ids")

    sp = sub.add_parser("report", help="merge row CSVs into a results table")
    sp.add_argument("--rows", nargs="+", required=False)
    sp.add_argument("--format", default="csv", choices=["csv", "markdown"])
    sp.add_argument("--figure", help="also render accuracy-vs-shots SVG")
    sp.add_argument("--out", required=False)
    sp.add_argument("--runspec")

    sp = sub.add_parser("store", help="store utilities")
    store_sub = sp.add_subparsers(dest="store_command", required=True)
    si = store_sub.add_parser("inspect", help="print header and manifest summary")
    si.add_argument("--path", required=True)

    return parser


_HANDLERS = {
    "train": cmd_train,
    "zeroshot": cmd_zeroshot,
    "sweep": cmd_sweep,
    "mine": cmd_mine,
    "esc": cmd_esc,
    "eval": cmd_eval,
    "pca": cmd_pca,
    "report": cmd_report,
}

_REQUIRED = {
    "train": ["features", "out"],
    "zeroshot": ["features", "text", "out"],
    "sweep": ["features", "out"],
    "mine": ["features", "text", "out"],
    "esc": ["image_store", "audio_store", "out"],
    "eval": ["checkpoint", "tests", "out"],
    "pca": ["features", "out"],
    "report": ["rows", "out"],
}


def _collect_params(args) -> dict:
    cmd = args.command
    if cmd == "train":
        p = _params_from_args(args, _TRAIN_KEYS)
        p["seeds"] = _parse_seeds(args.seeds)
        p["modalities"] = args.modalities.split(",")
    elif cmd == "zeroshot":
        p = _params_from_args(
            args, ["features", "text", "modality", "text_views", "logit_scale", "out"]
        )
    elif cmd in ("sweep", "pca"):
        p = _params_from_args(args, [k for k in _TRAIN_KEYS if k != "wise_ft_alpha"])
        p["wise_ft_alpha"] = None
        p["seed"] = args.seed
        p["modalities"] = args.modalities.split(",")
        if cmd == "sweep":
            p["grid"] = args.grid
        else:
            p["classes"] = args.classes
    elif cmd == "mine":
        p = _params_from_args(
            args, ["pool", "k", "features", "text", "modality", "shots", "seed", "out"]
        )
    elif cmd == "esc":
        p = _params_from_args(
            args,
            ["image_store", "audio_store", "variant", "task", "uni_modal",
             "shots", "seed", "lr", "weight_decay", "batch_size", "iters",
             "warmup", "warmup_start_lr", "eval_every", "optimizer",
             "logit_scale", "adapter", "timing", "out"],
        )
    elif cmd == "eval":
        p = _params_from_args(
            args, ["checkpoint", "tests", "remap", "method", "shots", "seed", "out"]
        )
    elif cmd == "report":
        p = _params_from_args(args, ["rows", "format", "figure", "out"])
    else:
        raise UsageError(f"unknown command {cmd!r}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "store":
            return cmd_store_inspect({"path": args.path})
        runspec = getattr(args, "runspec", None)
        if runspec:
            saved = json.loads(Path(runspec).read_text())
            if saved.get("command") != args.command:
                raise UsageError(
                    f"runspec is for {saved.get('command')!r}, not {args.command!r}"
                )
            params = saved["params"]
        else:
            params = _collect_params(args)
        for key in _REQUIRED[args.command]:
            if not params.get(key):
                raise UsageError(f"--{key.replace('_', '-')} is required")
        return _HANDLERS[args.command](params)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except XmodalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # invariant violation / bug
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
