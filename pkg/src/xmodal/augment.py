"""Text and image augmentation for cross-modal training.

Text augmentation renders class names through sentence templates; the
shipped pool of 180 generic templates can be mined for the best
performers on a validation set, and those renders become extra text
training views. Image augmentation selects pre-exported view records
(flip, random crops) out of the store; this module never touches pixels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .episodes import EpisodeSplit
from .errors import BadTemplate, MissingView
from .store import FeatureRecord, FeatureStore, Modality

PLACEHOLDER = "{cls}"

SOURCE_CLASSNAME = "classname"
SOURCE_SINGLE = "single"
SOURCE_HAND_ENGINEERED = "hand_engineered"
SOURCE_MINED_POOL = "mined_pool"


def _check_template(template: str) -> None:
    if template.count(PLACEHOLDER) != 1:
        raise BadTemplate(
            f"template {template!r} must contain exactly one {PLACEHOLDER!r}"
        )


@dataclass
class TemplatePool:
    templates: list[str]
    source: str = SOURCE_SINGLE

    def __post_init__(self):
        if not self.templates:
            raise BadTemplate("template pool is empty")
        for t in self.templates:
            _check_template(t)

    def __len__(self) -> int:
        return len(self.templates)

    @classmethod
    def classname(cls) -> "TemplatePool":
        """The bare-classname policy is the template '{cls}' itself."""
        return cls([PLACEHOLDER], SOURCE_CLASSNAME)

    @classmethod
    def single(cls, template: str = "a photo of a {cls}.") -> "TemplatePool":
        return cls([template], SOURCE_SINGLE)

    @classmethod
    def hand_engineered(cls, dataset: str) -> "TemplatePool":
        prompts = json.loads(
            resources.files("xmodal._data")
            .joinpath("hand_engineered_prompts.json")
            .read_text()
        )
        if dataset not in prompts:
            raise KeyError(
                f"no hand-engineered prompts for {dataset!r}; "
                f"known: {sorted(prompts)}"
            )
        return cls(prompts[dataset], SOURCE_HAND_ENGINEERED)

    @classmethod
    def mined_pool(cls) -> "TemplatePool":
        """The shipped 180-template mining pool."""
        text = (
            resources.files("xmodal._data").joinpath("templates_180.txt").read_text()
        )
        return cls([ln for ln in text.splitlines() if ln], SOURCE_MINED_POOL)

    @classmethod
    def from_file(cls, path, source: str = SOURCE_MINED_POOL) -> "TemplatePool":
        lines = [ln for ln in Path(path).read_text().splitlines() if ln]
        return cls(lines, source)


def apply_template(template: str, class_name: str) -> str:
    """Replace the placeholder verbatim; no case folding."""
    _check_template(template)
    return template.replace(PLACEHOLDER, class_name)


def mine_templates(
    per_template_val_accuracy: list[tuple[int, float]], k: int
) -> list[int]:
    """Ids of the K highest-accuracy templates; ties break toward the
    lower template index, and K beyond the pool returns the whole pool
    in accuracy order. Pure function of its input, no RNG."""
    if not per_template_val_accuracy:
        raise ValueError("accuracy list is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(per_template_val_accuracy, key=lambda ta: (-ta[1], ta[0]))
    return [tid for tid, _ in ranked[:k]]


def zero_shot_template_scores(
    text_store: FeatureStore,
    val_pairs: list,
    class_ids: list[int],
) -> list[tuple[int, float]]:
    """Validation accuracy of a zero-shot classifier built from each text
    view id alone — the mining signal. View ids index the template pool
    the text store was exported with."""
    from .evaluation import top1_accuracy
    from .heads import init_from_text

    view_ids = sorted(
        {r.view_id for r in text_store.select(modality=Modality.TEXT)}
    )
    scores = []
    for vid in view_ids:
        state = init_from_text(text_store, class_ids, view_ids=[vid])
        scores.append((vid, top1_accuracy(state, val_pairs)))
    return scores


VIEW_POLICIES = ("center_only", "plus_flip", "random_crops")


def parse_view_policy(policy: str) -> tuple[str, int]:
    """'center_only' | 'plus_flip' | 'random_crops:k' -> (name, extra views)."""
    if policy == "center_only":
        return "center_only", 0
    if policy == "plus_flip":
        return "plus_flip", 1
    if policy.startswith("random_crops:"):
        k = int(policy.split(":", 1)[1])
        if k < 1:
            raise ValueError("random_crops needs k >= 1")
        return "random_crops", k
    raise ValueError(f"unknown view policy {policy!r}")


def expand_views(
    episode: EpisodeSplit, store: FeatureStore, policy: str
) -> EpisodeSplit:
    """Add the policy's augmented view records for every train shot.

    view_id 0 is the canonical (center) view; ids 1..k are the exported
    augmented views. A missing view raises rather than silently
    degrading the requested augmentation.
    """
    _, extra = parse_view_policy(policy)
    if extra == 0:
        return episode
    by_key = {
        (r.sample_id, r.view_id): r
        for r in store.select(modality=episode.modality)
    }
    new_train = list(episode.train)
    for rec in episode.train:
        if rec.view_id != 0:
            continue
        for vid in range(1, extra + 1):
            view = by_key.get((rec.sample_id, vid))
            if view is None:
                raise MissingView(rec.sample_id, vid)
            # keep the episode's class tag (ids may have been remapped)
            new_train.append(
                FeatureRecord(
                    view.sample_id, rec.class_id, view.modality,
                    view.view_id, view.vector,
                )
            )
    return EpisodeSplit(
        new_train,
        episode.val,
        episode.test,
        episode.shots,
        episode.seed,
        episode.class_ids,
        episode.modality,
    )
