"""Cross-modal few-shot adaptation over precomputed multimodal embeddings.

Text labels and audio clips become extra training shots for a
temperature-scaled linear (or adapter-augmented) classifier in a shared
embedding space: an n-shot problem turns into an (n+1)-shot one.
"""
from .augment import TemplatePool, apply_template, expand_views, mine_templates
from .episodes import (
    EpisodeSplit,
    EscMatching,
    assemble_crossmodal_trainset,
    build_esc_episode,
    sample_episode,
)
from .evaluation import (
    EvalReport,
    EvalRow,
    emit_report,
    eval_shifted,
    pca_figure,
    top1_accuracy,
)
from .heads import (
    AdapterState,
    ClassifierState,
    adapter_forward,
    init_from_text,
    load_checkpoint,
    predict,
    representer_residual,
    save_checkpoint,
    wise_ft,
)
from .store import (
    FeatureRecord,
    FeatureStore,
    Modality,
    StoreManifest,
    normalize,
    read_store,
    write_store,
)
from .training import (
    TrainConfig,
    TrainResult,
    ce_loss,
    grid_search,
    loss_and_grad,
    lr_at,
    make_batches,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterState",
    "ClassifierState",
    "EpisodeSplit",
    "EscMatching",
    "EvalReport",
    "EvalRow",
    "FeatureRecord",
    "FeatureStore",
    "Modality",
    "StoreManifest",
    "TemplatePool",
    "TrainConfig",
    "TrainResult",
    "adapter_forward",
    "apply_template",
    "assemble_crossmodal_trainset",
    "build_esc_episode",
    "ce_loss",
    "emit_report",
    "eval_shifted",
    "expand_views",
    "grid_search",
    "init_from_text",
    "load_checkpoint",
    "loss_and_grad",
    "lr_at",
    "make_batches",
    "mine_templates",
    "normalize",
    "pca_figure",
    "predict",
    "read_store",
    "representer_residual",
    "sample_episode",
    "save_checkpoint",
    "top1_accuracy",
    "train",
    "wise_ft",
    "write_store",
]
