"""Evaluation protocols, macro F1 and the statistics used to compare methods."""

from senres.eval.metrics import (
    StatReport,
    WilcoxonResult,
    compare,
    confidence_limits_95,
    mean_f1,
    render_table,
    signed_rank_distribution,
    stat_report,
    verdict,
    wilcoxon_signed_rank,
)
from senres.eval.protocols import (
    EvalConfig,
    batch_size_for,
    check_encoder,
    derived_seed,
    encode_in_batches,
    evaluate,
    expand_with_augmentation,
    fine_tune,
    linear_evaluate,
    predict,
    train_supervised,
)
from senres.manifest import RunManifest

__all__ = [
    "EvalConfig", "RunManifest", "StatReport", "WilcoxonResult", "batch_size_for", "check_encoder", "compare",
    "confidence_limits_95", "derived_seed", "encode_in_batches", "evaluate", "expand_with_augmentation",
    "fine_tune", "linear_evaluate", "mean_f1", "predict", "render_table", "signed_rank_distribution", "stat_report",
    "train_supervised", "verdict", "wilcoxon_signed_rank",
]
