"""Knowledge-grounded dialog pipeline: Python interface to the C++ core."""

from ._core import (
    binary_cross_entropy,
    binary_focal_loss,
    bleu_n,
    cosine,
    edit_distance,
    evaluate,
    filter_stats,
    focal_loss,
    gradcheck,
    ngrams,
    prf1,
    rouge_l,
    run_pipeline,
    tokenize,
    tune_threshold,
    validate_split,
    warmup_lr,
)

__all__ = [
    "binary_cross_entropy",
    "binary_focal_loss",
    "bleu_n",
    "cosine",
    "edit_distance",
    "evaluate",
    "filter_stats",
    "focal_loss",
    "gradcheck",
    "ngrams",
    "prf1",
    "rouge_l",
    "run_pipeline",
    "tokenize",
    "tune_threshold",
    "validate_split",
    "warmup_lr",
]
