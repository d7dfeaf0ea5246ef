"""Attention-pooled OOD detection over corpora of token-embedding sequences."""

from .corpus import (
    BatchSampler,
    Corpus,
    EmbeddingSequence,
    Label,
    SamplerMode,
    load_corpus,
    split,
    write_corpus,
)
from .errors import (
    ApoodError,
    ArgumentError,
    DataError,
    DegenerateParamsError,
    DivergenceError,
    FormatError,
    IoError,
    NumericalError,
    ShapeError,
    StateError,
    TruncationError,
)
from .metrics import (
    EvalReport,
    auroc,
    auroc_pairwise,
    classify,
    evaluate,
    fpr_at_tpr,
)
from .model import (
    ApoodModel,
    ApoodParams,
    GradCheckReport,
    Hyperparams,
    distance_sq,
    freeze_model,
    grad_loss,
    gradient_check,
    load_model,
    loss_sup,
    loss_unsup,
    save_model,
    score,
    score_min,
    train,
)
from .pooling import (
    PooledHead,
    attn_pool_euclid,
    attn_pool_single,
    head_value,
    head_value_sequence_form,
    matrix_softmax,
    stream_attn_pool,
    stream_head_value,
)
from .toy import ToyConfig, ToyReport, generate_toy, run_toy_experiment

__version__ = "0.1.0"

__all__ = [
    "ApoodError", "ArgumentError", "DataError", "DegenerateParamsError",
    "DivergenceError", "FormatError", "IoError", "NumericalError",
    "ShapeError", "StateError", "TruncationError",
    "BatchSampler", "Corpus", "EmbeddingSequence", "Label", "SamplerMode",
    "load_corpus", "split", "write_corpus",
    "PooledHead", "attn_pool_euclid", "attn_pool_single", "head_value",
    "head_value_sequence_form", "matrix_softmax", "stream_attn_pool",
    "stream_head_value",
    "ApoodModel", "ApoodParams", "GradCheckReport", "Hyperparams",
    "distance_sq", "freeze_model", "grad_loss", "gradient_check",
    "load_model", "loss_sup", "loss_unsup", "save_model", "score",
    "score_min", "train",
    "EvalReport", "auroc", "auroc_pairwise", "classify", "evaluate",
    "fpr_at_tpr",
    "ToyConfig", "ToyReport", "generate_toy", "run_toy_experiment",
    "__version__",
]
