"""Self-supervised causal Transformer change-point detection."""
from .labels import dilate, intrinsic_signals, label_smooth, pseudo_labels, triangular_smooth, zscore
from .model import (
    CPDConfig,
    CPDModel,
    ModelDivergenceError,
    boundary_probs,
    load_model,
    save_model,
    window_index,
)
from .segment import Accuracy, SegmentList, boundaries_from_probs, cpd_accuracy, segment, segment_probs
from .synthetic import (
    SyntheticSequence,
    evaluate_synthetic,
    mean_shift_sequence,
    synthetic_dataset,
    train_synthetic_detector,
)
from .train import (
    CPDTrainState,
    Tokenizer,
    Window,
    collate,
    cpd_loss,
    cpd_train_step,
    episode_windows,
    symlog,
)

__all__ = [name for name in dir() if not name.startswith("_")]
