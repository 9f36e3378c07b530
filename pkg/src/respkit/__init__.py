"""Respiratory-cycle anomaly classification toolkit.

Pipeline pieces: ICBHI-style data ingestion, log-Mel / wavelet spectrogram
front ends, low-footprint inception networks, transfer-learning MLP heads,
KL-loss training, probability-product fusion, and ICBHI scoring.
"""

from respkit.dataio import (
    AudioClip,
    CycleRecord,
    Label,
    SplitAssignment,
    extract_cycle,
    fix_duration,
    make_split,
    parse_annotations,
)
from respkit.features import Spectrogram, SpectrogramKind, logmel, wavelet_scalogram
from respkit.augment import mixup_pair, spec_augment
from respkit.fusion import concat_embeddings, predict_label, prod_fusion
from respkit.metrics import ConfusionCounts, MetricsReport, confusion, icbhi_scores
from respkit.train import TrainConfig, kl_loss, train_model, train_mlp_on_embeddings

__all__ = [
    "AudioClip",
    "ConfusionCounts",
    "CycleRecord",
    "Label",
    "MetricsReport",
    "Spectrogram",
    "SpectrogramKind",
    "SplitAssignment",
    "TrainConfig",
    "concat_embeddings",
    "confusion",
    "extract_cycle",
    "fix_duration",
    "icbhi_scores",
    "kl_loss",
    "logmel",
    "make_split",
    "mixup_pair",
    "parse_annotations",
    "predict_label",
    "prod_fusion",
    "spec_augment",
    "train_model",
    "train_mlp_on_embeddings",
    "wavelet_scalogram",
]

__version__ = "0.1.0"
