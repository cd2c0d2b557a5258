"""Multivariate temporal autoencoder (MvTAe) built on hand-written numpy layers."""

from .dataset import (
    DatasetSplit,
    MultivariateSeries,
    NormParams,
    SeriesConfig,
    WindowSample,
    WindowSet,
    denormalize,
    generate_series,
    make_windows,
    normalize_target,
    normalize_window,
    split_dataset,
)
from .metrics import EvalSummary, evaluate
from .model import (
    AlphaParams,
    EncoderDecoderParams,
    MvTAe,
    TrainReport,
    alpha_forward,
    decode,
    encode,
    train_alpha,
    train_encoder_decoder,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaParams",
    "DatasetSplit",
    "EncoderDecoderParams",
    "EvalSummary",
    "MultivariateSeries",
    "MvTAe",
    "NormParams",
    "SeriesConfig",
    "TrainReport",
    "WindowSample",
    "WindowSet",
    "alpha_forward",
    "decode",
    "denormalize",
    "encode",
    "evaluate",
    "generate_series",
    "make_windows",
    "normalize_target",
    "normalize_window",
    "split_dataset",
    "train_alpha",
    "train_encoder_decoder",
]
