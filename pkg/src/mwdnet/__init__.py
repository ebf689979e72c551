"""Trainable multilevel wavelet decomposition with classification and forecasting heads."""
from .config import TrainConfig, default_levels, rng_stream
from .mlstm import MlstmModel, build_mlstm, predict, train_mlstm
from .mwdn import MwdnStack, build_stack, mwdn_backward, mwdn_forward, regularization_penalty
from .oracle import SubSeriesSet, WaveletFilterPair, db4_filters, mdwd_decompose
from .rcf import RcfModel, build_rcf, rcf_predict, rcf_predict_proba, train_rcf

__version__ = "0.1.0"

__all__ = [
    "MlstmModel",
    "MwdnStack",
    "RcfModel",
    "SubSeriesSet",
    "TrainConfig",
    "WaveletFilterPair",
    "build_mlstm",
    "build_rcf",
    "build_stack",
    "db4_filters",
    "default_levels",
    "mdwd_decompose",
    "mwdn_backward",
    "mwdn_forward",
    "predict",
    "rcf_predict",
    "rcf_predict_proba",
    "regularization_penalty",
    "rng_stream",
    "train_mlstm",
    "train_rcf",
]
