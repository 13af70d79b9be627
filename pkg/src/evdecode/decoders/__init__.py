"""Trainable decoders on a small numpy core with hand-written gradients."""

from .base import FEATURE_MODE, KINDS, STATEFUL, DecoderModel, load_model, save_model
from .functional import backward, forward_lstm, forward_nn, forward_snn, forward_stnn
from .lstm import LSTMDecoder
from .mlp import LinearDecoder, MLPDecoder, STMLPDecoder, linear_fit
from .snn import LIFLayer, OpCounter, SNNDecoder, lif_step, surrogate_grad
from .train import TrainConfig, build_model, predict, train


def registry():
    return {"NN": MLPDecoder, "ST_NN": STMLPDecoder, "LSTM": LSTMDecoder, "SNN": SNNDecoder, "LINEAR": LinearDecoder}


__all__ = [
    "FEATURE_MODE", "KINDS", "STATEFUL", "DecoderModel", "LIFLayer", "LSTMDecoder", "LinearDecoder", "MLPDecoder",
    "OpCounter", "SNNDecoder", "STMLPDecoder", "TrainConfig", "backward", "build_model", "forward_lstm", "forward_nn", "forward_snn",
    "forward_stnn", "lif_step", "linear_fit",
    "load_model", "predict", "registry", "save_model", "surrogate_grad", "train",
]
