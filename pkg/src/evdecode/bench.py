"""Decoding quality and resource accounting.

Effective operations follow sparsity-aware benchmarking conventions:

* dense layer: one MAC per (nonzero input, output) pair, one AC per bias
* LIF layer: one AC per (input spike, output) pair, no MACs
* LSTM: counted dense, every gate always active; gate and head biases are ACs
* batch-norm and activation functions are not counted (they fold into the
  adjacent affine maps at inference time)

Activation sparsity is the fraction of exact zeros among the inputs of all
weight layers. Memory traffic is a proxy: one parameter read per effective
operation, ``(MACs + ACs) * bits / 1000`` kilobits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .decoders import DecoderModel, OpCounter
from .decoders.train import predict
from .features import FeatureFrame
from .metrics import r2_score, r2_xy

__all__ = [
    "MetricsReport", "count_ops", "lstm_step_ops", "memory_traffic", "model_size", "r2_score", "r2_xy", "report",
]


@dataclass
class MetricsReport:
    r2_x: float
    r2_y: float
    r2_mean: float
    macs_per_inference: float
    acs_per_inference: float
    activation_sparsity: float
    memory_kb_per_inference: float
    model_size_kb: float
    compression_ratio: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["compression_ratio"] is not None and math.isinf(d["compression_ratio"]):
            d["compression_ratio"] = "inf"
        return d


def model_size(model: DecoderModel, bits_per_param: int = 32) -> float:
    """Kilobytes for every stored number: weights, biases, batch-norm
    gain/shift/running statistics, LIF beta/threshold and output scales."""
    return model.n_parameters(include_buffers=True) * bits_per_param / 8 / 1000


def memory_traffic(macs: float, acs: float = 0.0, bits_per_param: int = 32) -> float:
    return (macs + acs) * bits_per_param / 1000


def lstm_step_ops(n_inputs: int, hidden: int) -> tuple[int, int]:
    """(MACs, ACs) of one LSTM decoder step with a 2-unit read-out."""
    macs = 4 * hidden * (n_inputs + hidden) + hidden * 2
    acs = 4 * hidden + 2
    return macs, acs


def _dense_ops(inputs: list[np.ndarray], fan_outs: list[int]):
    macs = acs = zeros = total = 0
    n = inputs[0].shape[0]
    for h, fo in zip(inputs, fan_outs):
        nz = int(np.count_nonzero(h))
        macs += nz * fo
        acs += fo * n
        zeros += h.size - nz
        total += h.size
    return macs / n, acs / n, zeros / total


def count_ops(model: DecoderModel, ff: FeatureFrame) -> dict:
    """Effective MACs/ACs per inference (one output sample) and activation sparsity."""
    n = len(ff)
    if n == 0:
        return {"macs": 0.0, "acs": 0.0, "sparsity": 0.0, "multiplications": 0}
    kind = model.kind
    if kind in ("NN", "ST_NN", "LINEAR"):
        trace = []
        model.forward(ff.X, train=False, trace=trace)
        names = sorted((k for k in model.params if k.endswith(".W") or k == "W"), key=_layer_order)
        fan_outs = [model.params[k].shape[0] for k in names]
        macs, acs, sp = _dense_ops(trace, fan_outs)
        return {"macs": macs, "acs": acs, "sparsity": sp, "multiplications": macs}
    if kind == "LSTM":
        macs, acs = lstm_step_ops(model.n_inputs, model.hidden)
        return {"macs": float(macs), "acs": float(acs), "sparsity": 0.0, "multiplications": macs}
    if kind == "SNN":
        counter = OpCounter()
        _, cache = model.forward(ff.X[:, None, :], train=False, counter=counter)
        ins = [L["s_in"] for L in cache["layers"]]
        zeros = sum(x.size - np.count_nonzero(x) for x in ins)
        total = sum(x.size for x in ins)
        return {
            "macs": counter.macs / n,
            "acs": counter.acs / n,
            "sparsity": zeros / total,
            "multiplications": counter.mults,
        }
    raise ValueError(f"unknown model kind {kind!r}")


def _layer_order(name: str) -> int:
    return int(name[2:].split(".")[0]) if name.startswith("fc") else 0


def report(model: DecoderModel, ff: FeatureFrame, bits_per_param: int = 32, compression_ratio=None) -> MetricsReport:
    """Score ``model`` on ``ff`` (typically the test partition) and account its resources."""
    rx, ry, rm = r2_xy(ff.Y, predict(model, ff))
    ops = count_ops(model, ff)
    return MetricsReport(
        r2_x=rx,
        r2_y=ry,
        r2_mean=rm,
        macs_per_inference=ops["macs"],
        acs_per_inference=ops["acs"],
        activation_sparsity=ops["sparsity"],
        memory_kb_per_inference=memory_traffic(ops["macs"], ops["acs"], bits_per_param),
        model_size_kb=model_size(model, bits_per_param),
        compression_ratio=compression_ratio,
    )
