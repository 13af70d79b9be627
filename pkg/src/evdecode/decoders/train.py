"""Training loop and chronological inference for every decoder kind."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, NumericError
from ..features import DatasetSplit, FeatureFrame
from ..metrics import r2_xy
from .base import FEATURE_MODE, DecoderModel
from .lstm import LSTMDecoder
from .mlp import MLPDecoder, linear_fit
from .optim import AdamW, cosine_lr
from .snn import SNNDecoder

log = logging.getLogger(__name__)

DEFAULT_DROPOUT = {"NN": 0.5, "ST_NN": 0.5, "LSTM": 0.3, "SNN": 0.3}


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 0.005
    weight_decay: float = 0.05
    dropout: float | None = None
    batch_size: int = 512
    reaches_per_batch: int = 4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    surrogate_alpha: float = 2.0
    ridge_lambda: float = 1e-3

    def dropout_for(self, kind: str) -> float:
        return DEFAULT_DROPOUT.get(kind, 0.0) if self.dropout is None else self.dropout


def build_model(kind: str, n_inputs: int, cfg: TrainConfig, seed: int) -> DecoderModel:
    p = cfg.dropout_for(kind)
    if kind in ("NN", "ST_NN"):
        return MLPDecoder.init(n_inputs, seed, dropout=p, kind=kind)
    if kind == "LSTM":
        return LSTMDecoder.init(n_inputs, seed, dropout=p)
    if kind == "SNN":
        return SNNDecoder.init(n_inputs, seed, dropout=p, alpha=cfg.surrogate_alpha)
    raise ConfigError(f"no trainable network for kind {kind!r}")


def check_compatible(kind: str, ff: FeatureFrame) -> None:
    want = FEATURE_MODE[kind]
    have = ff.config.mode
    if kind == "LINEAR":
        if have == "binary":
            raise ConfigError("linear baseline expects count features, got binary")
        return
    if have != want:
        raise ConfigError(f"{kind} decoder needs {want} features, got {have}")


def mse(out, y, mask=None):
    """Mean squared error over valid samples and both outputs, and its gradient."""
    diff = out - y
    if mask is not None:
        diff = diff * mask[..., None]
        n = mask.sum()
    else:
        n = diff.shape[0]
    n = max(float(n), 1.0) * diff.shape[-1]
    return float((diff.astype(np.float64) ** 2).sum() / n), (2.0 / n) * diff


def pad_sequences(ff: FeatureFrame, groups, dtype):
    T = max(len(g) for g in groups)
    B = len(groups)
    X = np.zeros((T, B, ff.n_features), dtype=dtype)
    Y = np.zeros((T, B, 2), dtype=dtype)
    M = np.zeros((T, B), dtype=dtype)
    for b, g in enumerate(groups):
        X[: len(g), b] = ff.X[g]
        Y[: len(g), b] = ff.Y[g]
        M[: len(g), b] = 1
    return X, Y, M


def predict(model: DecoderModel, ff: FeatureFrame, state=None, return_state: bool = False):
    """Eval-mode predictions, shape (n, 2), float64.

    Stateful models see the frame as one chronological sequence starting from
    ``state`` (zeros when omitted).
    """
    check_compatible(model.kind, ff)
    if model.stateful:
        out, cache = model.forward(ff.X[:, None, :], state=state, train=False)
        pred = out[:, 0, :].astype(np.float64)
        return (pred, cache["state"]) if return_state else pred
    out, _ = model.forward(ff.X, train=False)
    pred = np.asarray(out, dtype=np.float64)
    return (pred, None) if return_state else pred


def evaluate(model: DecoderModel, ff: FeatureFrame) -> tuple[float, float, float]:
    return r2_xy(ff.Y, predict(model, ff))


def train(kind: str, ff: FeatureFrame, split: DatasetSplit, cfg: TrainConfig | None = None, seed: int = 0):
    """Fit a decoder; returns ``(model, log)`` with the best-validation checkpoint.

    The log has one entry per epoch with the learning rate, mean training loss
    and validation R2.
    """
    cfg = cfg or TrainConfig()
    check_compatible(kind, ff)
    tr_mask, va_mask = split.mask(ff.reach_ids, "train"), split.mask(ff.reach_ids, "val")
    if not tr_mask.any() or not va_mask.any():
        raise ConfigError("train and validation partitions must both contain samples")
    val = ff.subset(va_mask)
    meta_train = {"kind": kind, "seed": seed, "config": asdict(cfg), "features": asdict(ff.config)}

    if kind == "LINEAR":
        model = linear_fit(ff.X[tr_mask], ff.Y[tr_mask], cfg.ridge_lambda)
        model.meta["train"] = meta_train
        return model, [{"epoch": 0, "val_r2": evaluate(model, val)[2]}]

    model = build_model(kind, ff.n_features, cfg, seed)
    model.meta["train"] = meta_train
    opt = AdamW(model.params, cfg.lr, cfg.betas, cfg.eps, cfg.weight_decay, model.decay_keys())
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A1]))
    dtype = model.dtype

    if model.stateful:
        groups = ff.reaches(split.train)
        batches = [groups[i:i + cfg.reaches_per_batch] for i in range(0, len(groups), cfg.reaches_per_batch)]
        padded = [pad_sequences(ff, g, dtype) for g in batches]
    else:
        tr_idx = np.flatnonzero(tr_mask)
        Xtr = ff.X[tr_idx].astype(dtype)
        Ytr = ff.Y[tr_idx].astype(dtype)

    history = []
    best = (-np.inf, None, -1)
    for epoch in range(cfg.epochs):
        opt.lr = cosine_lr(cfg.lr, epoch, cfg.epochs)
        losses = []
        if model.stateful:
            for X, Y, M in padded:
                out, cache = model.forward(X, train=True, rng=rng)
                loss, dout = mse(out, Y, M)
                losses.append(loss)
                opt.step(model.backward(cache, dout.astype(dtype)))
        else:
            perm = rng.permutation(len(Xtr))
            for s in range(0, len(perm), cfg.batch_size):
                idx = perm[s:s + cfg.batch_size]
                if len(idx) < 2:
                    continue  # batch statistics need two samples
                out, cache = model.forward(Xtr[idx], train=True, rng=rng)
                loss, dout = mse(out, Ytr[idx])
                losses.append(loss)
                opt.step(model.backward(cache, dout.astype(dtype)))
        train_loss = float(np.mean(losses)) if losses else float("nan")
        if not np.isfinite(train_loss):
            raise NumericError(f"{kind} training diverged at epoch {epoch} (loss {train_loss})")
        val_r2 = evaluate(model, val)[2]
        history.append({"epoch": epoch, "lr": opt.lr, "train_loss": train_loss, "val_r2": val_r2})
        log.debug("%s epoch %d lr %.5f loss %.4f val R2 %.4f", kind, epoch, opt.lr, train_loss, val_r2)
        if val_r2 > best[0]:
            best = (val_r2, model.copy(), epoch)
    if best[1] is None:
        return model, history
    final = best[1]
    final.meta["train"]["best_epoch"] = best[2]
    return final, history
