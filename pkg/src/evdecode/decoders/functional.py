"""Function-style entry points over the decoder classes.

Single samples may be passed as 1-D vectors and single sequences as
``(T, n_inputs)`` arrays; outputs drop the added batch axis again.
"""

from __future__ import annotations

import numpy as np

from .base import DecoderModel


def _check_kind(model: DecoderModel, *kinds: str) -> None:
    if model.kind not in kinds:
        raise TypeError(f"expected a {' or '.join(kinds)} model, got {model.kind}")


def _dense(model, X, train_mode, rng):
    X = np.asarray(X)
    single = X.ndim == 1
    out, cache = model.forward(X[None] if single else X, train=train_mode, rng=rng)
    return (out[0] if single else out), cache


def forward_nn(model, X, train_mode=False, rng=None):
    """``(V, cache)`` for an NN model; ``V`` has shape (2,) or (N, 2)."""
    _check_kind(model, "NN")
    return _dense(model, X, train_mode, rng)


def forward_stnn(model, X, train_mode=False, rng=None):
    _check_kind(model, "ST_NN")
    return _dense(model, X, train_mode, rng)


def _sequence(model, X_sequence, state, **kw):
    X = np.asarray(X_sequence)
    single = X.ndim == 2
    out, cache = model.forward(X[:, None, :] if single else X, state=state, **kw)
    return (out[:, 0] if single else out), cache["state"]


def forward_lstm(model, X_sequence, state=None):
    """Per-step outputs and the state that continues the sequence."""
    _check_kind(model, "LSTM")
    return _sequence(model, X_sequence, state)


def forward_snn(model, X_sequence, state=None):
    """Per-step outputs and the membrane/spike state after the last step."""
    _check_kind(model, "SNN")
    return _sequence(model, X_sequence, state)


def backward(model, cache, dout):
    """Parameter gradients for the forward pass that produced ``cache``."""
    return model.backward(cache, dout)
