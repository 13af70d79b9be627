"""Feed-forward decoders: the two-hidden-layer MLP (binned or segmented input)
and the ridge-regression baseline."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .base import DecoderModel, uniform_init

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def dense(x, W, b):
    return x @ W.T + b


def batchnorm_forward(z, gain, shift, rmean, rvar, train, update_stats=True):
    if train:
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        if update_stats:
            n = z.shape[0]
            unbiased = var * n / max(n - 1, 1)
            rmean *= 1 - BN_MOMENTUM
            rmean += BN_MOMENTUM * mu
            rvar *= 1 - BN_MOMENTUM
            rvar += BN_MOMENTUM * unbiased
    else:
        mu, var = rmean, rvar
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (z - mu) * inv
    return gain * xhat + shift, (xhat, inv, train)


def batchnorm_backward(dy, gain, cache):
    xhat, inv, train = cache
    dgain = (dy * xhat).sum(axis=0)
    dshift = dy.sum(axis=0)
    dxhat = dy * gain
    if train:
        n = dy.shape[0]
        dz = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    else:
        dz = dxhat * inv
    return dz, dgain, dshift


class MLPDecoder(DecoderModel):
    """input -> 32 -> 48 -> 2, each hidden layer dense/batch-norm/ReLU/dropout."""

    kind = "NN"

    @classmethod
    def init(cls, n_inputs: int, seed: int = 0, hidden=(32, 48), dropout: float = 0.5, kind: str = "NN"):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD1]))
        sizes = [n_inputs, *hidden, 2]
        params, buffers = {}, {}
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            params[f"fc{i}.W"] = uniform_init(rng, (b, a), a)
            params[f"fc{i}.b"] = uniform_init(rng, (b,), a)
            if i < len(sizes) - 1:
                params[f"bn{i}.gain"] = np.ones(b, np.float32)
                params[f"bn{i}.shift"] = np.zeros(b, np.float32)
                buffers[f"bn{i}.running_mean"] = np.zeros(b, np.float32)
                buffers[f"bn{i}.running_var"] = np.ones(b, np.float32)
        model = MLP_KINDS[kind](params, buffers, {"n_inputs": n_inputs, "hidden": list(hidden), "dropout": dropout})
        return model

    @property
    def n_hidden_layers(self) -> int:
        return len(self.meta["hidden"])

    def forward(self, X, train=False, rng=None, dropout=None, update_stats=True, trace=None):
        """Batch forward; returns ``(out, cache)``.

        ``trace`` (a list) collects the input of every dense layer, which is
        what the op counter needs.
        """
        P, B = self.params, self.buffers
        X = np.asarray(X, dtype=self.dtype)
        self._check_width(X.shape[1])
        p = self.meta["dropout"] if dropout is None else dropout
        h = X
        layers = []
        for i in range(1, self.n_hidden_layers + 1):
            if trace is not None:
                trace.append(h)
            z = dense(h, P[f"fc{i}.W"], P[f"fc{i}.b"])
            a, bn_cache = batchnorm_forward(
                z, P[f"bn{i}.gain"], P[f"bn{i}.shift"], B[f"bn{i}.running_mean"], B[f"bn{i}.running_var"],
                train, update_stats,
            )
            r = np.maximum(a, 0)
            mask = None
            if train and p > 0:
                mask = (rng.random(r.shape) >= p).astype(r.dtype) / (1 - p)
                r = r * mask
            layers.append((h, bn_cache, a, mask))
            h = r
        last = self.n_hidden_layers + 1
        if trace is not None:
            trace.append(h)
        out = dense(h, P[f"fc{last}.W"], P[f"fc{last}.b"])
        return out, {"layers": layers, "h": h}

    def backward(self, cache, dout):
        self._require_cache(cache)
        P = self.params
        G = {}
        last = self.n_hidden_layers + 1
        h = cache["h"]
        G[f"fc{last}.W"] = dout.T @ h
        G[f"fc{last}.b"] = dout.sum(axis=0)
        dh = dout @ P[f"fc{last}.W"]
        for i in range(self.n_hidden_layers, 0, -1):
            x_in, bn_cache, a, mask = cache["layers"][i - 1]
            if mask is not None:
                dh = dh * mask
            da = dh * (a > 0)
            dz, G[f"bn{i}.gain"], G[f"bn{i}.shift"] = batchnorm_backward(da, P[f"bn{i}.gain"], bn_cache)
            G[f"fc{i}.W"] = dz.T @ x_in
            G[f"fc{i}.b"] = dz.sum(axis=0)
            dh = dz @ P[f"fc{i}.W"]
        return {k: G[k] for k in P}


class STMLPDecoder(MLPDecoder):
    """Same network over ``n_channels * b`` segmented-bin inputs."""

    kind = "ST_NN"


MLP_KINDS = {"NN": MLPDecoder, "ST_NN": STMLPDecoder}


class LinearDecoder(DecoderModel):
    kind = "LINEAR"

    def forward(self, X, train=False, rng=None, trace=None, **_):
        X = np.asarray(X, dtype=np.float64)
        self._check_width(X.shape[1])
        if trace is not None:
            trace.append(X)
        return X @ self.params["W"].T.astype(np.float64) + self.params["b"].astype(np.float64), None


def linear_fit(X: np.ndarray, Y: np.ndarray, ridge_lambda: float = 1e-3) -> LinearDecoder:
    """Closed-form ridge regression with an unpenalized intercept.

    Centering X and Y is equivalent to appending a ones column that is left
    out of the penalty.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        from ..errors import ConfigError

        raise ConfigError("linear_fit needs a non-empty training partition")
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    A = Xc.T @ Xc + ridge_lambda * np.eye(X.shape[1])
    if ridge_lambda == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise NumericError("normal equations are singular at ridge_lambda=0; use ridge_lambda > 0")
    try:
        W = np.linalg.solve(A, Xc.T @ Yc).T
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"ridge solve failed ({exc}); use ridge_lambda > 0") from None
    b = ym - W @ xm
    # parameters are kept in float64 so the closed form survives a round trip exactly in memory
    return LinearDecoder({"W": W, "b": b}, {}, {"n_inputs": X.shape[1], "ridge_lambda": ridge_lambda})
