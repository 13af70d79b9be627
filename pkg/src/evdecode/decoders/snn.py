"""Leaky integrate-and-fire decoder.

Membrane update per step (drive ``I = W x``)::

    pre  = beta * U[t-1] + I[t]
    U[t] = pre - S[t-1] * theta,   theta = pre (reset-to-zero) or 0 (no reset)
    S[t] = 1 if U[t] > U_thr else 0

The reset term is treated as a constant during backpropagation and the spike
nonlinearity uses the arctangent surrogate derivative. ``beta`` is learned
through a logit so it stays in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError
from .base import DecoderModel, uniform_init
from .lstm import sigmoid

RESET_TO_ZERO = "reset_to_zero"
NO_RESET = "no_reset"


def surrogate_grad(v, alpha: float = 2.0):
    """Arctangent surrogate: derivative of ``arctan(pi*alpha*v/2)/pi``."""
    return (alpha / 2) / (1 + (np.pi * alpha * np.asarray(v) / 2) ** 2)


def smooth_spike(v, alpha: float = 2.0):
    """The function whose exact derivative is :func:`surrogate_grad`."""
    return 0.5 + np.arctan(np.pi * alpha * np.asarray(v) / 2) / np.pi


def heaviside_spike(v, alpha: float = 2.0):
    return (np.asarray(v) > 0).astype(np.asarray(v).dtype)


def lif_update(U_prev, S_prev, drive, beta, u_thr, reset_mode, spike_fn=heaviside_spike, alpha=2.0, reset=None):
    """One membrane step; returns ``(U, S, reset_term)``.

    ``reset`` overrides the subtracted reset term (used to hold it fixed in
    finite-difference checks).
    """
    pre = beta * U_prev + drive
    if reset is None:
        reset = S_prev * pre if reset_mode == RESET_TO_ZERO else np.zeros_like(pre)
    U = pre - reset
    S = spike_fn(U - u_thr, alpha)
    return U, S, reset


@dataclass
class LIFLayer:
    W: np.ndarray
    beta: float
    u_thr: float
    reset_mode: str = RESET_TO_ZERO
    U: np.ndarray = field(default=None)
    S: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise DomainError("beta must lie in (0, 1)")
        n = self.W.shape[0]
        if self.U is None:
            self.U = np.zeros(n)
        if self.S is None:
            self.S = np.zeros(n)


def lif_step(layer: LIFLayer, x_t) -> tuple[np.ndarray, np.ndarray]:
    """Advance ``layer`` by one step on input ``x_t``; returns (spikes, U)."""
    drive = layer.W @ np.asarray(x_t, dtype=layer.W.dtype)
    U, S, _ = lif_update(layer.U, layer.S, drive, layer.beta, layer.u_thr, layer.reset_mode)
    layer.U, layer.S = U, S
    return S, U


class OpCounter:
    def __init__(self):
        self.macs = 0
        self.acs = 0
        self.mults = 0


class SNNDecoder(DecoderModel):
    kind = "SNN"
    stateful = True

    @classmethod
    def init(cls, n_inputs: int, seed: int = 0, hidden=(32, 48), dropout: float = 0.3, alpha: float = 2.0,
             beta=(0.9, 0.9, 0.95), threshold: float = 1.0, weight_gain=(6.0, 3.0, 1.0)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
        sizes = [n_inputs, *hidden, 2]
        params = {}
        n_layers = len(sizes) - 1
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            params[f"fc{i}.W"] = uniform_init(rng, (b, a), a, gain=weight_gain[i - 1])
            params[f"lif{i}.beta_logit"] = np.array([np.log(beta[i - 1] / (1 - beta[i - 1]))], np.float32)
            params[f"lif{i}.threshold"] = np.array([threshold], np.float32)
        params["out.scale"] = np.ones(2, np.float32)
        resets = [RESET_TO_ZERO] * (n_layers - 1) + [NO_RESET]
        meta = {"n_inputs": n_inputs, "hidden": list(hidden), "dropout": dropout, "alpha": alpha, "resets": resets}
        return cls(params, {}, meta)

    @property
    def n_layers(self) -> int:
        return len(self.meta["hidden"]) + 1

    def betas(self):
        return [sigmoid(self.params[f"lif{i}.beta_logit"][0]) for i in range(1, self.n_layers + 1)]

    def initial_state(self, batch: int):
        st = {}
        for i in range(1, self.n_layers + 1):
            n = self.params[f"fc{i}.W"].shape[0]
            st[f"U{i}"] = np.zeros((batch, n), dtype=self.dtype)
            st[f"S{i}"] = np.zeros((batch, n), dtype=self.dtype)
        return st

    def forward(self, X, state=None, train=False, rng=None, dropout=None, smooth=False, frozen_reset=None,
                counter: OpCounter | None = None, check_binary=True):
        """X: (T, B, n_inputs) binary. Returns per-step outputs (T, B, 2) and a cache.

        With ``counter`` the input-weight accumulation is done as selective
        column sums over active inputs and tallied as ACs; no multiplication
        touches the weights on that path.
        """
        P = self.params
        X = np.asarray(X, dtype=self.dtype)
        T, B, F = X.shape
        self._check_width(F)
        if check_binary and not smooth and X.size and not np.all((X == 0) | (X == 1)):
            raise DomainError("SNN input must be binary")
        alpha = self.meta["alpha"]
        spike_fn = smooth_spike if smooth else heaviside_spike
        p = self.meta["dropout"] if dropout is None else dropout
        st = self.initial_state(B) if state is None else state
        new_state = {}
        layers = []
        s_in = X
        for i in range(1, self.n_layers + 1):
            W = P[f"fc{i}.W"]
            beta = sigmoid(P[f"lif{i}.beta_logit"][0])
            thr = P[f"lif{i}.threshold"][0]
            mode = self.meta["resets"][i - 1]
            if counter is not None:
                drive = _selective_drive(s_in, W, counter)
            else:
                # stacked per-step products keep each step independent of the sequence length
                drive = np.matmul(s_in, W.T)
            U, S = st[f"U{i}"], st[f"S{i}"]
            Us = np.empty_like(drive)
            Uprev = np.empty_like(drive)
            Ss = np.empty_like(drive)
            Rs = np.empty_like(drive)
            fr = None if frozen_reset is None else frozen_reset[i - 1]
            for t in range(T):
                Uprev[t] = U
                U, S, R = lif_update(U, S, drive[t], beta, thr, mode, spike_fn, alpha, None if fr is None else fr[t])
                Us[t], Ss[t], Rs[t] = U, S, R
            new_state[f"U{i}"], new_state[f"S{i}"] = U, S
            mask = None
            out_spikes = Ss
            if train and p > 0 and i < self.n_layers:
                mask = (rng.random(Ss.shape) >= p).astype(Ss.dtype) / (1 - p)
                out_spikes = Ss * mask
            layers.append({"s_in": s_in, "U": Us, "Uprev": Uprev, "S": Ss, "reset": Rs, "mask": mask,
                           "beta": beta, "thr": thr})
            s_in = out_spikes
        U_last = layers[-1]["U"]
        out = P["out.scale"] * U_last
        return out, {"layers": layers, "state": new_state, "smooth": smooth}

    def backward(self, cache, dout):
        self._require_cache(cache)
        P = self.params
        alpha = self.meta["alpha"]
        layers = cache["layers"]
        G = {}
        U_last = layers[-1]["U"]
        G["out.scale"] = (dout * U_last).sum(axis=(0, 1))
        direct = dout * P["out.scale"]  # dL/dU of the last layer, from the read-out
        for i in range(self.n_layers, 0, -1):
            L = layers[i - 1]
            beta, thr = L["beta"], L["thr"]
            if i < self.n_layers:
                # gradient arrives through this layer's spikes
                gs = surrogate_grad(L["U"] - thr, alpha)
                dS = direct
                G[f"lif{i}.threshold"] = np.array([-(gs * dS).sum()], dtype=P[f"lif{i}.threshold"].dtype)
                a = gs * dS
            else:
                G[f"lif{i}.threshold"] = np.zeros_like(P[f"lif{i}.threshold"])
                a = direct
            dU = np.empty_like(a)
            carry = np.zeros_like(a[0])
            for t in range(a.shape[0] - 1, -1, -1):
                carry = a[t] + beta * carry
                dU[t] = carry
            dbeta = (dU * L["Uprev"]).sum()
            G[f"lif{i}.beta_logit"] = np.array([dbeta * beta * (1 - beta)], dtype=P[f"lif{i}.beta_logit"].dtype)
            T, B, n = dU.shape
            s_in = L["s_in"]
            G[f"fc{i}.W"] = dU.reshape(T * B, n).T @ s_in.reshape(T * B, -1)
            if i > 1:
                d_in = (dU.reshape(T * B, n) @ P[f"fc{i}.W"]).reshape(T, B, -1)
                prev_mask = layers[i - 2]["mask"]
                direct = d_in if prev_mask is None else d_in * prev_mask
        return {k: G[k] for k in P}


def _selective_drive(s_in, W, counter: OpCounter):
    """W @ s for binary s as a sum over the weight columns of active inputs."""
    T, B, _ = s_in.shape
    out = np.zeros((T, B, W.shape[0]), dtype=W.dtype)
    Wt = np.ascontiguousarray(W.T)
    for t in range(T):
        for b in range(B):
            active = np.flatnonzero(s_in[t, b])
            if len(active):
                out[t, b] = Wt[active].sum(axis=0)
                counter.acs += len(active) * W.shape[0]
    return out
