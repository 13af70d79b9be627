"""Single-cell LSTM decoder with a dense read-out, trained by BPTT."""

from __future__ import annotations

import numpy as np

from .base import DecoderModel, uniform_init


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTMDecoder(DecoderModel):
    """Gate order in the stacked weights is (input, forget, cell, output)."""

    kind = "LSTM"
    stateful = True

    @classmethod
    def init(cls, n_inputs: int, seed: int = 0, hidden: int = 32, dropout: float = 0.3):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x157]))
        H = hidden
        params = {
            "lstm.Wx": uniform_init(rng, (4 * H, n_inputs), H),
            "lstm.Wh": uniform_init(rng, (4 * H, H), H),
            "lstm.b": uniform_init(rng, (4 * H,), H),
            "head.W": uniform_init(rng, (2, H), H),
            "head.b": uniform_init(rng, (2,), H),
        }
        return cls(params, {}, {"n_inputs": n_inputs, "hidden": H, "dropout": dropout})

    @property
    def hidden(self) -> int:
        return int(self.meta["hidden"])

    def initial_state(self, batch: int):
        z = np.zeros((batch, self.hidden), dtype=self.dtype)
        return {"h": z, "c": z.copy()}

    def forward(self, X, state=None, train=False, rng=None, dropout=None):
        """X: (T, B, n_inputs). Returns per-step outputs (T, B, 2) and a cache
        whose ``"state"`` entry continues the sequence."""
        P = self.params
        X = np.asarray(X, dtype=self.dtype)
        T, B, F = X.shape
        self._check_width(F)
        H = self.hidden
        st = self.initial_state(B) if state is None else state
        h, c = st["h"], st["c"]
        Zx = np.matmul(X, P["lstm.Wx"].T) + P["lstm.b"]
        Wh_T = P["lstm.Wh"].T
        hs = np.empty((T, B, H), dtype=self.dtype)
        cs = np.empty((T, B, H), dtype=self.dtype)
        gates = np.empty((T, B, 4 * H), dtype=self.dtype)
        h_prev, c_prev = np.empty_like(hs), np.empty_like(cs)
        for t in range(T):
            h_prev[t], c_prev[t] = h, c
            z = Zx[t] + h @ Wh_T
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[t] = np.concatenate([i, f, g, o], axis=1)
            hs[t], cs[t] = h, c
        p = self.meta["dropout"] if dropout is None else dropout
        mask = None
        hd = hs
        if train and p > 0:
            mask = (rng.random(hs.shape) >= p).astype(hs.dtype) / (1 - p)
            hd = hs * mask
        out = hd @ P["head.W"].T + P["head.b"]
        cache = {"X": X, "hs": hs, "cs": cs, "gates": gates, "h_prev": h_prev, "c_prev": c_prev,
                 "mask": mask, "hd": hd, "state": {"h": h, "c": c}}
        return out, cache

    def backward(self, cache, dout):
        self._require_cache(cache)
        P = self.params
        X, cs, gates = cache["X"], cache["cs"], cache["gates"]
        T, B, F = X.shape
        H = self.hidden
        G = {}
        G["head.W"] = dout.reshape(T * B, 2).T @ cache["hd"].reshape(T * B, H)
        G["head.b"] = dout.sum(axis=(0, 1))
        dH = dout @ P["head.W"]
        if cache["mask"] is not None:
            dH = dH * cache["mask"]
        dZ = np.empty((T, B, 4 * H), dtype=dH.dtype)
        dh_next = np.zeros((B, H), dtype=dH.dtype)
        dc_next = np.zeros((B, H), dtype=dH.dtype)
        Wh = P["lstm.Wh"]
        for t in range(T - 1, -1, -1):
            i, f, g, o = (gates[t][:, k * H:(k + 1) * H] for k in range(4))
            dh = dH[t] + dh_next
            tc = np.tanh(cs[t])
            do = dh * tc
            dc = dh * o * (1 - tc * tc) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * cache["c_prev"][t]
            dc_next = dc * f
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dZ[t] = dz
            dh_next = dz @ Wh
        dZf = dZ.reshape(T * B, 4 * H)
        G["lstm.Wx"] = dZf.T @ X.reshape(T * B, F)
        G["lstm.Wh"] = dZf.T @ cache["h_prev"].reshape(T * B, H)
        G["lstm.b"] = dZf.sum(axis=0)
        return {k: G[k] for k in P}
