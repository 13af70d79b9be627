"""AdamW with decoupled weight decay and a per-epoch cosine schedule."""

from __future__ import annotations

import math

import numpy as np


def cosine_lr(base_lr: float, epoch: int, n_epochs: int, min_lr: float = 0.0) -> float:
    return min_lr + 0.5 * (base_lr - min_lr) * (1 + math.cos(math.pi * epoch / n_epochs))


class AdamW:
    def __init__(self, params: dict, lr=0.005, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.05, decay_keys=None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay_keys = set(params if decay_keys is None else decay_keys)
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        self.t += 1
        if self.lr == 0:
            return
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k].astype(p.dtype, copy=False)
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if k in self.decay_keys and self.weight_decay:
                p *= 1 - self.lr * self.weight_decay
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
