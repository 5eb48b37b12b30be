"""Plain SGD and Adam with non-finite-gradient protection.

``apply`` is functional: it returns fresh parameter arrays, so a reader
holding the old dict never observes a partial update. If any gradient entry
is NaN or Inf the whole update is skipped and the incident is counted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Params


def _all_finite(grads: Params) -> bool:
    return all(np.isfinite(g).all() for g in grads.values())


@dataclass
class SGD:
    lr: float = 1e-4
    skipped: int = 0

    def apply(self, params: Params, grads: Params) -> Params:
        if not _all_finite(grads):
            self.skipped += 1
            return params
        return {k: params[k] - self.lr * grads[k] for k in params}


@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    skipped: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    def apply(self, params: Params, grads: Params) -> Params:
        if not _all_finite(grads):
            self.skipped += 1
            return params
        if not self.m:
            self.m = {k: np.zeros_like(p) for k, p in params.items()}
            self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t += 1
        out: Params = {}
        bc1 = 1 - self.beta1 ** self.t
        bc2 = 1 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            out[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return SGD(lr=lr)
    if name == "adam":
        return Adam(lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")
