"""Stateless numeric primitives: activations, masked softmax, sampling, losses.

Everything operates on plain numpy arrays and preserves the input dtype, so
the same code path runs in float32 for training and float64 for gradient
checks.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(x.dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x).astype(x.dtype, copy=False)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the valid entries only; masked entries come out exactly 0.

    Max-subtraction over the valid set keeps this finite for logit magnitudes
    up to at least 1e4. Requires >= 1 valid entry per row.
    """
    logits = np.asarray(logits)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if not mask.any(axis=-1).all():
        raise ValueError("masked_softmax: every row needs at least one valid entry")
    neg = np.finfo(logits.dtype).min
    z = np.where(mask, logits, neg)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy along the last axis; 0 * log 0 treated as 0."""
    p = np.asarray(probs)
    logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=-1)


def categorical_sample(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Draw an index from a 1-D distribution via a single uniform draw.

    Inverse-CDF with a cumulative sum keeps the draw reproducible across
    platforms for a given generator state.
    """
    p = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to the logits.

    Uses the log-sum-exp form, stable for large |logits|.
    """
    x = np.asarray(logits)
    t = np.asarray(targets)
    loss = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    grad = (sigmoid(x) - t) / x.size
    return float(loss.mean()), grad.astype(x.dtype, copy=False)
