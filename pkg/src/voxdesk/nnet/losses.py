"""Exponential triplet loss and softmax cross-entropy, with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError, PreconditionError
from .layers import softmax

UNIT_TOL = 1e-6


@dataclass
class TripletBatch:
    anchors: np.ndarray  # (T, D)
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=np.float64))
        self.positives = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        shapes = {self.anchors.shape, self.positives.shape, self.negatives.shape}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"triplet arrays differ in shape: {sorted(shapes)}")

    def __len__(self):
        return self.anchors.shape[0]


def cosine_distances_rowwise(a, b):
    return 1.0 - np.sum(a * b, axis=-1)


def exp_triplet_loss(batch: TripletBatch, margin=0.2, beta=1.0, check_unit=True):
    """Mean of ``exp(beta * (d_ap - d_an + margin))`` over triplets.

    ``d`` is cosine distance ``1 - a.b`` of unit vectors. Returns the loss and
    the gradients with respect to anchors, positives and negatives.
    """
    if len(batch) == 0 or batch.anchors.size == 0:
        raise InvalidArgumentError("empty triplet batch")
    if margin < 0 or beta <= 0:
        raise InvalidArgumentError(f"need margin >= 0 and beta > 0, got {margin}, {beta}")
    a, p, n = batch.anchors, batch.positives, batch.negatives
    if check_unit:
        for name, arr in (("anchors", a), ("positives", p), ("negatives", n)):
            norms = np.linalg.norm(arr, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_TOL):
                raise PreconditionError(f"{name} are not unit norm (max dev {np.max(np.abs(norms - 1)):.2e})")
    d_ap = cosine_distances_rowwise(a, p)
    d_an = cosine_distances_rowwise(a, n)
    terms = np.exp(beta * (d_ap - d_an + margin))
    t = len(batch)
    loss = float(np.mean(terms))
    w = (beta * terms / t)[:, None]
    # d d_ap / d a = -p, d d_an / d a = -n
    grad_a = w * (n - p)
    grad_p = -w * a
    grad_n = w * a
    return loss, (grad_a, grad_p, grad_n)


def softmax_cross_entropy(logits, label):
    """Cross-entropy of ``softmax(logits)`` against integer class labels.

    Accepts one logit vector with an int label, or a (B, K) batch with a label
    array; the batch loss is the mean and its gradient is scaled by 1/B.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None]
    labels = np.atleast_1d(np.asarray(label))
    k = z.shape[1]
    if labels.shape[0] != z.shape[0]:
        raise InvalidArgumentError("one label per logit row required")
    if not np.issubdtype(labels.dtype, np.integer) or np.any(labels < 0) or np.any(labels >= k):
        raise InvalidArgumentError(f"labels must be integers in [0, {k}), got {label!r}")
    if not np.all(np.isfinite(z)):
        raise InvalidArgumentError("logits must be finite")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(z.shape[0])
    losses = log_norm - shifted[rows, labels]
    grad = softmax(z)
    grad[rows, labels] -= 1.0
    b = z.shape[0]
    if single:
        return float(losses[0]), grad[0]
    return float(np.mean(losses)), grad / b
