from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError, TrainingDivergenceError


def sgd_step(params: dict, grads: dict, lr: float) -> dict:
    """In-place ``p -= lr * g``; parameters without a gradient are left alone."""
    if not lr > 0:
        raise InvalidArgumentError(f"learning rate must be positive, got {lr}")
    unknown = set(grads) - set(params)
    if unknown:
        raise InvalidArgumentError(f"gradients for unknown parameters: {sorted(unknown)}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingDivergenceError(
                f"non-finite gradient for {name}: {bad} of {np.size(g)} entries"
            )
    for name, g in grads.items():
        p = params[name]
        p -= np.asarray(lr * g, dtype=p.dtype)
    return params


def clip_grad_norm(grads, max_norm: float | None) -> float:
    """Scale gradients in place so their joint L2 norm is at most ``max_norm``.

    ``grads`` is a dict or a list of arrays. Returns the norm before clipping;
    ``None`` disables clipping.
    """
    arrays = list(grads.values()) if isinstance(grads, dict) else list(grads)
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in arrays)))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in arrays:
            g *= scale
    return total
