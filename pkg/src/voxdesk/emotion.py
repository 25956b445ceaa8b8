"""8-class emotion head on top of the speaker encoder's pooled features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .architectures import build_emotion_head, trunk_stop
from .errors import InvalidArgumentError, PreconditionError
from .errors import TrainingDivergenceError
from .nnet import Model, clip_grad_norm, sgd_step, softmax, softmax_cross_entropy
from .synthcorpus import EMOTIONS

SUM_TOL = 1e-9


@dataclass(frozen=True)
class EmotionDistribution:
    """Probabilities in the fixed order of :data:`EMOTIONS`."""

    probabilities: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.probabilities)
        if len(p) != len(EMOTIONS):
            raise InvalidArgumentError(f"expected {len(EMOTIONS)} probabilities, got {len(p)}")
        if any(not 0.0 <= v <= 1.0 for v in p) or abs(sum(p) - 1.0) > SUM_TOL:
            raise InvalidArgumentError(f"not a probability distribution: {p}")
        object.__setattr__(self, "probabilities", p)

    @property
    def top(self) -> str:
        return EMOTIONS[int(np.argmax(self.probabilities))]

    def __getitem__(self, name: str) -> float:
        return self.probabilities[EMOTIONS.index(name)]

    def as_dict(self) -> dict:
        return dict(zip(EMOTIONS, self.probabilities))


def _distribution(logits) -> EmotionDistribution:
    p = softmax(np.asarray(logits, dtype=np.float64))
    p = p / p.sum()
    return EmotionDistribution(tuple(p))


def trunk_features(trunk: Model, x: np.ndarray) -> np.ndarray:
    return trunk.forward(x, stop=trunk_stop(trunk), cache=False)


def classify_emotion(window, trunk: Model, head: Model, bundle=None, vad: str = "speech") -> EmotionDistribution:
    if vad != "speech":
        raise PreconditionError("emotion classification requires a speech window")
    x = bundle.normalize(window.mel_patch) if bundle is not None else window.mel_patch[None]
    feats = trunk_features(trunk, x)
    return _distribution(np.ravel(head.forward(feats, cache=False)))


def train_emotion_head(
    trunk: Model,
    patches: np.ndarray,
    labels: np.ndarray,
    epochs: int = 40,
    lr: float = 0.05,
    batch_size: int = 16,
    seed: int = 0,
    freeze_trunk: bool = True,
    head: Model | None = None,
    clip_norm: float | None = 1.0,
    log=None,
):
    """Fit a dense softmax head on trunk features; returns ``(head, losses)``.

    With ``freeze_trunk`` the trunk is never written to. Otherwise it is
    fine-tuned jointly, in place. Gradients of head and trunk are clipped to a
    joint norm of ``clip_norm``; plain SGD on the full stack diverges without it.
    """
    stop = trunk_stop(trunk)
    feat_dim = trunk.shapes[stop][0]
    head = head or build_emotion_head(feat_dim, len(EMOTIONS), seed=seed)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    losses = []
    cached = trunk_features(trunk, patches) if freeze_trunk else None
    for epoch in range(epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for a in range(0, len(order), batch_size):
            idx = order[a : a + batch_size]
            if freeze_trunk:
                feats = cached[idx]
            else:
                feats = trunk.forward(patches[idx], stop=stop)
            logits = head.forward(feats)
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergenceError(f"{head.name}: non-finite logits at epoch {epoch + 1}")
            loss, g = softmax_cross_entropy(logits, labels[idx])
            head_grads = head.backward(g)
            trunk_grads = {} if freeze_trunk else trunk.backward(head.input_gradient(g))
            clip_grad_norm([*head_grads.values(), *trunk_grads.values()], clip_norm)
            sgd_step(head.params, head_grads, lr)
            if trunk_grads:
                sgd_step(trunk.params, trunk_grads, lr)
            total += loss * len(idx)
        losses.append(total / len(labels))
        if log:
            log(f"emotion epoch {epoch + 1}/{epochs} loss {losses[-1]:.4f}")
    return head, losses
