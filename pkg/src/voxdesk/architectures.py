"""Desk-scale network definitions used by the cascade.

The first convolution spans every mel band, so it acts as a learned
filterbank-to-channel projection; later layers are strided temporal
convolutions. Pooling then averages over time only.
"""

from __future__ import annotations

from .nnet import Conv2D, Dense, GlobalAvgPool, L2Normalize, Model, ReLU

EMBED_DIM = 32


def _trunk(n_mels, channels):
    return [
        Conv2D(1, channels, (n_mels, 5)),
        ReLU(),
        Conv2D(channels, channels, (1, 5), stride=(1, 2)),
        ReLU(),
        Conv2D(channels, channels, (1, 5), stride=(1, 2)),
        ReLU(),
        GlobalAvgPool(),
    ]


def build_encoder(n_mels=40, n_frames=98, embed_dim=EMBED_DIM, channels=32, seed=0, name="encoder"):
    layers = _trunk(n_mels, channels) + [Dense(channels, embed_dim), L2Normalize()]
    return Model(layers, (1, n_mels, n_frames), rng_seed=seed, name=name)


def build_classifier(n_classes, n_mels=40, n_frames=98, channels=16, seed=0, name="classifier"):
    """Same trunk shape, ending in raw logits (softmax applied at inference)."""
    layers = _trunk(n_mels, channels) + [Dense(channels, n_classes)]
    return Model(layers, (1, n_mels, n_frames), rng_seed=seed, name=name)


def build_emotion_head(feature_dim, n_classes=8, seed=0, name="emotion_head"):
    return Model([Dense(feature_dim, n_classes)], (feature_dim,), rng_seed=seed, name=name)


def trunk_stop(encoder: Model) -> int:
    """Layer count up to and including global pooling."""
    return encoder.layer_index("global_avg_pool") + 1
