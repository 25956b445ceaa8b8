"""Minimal conv/dense network kernel with reverse-mode gradients."""

from .checkpoint import load, save
from .layers import Conv2D, Dense, GlobalAvgPool, L2Normalize, ReLU, Softmax, softmax
from .losses import TripletBatch, exp_triplet_loss, softmax_cross_entropy
from .model import Model
from .optim import clip_grad_norm, sgd_step

__all__ = [
    "Conv2D", "Dense", "GlobalAvgPool", "L2Normalize", "Model", "ReLU", "Softmax",
    "TripletBatch", "clip_grad_norm", "exp_triplet_loss", "load", "save", "sgd_step", "softmax",
    "softmax_cross_entropy",
]
