"""Shared test utilities: finite-difference oracle and untrained cascades."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from voxdesk.architectures import build_classifier, build_emotion_head, build_encoder, trunk_stop
from voxdesk.dsp import AudioBuffer
from voxdesk.pipeline import CascadeBundle, StreamConfig
from voxdesk.synthcorpus import make_speaker, render_noise, render_utterance

EPS = 1e-4
REL_TOL = 1e-4
_TINY = 1e-7


def rel_error(analytic, numeric) -> float:
    """Largest element-wise relative error; elements where both sides are
    below 1e-7 in magnitude are compared absolutely instead."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.maximum(np.abs(a), np.abs(n))
    big = scale > _TINY
    rel = np.abs(a - n)[big] / scale[big]
    small_ok = bool(np.all(np.abs(a - n)[~big] < 1e-10))
    return float(rel.max(initial=0.0)) if small_ok else float("inf")


def numeric_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (modified in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def model_gradcheck(model, x, seed=0) -> dict:
    """Relative errors of every parameter gradient and the input gradient.

    The scalar loss is ``sum(w * model(x))`` with fixed random ``w``.
    """
    model = model.astype(np.float64)
    x = np.array(x, dtype=np.float64)
    out = model.forward(x, cache=False)
    w = np.random.default_rng(seed).normal(size=out.shape)

    def loss():
        return float(np.sum(w * model.forward(x, cache=False)))

    model.forward(x)
    grads = model.backward(w)
    model.forward(x)
    gx = model.input_gradient(w)
    errs = {name: rel_error(grads[name], numeric_grad(loss, model.params[name])) for name in grads}
    errs["input"] = rel_error(gx, numeric_grad(loss, x))
    return errs


def untrained_bundle(vad_bias=None, seed=0, n_mels=40, shared=False, with_emotion=True) -> CascadeBundle:
    """Random-weight cascade. ``vad_bias`` = +/-B forces speech/noise decisions."""
    cfg = StreamConfig()
    n_frames = cfg.n_frames
    vad = build_classifier(2, n_mels, n_frames, seed=seed + 1, name="vad")
    if vad_bias is not None:
        last = f"{len(vad.layers) - 1}.dense"
        vad.params[f"{last}.weight"][...] = 0.0
        vad.params[f"{last}.bias"][...] = np.array([vad_bias, -vad_bias], dtype=np.float32)
    gender = build_classifier(2, n_mels, n_frames, seed=seed + 2, name="gender")
    routes = ["shared"] if shared else ["male", "female"]
    encoders = {r: build_encoder(n_mels, n_frames, seed=seed + 10 + k, name=f"encoder_{r}") for k, r in enumerate(routes)}
    heads = {}
    if with_emotion:
        for k, r in enumerate(routes):
            enc = encoders[r]
            heads[r] = build_emotion_head(enc.shapes[trunk_stop(enc)][0], seed=seed + 20 + k)
    return CascadeBundle(vad, gender, encoders, heads, {}, feature_mean=-10.0, feature_std=5.0, config=cfg)


def speech_audio(f0=None, gender="male", duration_s=2.0, seed=0, emotion=None) -> AudioBuffer:
    spk = make_speaker(seed, gender)
    if f0 is not None:
        spk = replace(spk, f0_hz=float(f0))
    return render_utterance(spk, duration_s, emotion, seed=seed)


def noise_audio(kind="white", duration_s=2.0, seed=0) -> AudioBuffer:
    return render_noise(kind, duration_s, seed)
