"""Streaming cascade: energy gate -> speech/noise -> gender -> speaker embedding.

Windows are 1 s of log-mel frames taken every 0.5 s. Learned stages only run
on windows that pass the energy gate, and each stage only runs when the one
before it says the window is speech.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dsp import AudioBuffer, FrameConfig, log_mel_frames, rms_dbfs
from .emotion import EmotionDistribution, classify_emotion
from .errors import EmptyInputError, ModelError, PreconditionError
from .nnet import Model

VAD_CLASSES = ("speech", "noise")
GENDER_CLASSES = ("male", "female")
SHARED = "shared"


@dataclass(frozen=True)
class StreamConfig:
    frame: FrameConfig = FrameConfig()
    sample_rate_hz: int = 16000
    window_s: float = 1.0
    hop_s: float = 0.5
    gate_threshold_dbfs: float = -60.0

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.sample_rate_hz))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_s * self.sample_rate_hz))

    @property
    def n_frames(self) -> int:
        return (self.window_samples - self.frame.window_len_samples) // self.frame.hop_len_samples + 1

    def n_windows(self, n_samples: int) -> int:
        if n_samples < self.window_samples:
            return 0
        return (n_samples - self.window_samples) // self.hop_samples + 1


@dataclass
class FrameWindow:
    mel_patch: np.ndarray  # (n_mels, n_frames)
    start_time_s: float
    rms_dbfs: float


class Decision(NamedTuple):
    label: str
    p: float
    probabilities: tuple


@dataclass
class FrameAnnotation:
    window: FrameWindow
    vad: str
    vad_p: float
    gated: bool = False
    gender: str | None = None
    gender_p: float | None = None
    embedding: np.ndarray | None = None
    emotion: EmotionDistribution | None = None
    latency_s: float = 0.0
    # filled in by diarization
    speaker_id: str | None = None
    speaker_p: float | None = None

    @property
    def is_speech(self) -> bool:
        return self.vad == "speech"

    @property
    def start_time_s(self) -> float:
        return self.window.start_time_s


@dataclass
class CascadeBundle:
    """Everything needed to run the cascade on raw audio."""

    vad: Model
    gender: Model
    encoders: dict  # gender label (or "shared") -> encoder Model
    emotion_heads: dict = field(default_factory=dict)
    emotion_trunks: dict = field(default_factory=dict)  # empty: heads sit on the speaker encoders
    feature_mean: float = 0.0
    feature_std: float = 1.0
    config: StreamConfig = StreamConfig()
    versions: dict = field(default_factory=dict)

    def encoder_for(self, gender: str | None) -> Model:
        model = self.encoders.get(gender) or self.encoders.get(SHARED)
        if model is None:
            raise ModelError(f"no encoder for gender route {gender!r}")
        return model

    def emotion_head_for(self, gender: str | None) -> Model | None:
        return self.emotion_heads.get(gender) or self.emotion_heads.get(SHARED)

    def emotion_trunk_for(self, gender: str | None) -> Model:
        trunk = self.emotion_trunks.get(gender) or self.emotion_trunks.get(SHARED)
        return trunk if trunk is not None else self.encoder_for(gender)

    def normalize(self, patch: np.ndarray) -> np.ndarray:
        return ((patch - self.feature_mean) / self.feature_std)[None]


def make_window(samples: np.ndarray, start_time_s: float, cfg: StreamConfig) -> FrameWindow:
    audio = AudioBuffer(samples, cfg.sample_rate_hz)
    spec = log_mel_frames(audio, cfg.frame)
    return FrameWindow(spec.frames.T.copy(), float(start_time_s), rms_dbfs(samples))


def iter_windows(audio: AudioBuffer, cfg: StreamConfig):
    if audio.samples.size < cfg.window_samples:
        raise EmptyInputError(
            f"audio is {audio.duration_s:.3f} s, shorter than one {cfg.window_s} s window"
        )
    for i in range(cfg.n_windows(audio.samples.size)):
        a = i * cfg.hop_samples
        yield make_window(audio.samples[a : a + cfg.window_samples], a / cfg.sample_rate_hz, cfg)


def energy_gate(window: FrameWindow, threshold_dbfs: float = -60.0) -> str:
    return "rejected" if window.rms_dbfs < threshold_dbfs else "candidate"


def _decide(model: Model, x: np.ndarray, classes) -> Decision:
    if model.output_shape != (len(classes),):
        raise ModelError(f"{model.name}: expected {len(classes)} outputs, model has {model.output_shape}")
    try:
        probs = model.predict_proba(x)
    except ValueError as exc:
        raise ModelError(f"{model.name}: {exc}") from exc
    k = int(np.argmax(probs))
    return Decision(classes[k], float(probs[k]), tuple(float(p) for p in probs))


def classify_vad(window: FrameWindow, model: Model, bundle: CascadeBundle | None = None) -> Decision:
    x = bundle.normalize(window.mel_patch) if bundle else window.mel_patch[None]
    return _decide(model, x, VAD_CLASSES)


def classify_gender(window: FrameWindow, model: Model, bundle: CascadeBundle | None = None, vad: str = "speech") -> Decision:
    if vad != "speech":
        raise PreconditionError("gender classification requires a speech window")
    x = bundle.normalize(window.mel_patch) if bundle else window.mel_patch[None]
    return _decide(model, x, GENDER_CLASSES)


def embed_frame(window: FrameWindow, encoder: Model, bundle: CascadeBundle | None = None, vad: str = "speech") -> np.ndarray:
    if vad != "speech":
        raise PreconditionError("embedding requires a speech window")
    x = bundle.normalize(window.mel_patch) if bundle else window.mel_patch[None]
    try:
        e = encoder.forward(x, cache=False)
    except ValueError as exc:
        raise ModelError(f"{encoder.name}: {exc}") from exc
    return np.asarray(e, dtype=np.float64)


def annotate_window(window: FrameWindow, bundle: CascadeBundle, with_emotion: bool = True) -> FrameAnnotation:
    t0 = time.perf_counter()
    cfg = bundle.config
    if energy_gate(window, cfg.gate_threshold_dbfs) == "rejected":
        ann = FrameAnnotation(window, "noise", 1.0, gated=True)
    else:
        vad = classify_vad(window, bundle.vad, bundle)
        ann = FrameAnnotation(window, vad.label, vad.p)
        if vad.label == "speech":
            g = classify_gender(window, bundle.gender, bundle)
            ann.gender, ann.gender_p = g.label, g.p
            encoder = bundle.encoder_for(g.label)
            ann.embedding = embed_frame(window, encoder, bundle)
            head = bundle.emotion_head_for(g.label)
            if with_emotion and head is not None:
                ann.emotion = classify_emotion(window, bundle.emotion_trunk_for(g.label), head, bundle)
    ann.latency_s = time.perf_counter() - t0
    return ann


class StreamProcessor:
    """Incremental cascade: push sample chunks, receive annotations in order."""

    def __init__(self, bundle: CascadeBundle, with_emotion: bool = True):
        self.bundle = bundle
        self.with_emotion = with_emotion
        self._buffer = np.zeros(0)
        self._consumed = 0  # absolute sample index of _buffer[0]
        self._next_start = 0

    def push(self, samples) -> list[FrameAnnotation]:
        cfg = self.bundle.config
        self._buffer = np.concatenate([self._buffer, np.asarray(samples, dtype=np.float64)])
        out = []
        while self._next_start + cfg.window_samples <= self._consumed + self._buffer.size:
            a = self._next_start - self._consumed
            chunk = self._buffer[a : a + cfg.window_samples]
            window = make_window(chunk, self._next_start / cfg.sample_rate_hz, cfg)
            out.append(annotate_window(window, self.bundle, self.with_emotion))
            self._next_start += cfg.hop_samples
        drop = self._next_start - self._consumed
        if drop > 0:
            self._buffer = self._buffer[drop:]
            self._consumed += drop
        return out


def process_stream(audio: AudioBuffer, bundle: CascadeBundle, with_emotion: bool = True, chunk_s: float | None = None) -> list[FrameAnnotation]:
    """Annotate every 1 s window (0.5 s hop) of ``audio`` in time order.

    With ``chunk_s`` set, the audio is fed to a :class:`StreamProcessor` in
    chunks of that length instead of all at once.
    """
    cfg = bundle.config
    if audio.samples.size < cfg.window_samples:
        raise EmptyInputError(
            f"audio is {audio.duration_s:.3f} s, shorter than one {cfg.window_s} s window"
        )
    proc = StreamProcessor(bundle, with_emotion)
    if chunk_s is None:
        return proc.push(audio.samples)
    step = max(1, int(math.ceil(chunk_s * cfg.sample_rate_hz)))
    out = []
    for a in range(0, audio.samples.size, step):
        out.extend(proc.push(audio.samples[a : a + step]))
    return out


def real_time_factor(annotations: list[FrameAnnotation], duration_s: float) -> float:
    return sum(a.latency_s for a in annotations) / duration_s if duration_s > 0 else 0.0
