"""Deterministic harmonic-plus-formant synthetic speakers and corpus builder.

Speech is a jittered harmonic source at the speaker's f0, shaped by three
formant resonances and a spectral tilt, then amplitude-modulated at a syllabic
rate. Emotion-proxy archetypes change the f0 contour, level, syllable rate and
vocal effort (tilt). They are prosody classes for exercising the classifier,
not a model of human emotion.

==========  ===============  ======  =========  =====  ==========
proxy       f0 contour       level   rate (Hz)  depth  tilt (dB)
==========  ===============  ======  =========  =====  ==========
Happiness   rising           0.95    5.0        0.9    +3
Sadness     falling          0.35    2.5        0.7    -4
Anger       flat, raised     1.00    6.0        1.0    +5
Fear        7 Hz vibrato     0.55    5.5        0.8     0
Disgust     fall then rise   0.60    3.0        0.8    -2
Surprise    rise then fall   0.85    4.0        0.9    +2
Boredom     flat, lowered    0.45    3.0        0.4    -3
Neutrality  slow declination 0.70    4.0        0.8     0
==========  ===============  ======  =========  =====  ==========
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dsp import DEFAULT_SAMPLE_RATE, AudioBuffer
from .errors import FormatError, InvalidArgumentError
from .wavio import write_wav

EMOTIONS = ("Happiness", "Sadness", "Anger", "Fear", "Disgust", "Surprise", "Boredom", "Neutrality")
GENDERS = ("male", "female")
VAD_LABELS = ("speech", "noise")
NOISE_KINDS = ("white", "pink", "babble")
NONE_LABEL = "none"
BABBLE_TALKERS = 10

# declared gender bands; sampling stays inside a narrower core so that
# emotion contours (at most +-8%) never cross into the other band
F0_BANDS = {"male": (85.0, 155.0), "female": (165.0, 255.0)}
_F0_CORE = {"male": (90.0, 140.0), "female": (180.0, 250.0)}
_FORMANT_SCALE = {"male": 1.0, "female": 1.15}

MANIFEST_HEADER = ["path", "speaker_id", "gender", "vad", "emotion", "duration_s", "split"]
MIN_DURATION_S = 0.5
DEFAULT_RATE_HZ = 4.0


@dataclass(frozen=True)
class EmotionArchetype:
    contour: str
    level: float
    rate_hz: float
    depth: float
    tilt_offset_db: float


ARCHETYPES = {
    "Happiness": EmotionArchetype("rising", 0.95, 5.0, 0.9, 3.0),
    "Sadness": EmotionArchetype("falling", 0.35, 2.5, 0.7, -4.0),
    "Anger": EmotionArchetype("raised", 1.00, 6.0, 1.0, 5.0),
    "Fear": EmotionArchetype("vibrato", 0.55, 5.5, 0.8, 0.0),
    "Disgust": EmotionArchetype("fall_rise", 0.60, 3.0, 0.8, -2.0),
    "Surprise": EmotionArchetype("rise_fall", 0.85, 4.0, 0.9, 2.0),
    "Boredom": EmotionArchetype("lowered", 0.45, 3.0, 0.4, -3.0),
    "Neutrality": EmotionArchetype("declination", 0.70, 4.0, 0.8, 0.0),
}
_NEUTRAL_DEFAULT = EmotionArchetype("flat", 0.80, DEFAULT_RATE_HZ, 0.8, 0.0)


@dataclass(frozen=True)
class SynthSpeaker:
    speaker_id: str
    gender: str
    f0_hz: float
    formants_hz: tuple
    bandwidths_hz: tuple
    tilt_db_per_octave: float
    jitter: float
    seed: int


def make_speaker(seed: int, gender: str, speaker_id: str | None = None) -> SynthSpeaker:
    if gender not in GENDERS:
        raise InvalidArgumentError(f"gender must be one of {GENDERS}, got {gender!r}")
    rng = np.random.default_rng(seed)
    lo, hi = _F0_CORE[gender]
    scale = _FORMANT_SCALE[gender]
    formants = (
        rng.uniform(450, 750) * scale,
        rng.uniform(1000, 1700) * scale,
        rng.uniform(2200, 2900) * scale,
    )
    bandwidths = (rng.uniform(60, 120), rng.uniform(80, 160), rng.uniform(120, 220))
    return SynthSpeaker(
        speaker_id=speaker_id or f"synth{seed}",
        gender=gender,
        f0_hz=float(rng.uniform(lo, hi)),
        formants_hz=tuple(float(f) for f in formants),
        bandwidths_hz=tuple(float(b) for b in bandwidths),
        tilt_db_per_octave=float(rng.uniform(-14.0, -6.0)),
        jitter=float(rng.uniform(0.005, 0.015)),
        seed=int(seed),
    )


def _contour(kind: str, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    if kind == "rising":
        return 0.95 + 0.12 * u
    if kind == "falling":
        return 1.04 - 0.11 * u
    if kind == "raised":
        return np.full_like(u, 1.03)
    if kind == "vibrato":
        return 1.0 + 0.05 * np.sin(2 * np.pi * 7.0 * t)
    if kind == "fall_rise":
        return 0.92 + 0.16 * np.abs(u - 0.5)
    if kind == "rise_fall":
        return 1.08 - 0.22 * np.abs(u - 0.5)
    if kind == "lowered":
        return np.full_like(u, 0.97)
    if kind == "declination":
        return 1.02 - 0.04 * u
    return np.ones_like(u)


def _smooth_noise(rng, n, sr, step_s=0.01):
    knots = rng.standard_normal(int(n / (sr * step_s)) + 2)
    pos = np.arange(n) / (sr * step_s)
    return np.interp(pos, np.arange(knots.size), knots)


def render_utterance(
    speaker: SynthSpeaker,
    duration_s: float,
    emotion_proxy: str | None = None,
    seed: int = 0,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
) -> AudioBuffer:
    if duration_s < MIN_DURATION_S:
        raise InvalidArgumentError(f"duration must be >= {MIN_DURATION_S} s, got {duration_s}")
    if emotion_proxy is not None and emotion_proxy not in ARCHETYPES:
        raise InvalidArgumentError(f"unknown emotion proxy {emotion_proxy!r}")
    arch = ARCHETYPES[emotion_proxy] if emotion_proxy else _NEUTRAL_DEFAULT
    rng = np.random.default_rng([speaker.seed, seed])
    sr = sample_rate_hz
    n = int(round(duration_s * sr))
    t = np.arange(n) / sr
    u = t / duration_s

    f0 = speaker.f0_hz * _contour(arch.contour, u, t)
    f0 = f0 * (1.0 + speaker.jitter * _smooth_noise(rng, n, sr))
    phase = 2 * np.pi * np.cumsum(f0) / sr

    drift = [
        1.0 + 0.05 * np.sin(2 * np.pi * rng.uniform(0.3, 0.9) * t + rng.uniform(0, 2 * np.pi))
        for _ in range(3)
    ]
    formants = [f * d for f, d in zip(speaker.formants_hz, drift)]
    tilt = speaker.tilt_db_per_octave + arch.tilt_offset_db
    gains = (1.0, 0.7, 0.4)

    source = np.zeros(n)
    n_harm = int(0.95 * (sr / 2) / f0.max())
    for k in range(1, n_harm + 1):
        fk = k * f0
        shape = 0.02
        for fc, bw, g in zip(formants, speaker.bandwidths_hz, gains):
            shape = shape + g / (1.0 + ((fk - fc) / (bw / 2.0)) ** 2)
        amp = 10.0 ** (tilt * np.log2(k) / 20.0) * shape
        source += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    syl = 0.5 - 0.5 * np.cos(2 * np.pi * arch.rate_hz * t + rng.uniform(0, 2 * np.pi))
    env = (1.0 - arch.depth) + arch.depth * syl**1.2
    breath = 0.03 * rng.standard_normal(n) * env
    y = source / (np.max(np.abs(source)) + 1e-12) * env + breath
    y = y / np.max(np.abs(y)) * 0.8 * arch.level
    return AudioBuffer(y, sr)


def render_noise(kind: str, duration_s: float, seed: int, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """White, pink or babble noise at a random level between -35 and -15 dBFS RMS."""
    rng = np.random.default_rng([seed, 7])
    n = int(round(duration_s * sample_rate_hz))
    if kind == "white":
        y = rng.standard_normal(n)
    elif kind == "pink":
        # Kellet's economy pink filter
        b = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
        a = [1.0, -2.494956002, 2.017265875, -0.522189400]
        y = lfilter(b, a, rng.standard_normal(n))
    elif kind == "babble":
        y = np.zeros(n)
        for j in range(BABBLE_TALKERS):
            spk = make_speaker(int(rng.integers(2**31)), GENDERS[j % 2])
            emo = EMOTIONS[int(rng.integers(len(EMOTIONS)))]
            y += render_utterance(spk, duration_s, emo, seed=int(rng.integers(2**31)), sample_rate_hz=sample_rate_hz).samples
    else:
        raise InvalidArgumentError(f"noise kind must be one of {NOISE_KINDS}, got {kind!r}")
    level_db = rng.uniform(-35.0, -15.0)
    y = y / np.sqrt(np.mean(y**2)) * 10 ** (level_db / 20)
    peak = np.max(np.abs(y))
    if peak > 0.99:
        y *= 0.99 / peak
    return AudioBuffer(y, sample_rate_hz)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    speaker_id: str
    gender: str
    vad: str
    emotion: str
    duration_s: float
    split: str


@dataclass
class CorpusManifest:
    entries: list = field(default_factory=list)
    root: Path | None = None

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def select(self, split=None, vad=None):
        return [
            e for e in self.entries
            if (split is None or e.split == split) and (vad is None or e.vad == vad)
        ]


def write_manifest(manifest: CorpusManifest, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow([e.path, e.speaker_id, e.gender, e.vad, e.emotion, f"{e.duration_s:.6f}", e.split])


def read_manifest(path) -> CorpusManifest:
    """Parse a manifest CSV; errors carry the 1-based line number."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != MANIFEST_HEADER:
        raise FormatError(f"{path}:1: header must be {','.join(MANIFEST_HEADER)}", field="header")
    entries, seen = [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise FormatError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
        p, spk, gender, vad, emotion, dur, split = row
        if gender not in GENDERS + (NONE_LABEL,):
            raise FormatError(f"{path}:{lineno}: bad gender {gender!r}", field="gender")
        if vad not in VAD_LABELS:
            raise FormatError(f"{path}:{lineno}: bad vad label {vad!r}", field="vad")
        if emotion not in EMOTIONS + (NONE_LABEL,):
            raise FormatError(f"{path}:{lineno}: bad emotion {emotion!r}", field="emotion")
        if split not in ("train", "test"):
            raise FormatError(f"{path}:{lineno}: bad split {split!r}", field="split")
        try:
            duration = float(dur)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad duration {dur!r}", field="duration_s") from None
        if p in seen:
            raise FormatError(f"{path}:{lineno}: duplicate path {p!r}", field="path")
        seen.add(p)
        entries.append(ManifestEntry(p, spk, gender, vad, emotion, duration, split))
    return CorpusManifest(entries=entries, root=path.parent)


def _derived_seed(root_seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([root_seed, *keys]).generate_state(1)[0])


def corpus_speakers(n_speakers: int, root_seed: int) -> list[SynthSpeaker]:
    return [
        make_speaker(_derived_seed(root_seed, 1, i), GENDERS[i % 2], speaker_id=f"spk{i:02d}")
        for i in range(n_speakers)
    ]


def _split_labels(n: int, rng) -> list[str]:
    n_test = int(round(0.2 * n))
    order = rng.permutation(n)
    labels = ["train"] * n
    for i in order[:n_test]:
        labels[i] = "test"
    return labels


def generate_corpus(
    out_dir,
    n_speakers: int = 8,
    n_utts_per_speaker: int = 20,
    duration_s: float = 2.0,
    noise_fraction: float = 0.2,
    root_seed: int = 0,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
) -> CorpusManifest:
    """Write WAV files plus ``manifest.csv`` under ``out_dir``.

    Genders alternate male/female by speaker index. Noise files make up
    ``noise_fraction`` of the total file count. Each speaker's utterances, and
    the noise files, are split 80/20 into train/test.
    """
    if n_speakers < 2 or n_speakers % 2:
        raise InvalidArgumentError("n_speakers must be an even number >= 2 (balanced genders)")
    if n_utts_per_speaker < 1:
        raise InvalidArgumentError("n_utts_per_speaker must be >= 1")
    if not 0.0 <= noise_fraction < 1.0:
        raise InvalidArgumentError("noise_fraction must be in [0, 1)")
    out = Path(out_dir)
    try:
        (out / "speech").mkdir(parents=True, exist_ok=True)
        (out / "noise").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from exc

    split_rng = np.random.default_rng(_derived_seed(root_seed, 3))
    entries = []
    for i, spk in enumerate(corpus_speakers(n_speakers, root_seed)):
        splits = _split_labels(n_utts_per_speaker, split_rng)
        for j in range(n_utts_per_speaker):
            emotion = EMOTIONS[(j + i) % len(EMOTIONS)]
            audio = render_utterance(spk, duration_s, emotion, seed=_derived_seed(root_seed, 2, i, j), sample_rate_hz=sample_rate_hz)
            rel = f"speech/{spk.speaker_id}_utt{j:03d}.wav"
            write_wav(out / rel, audio)
            entries.append(ManifestEntry(rel, spk.speaker_id, spk.gender, "speech", emotion, audio.duration_s, splits[j]))

    n_speech = len(entries)
    n_noise = int(round(noise_fraction * n_speech / (1.0 - noise_fraction)))
    splits = _split_labels(n_noise, split_rng)
    for j in range(n_noise):
        kind = NOISE_KINDS[j % len(NOISE_KINDS)]
        audio = render_noise(kind, duration_s, _derived_seed(root_seed, 4, j), sample_rate_hz)
        rel = f"noise/{kind}_{j:03d}.wav"
        write_wav(out / rel, audio)
        entries.append(ManifestEntry(rel, NONE_LABEL, NONE_LABEL, "noise", NONE_LABEL, audio.duration_s, splits[j]))

    manifest = CorpusManifest(entries=entries, root=out)
    write_manifest(manifest, out / "manifest.csv")
    return manifest
