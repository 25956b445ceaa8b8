"""Framing, FFT power spectra, mel filterbanks and log-mel spectrograms.

Everything here is a pure function of its inputs. The FFT is an iterative
radix-2 implementation; numpy is only used as an array container.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EmptyInputError, InvalidArgumentError

LOG_FLOOR = 1e-10
DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioBuffer:
    """Mono PCM samples in [-1, 1] together with their sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidArgumentError(f"audio must be mono (1-D), got shape {samples.shape}")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidArgumentError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("audio contains non-finite samples")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise InvalidArgumentError("audio samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def slice_seconds(self, start_s: float, end_s: float) -> "AudioBuffer":
        a = max(0, int(round(start_s * self.sample_rate_hz)))
        b = min(self.samples.size, int(round(end_s * self.sample_rate_hz)))
        return AudioBuffer(self.samples[a:b], self.sample_rate_hz)


@dataclass(frozen=True)
class FrameConfig:
    window_len_samples: int = 400
    hop_len_samples: int = 160
    fft_size: int = 512
    n_mels: int = 40
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0

    def __post_init__(self):
        if self.window_len_samples <= 0 or self.hop_len_samples <= 0:
            raise ConfigurationError("window and hop lengths must be positive")
        if self.hop_len_samples > self.window_len_samples:
            raise ConfigurationError("hop_len_samples must not exceed window_len_samples")
        if not _is_power_of_two(self.fft_size):
            raise ConfigurationError(f"fft_size must be a power of two, got {self.fft_size}")
        if self.fft_size < self.window_len_samples:
            raise ConfigurationError("fft_size must be >= window_len_samples")
        if self.n_mels <= 0:
            raise ConfigurationError("n_mels must be positive")
        if not (0.0 <= self.fmin_hz < self.fmax_hz):
            raise ConfigurationError(f"need 0 <= fmin < fmax, got {self.fmin_hz}, {self.fmax_hz}")

    def validate_for(self, sample_rate_hz: int) -> None:
        if self.fmax_hz > sample_rate_hz / 2:
            raise ConfigurationError(
                f"fmax_hz={self.fmax_hz} exceeds Nyquist {sample_rate_hz / 2} Hz"
            )


@dataclass(frozen=True)
class MelFilterBank:
    weights: np.ndarray  # (n_mels, fft_size // 2 + 1)
    center_bins: np.ndarray = field(repr=False)

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (n_frames, n_mels), natural-log energies
    frame_times_s: np.ndarray

    def __len__(self):
        return self.frames.shape[0]


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def _check_nonneg_finite(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidArgumentError(f"{name} must be finite and >= 0, got {x!r}")
    return arr


_MEL_SCALE = 2595.0 / math.log(10.0)


def hz_to_mel(f):
    """O'Shaughnessy mel scale, ``2595 * log10(1 + f / 700)``.

    Accepts scalars or arrays; returns the same kind.
    """
    arr = _check_nonneg_finite(f, "frequency")
    # log1p keeps full relative precision for tiny f
    out = _MEL_SCALE * np.log1p(arr / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    arr = _check_nonneg_finite(m, "mel value")
    out = 700.0 * np.expm1(arr / _MEL_SCALE)
    return float(out) if out.ndim == 0 else out


def mel_edge_points(cfg: FrameConfig) -> np.ndarray:
    """The ``n_mels + 2`` equally spaced mel points spanning [fmin, fmax]."""
    return np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)


def mel_center_frequencies(cfg: FrameConfig) -> np.ndarray:
    return mel_to_hz(mel_edge_points(cfg)[1:-1])


def build_mel_filterbank(cfg: FrameConfig, sample_rate_hz: int) -> MelFilterBank:
    """Triangular filters centred on equally spaced mel points.

    Edge frequencies are quantised to the nearest FFT bin; each filter rises
    linearly from its left edge bin to its centre bin (weight 1) and falls to
    the right edge bin.
    """
    cfg.validate_for(sample_rate_hz)
    hz = mel_to_hz(mel_edge_points(cfg))
    bins = np.round(hz * cfg.fft_size / sample_rate_hz).astype(np.int64)
    if np.any(np.diff(bins) <= 0):
        raise ConfigurationError(
            f"n_mels={cfg.n_mels} is too large for fft_size={cfg.fft_size}: "
            "adjacent mel points fall into the same FFT bin"
        )
    n_bins = cfg.fft_size // 2 + 1
    k = np.arange(n_bins)
    weights = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        left, center, right = bins[m], bins[m + 1], bins[m + 2]
        rising = (k - left) / (center - left)
        falling = (right - k) / (right - center)
        weights[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterBank(weights=weights, center_bins=bins[1:-1].copy())


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_power_of_two(n):
        raise ConfigurationError(f"FFT length must be a power of two, got {n}")
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(levels):
        rev |= ((idx >> b) & 1) << (levels - 1 - b)
    a = x[..., rev]
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def naive_dft(x: np.ndarray) -> np.ndarray:
    """O(N^2) reference DFT, kept as an independent check on :func:`fft`."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim > 1:
        return np.stack([naive_dft(row) for row in x])
    n = x.shape[-1]
    out = np.empty(n, dtype=np.complex128)
    for k in range(n):
        acc = 0j
        for t in range(n):
            acc += x[t] * complex(math.cos(2 * math.pi * k * t / n), -math.sin(2 * math.pi * k * t / n))
        out[k] = acc
    return out


def power_spectrum(frame: np.ndarray, fft_size: int) -> np.ndarray:
    """``|X[k]|^2 / fft_size`` for k = 0..fft_size/2 of the zero-padded frame.

    ``frame`` may carry leading batch axes.
    """
    if not _is_power_of_two(fft_size):
        raise ConfigurationError(f"fft_size must be a power of two, got {fft_size}")
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-1] > fft_size:
        raise InvalidArgumentError(f"frame length {frame.shape[-1]} exceeds fft_size {fft_size}")
    pad = [(0, 0)] * (frame.ndim - 1) + [(0, fft_size - frame.shape[-1])]
    spec = fft(np.pad(frame, pad))[..., : fft_size // 2 + 1]
    return (spec.real**2 + spec.imag**2) / fft_size


def hann_window(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, window_len: int, hop_len: int) -> np.ndarray:
    n_frames = (samples.size - window_len) // hop_len + 1
    starts = np.arange(n_frames) * hop_len
    return samples[starts[:, None] + np.arange(window_len)[None, :]]


_FILTERBANK_CACHE: dict = {}


def _cached_filterbank(cfg: FrameConfig, sample_rate_hz: int) -> MelFilterBank:
    key = (cfg, sample_rate_hz)
    fb = _FILTERBANK_CACHE.get(key)
    if fb is None:
        fb = _FILTERBANK_CACHE.setdefault(key, build_mel_filterbank(cfg, sample_rate_hz))
    return fb


def log_mel_frames(audio: AudioBuffer, cfg: FrameConfig = FrameConfig()) -> MelSpectrogram:
    n = audio.samples.size
    if n < cfg.window_len_samples:
        raise EmptyInputError(
            f"audio has {n} samples, fewer than one window ({cfg.window_len_samples})"
        )
    fb = _cached_filterbank(cfg, audio.sample_rate_hz)
    frames = frame_signal(audio.samples, cfg.window_len_samples, cfg.hop_len_samples)
    power = power_spectrum(frames * hann_window(cfg.window_len_samples), cfg.fft_size)
    mel = power @ fb.weights.T
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    times = np.arange(frames.shape[0]) * (cfg.hop_len_samples / audio.sample_rate_hz)
    return MelSpectrogram(frames=logmel, frame_times_s=times)


def rms_dbfs(samples: np.ndarray) -> float:
    """RMS level relative to full scale; ``-inf`` for digital silence."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return float("-inf")
    rms = math.sqrt(float(np.mean(samples * samples)))
    return 20.0 * math.log10(rms) if rms > 0 else float("-inf")
