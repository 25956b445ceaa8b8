"""RIFF/WAVE I/O restricted to 16-bit signed PCM mono."""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, AudioBuffer
from .errors import FormatError

PCM_FORMAT_TAG = 1


def write_wav(path, audio: AudioBuffer) -> None:
    pcm = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate_hz)
        wf.writeframes(pcm.tobytes())


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        yield cid, data[pos + 8 : pos + 8 + size]
        pos += 8 + size + (size & 1)


def read_wav(path, expected_rate: int | None = DEFAULT_SAMPLE_RATE) -> AudioBuffer:
    """Decode a WAV file, rejecting anything but 16-bit PCM mono.

    Raises :class:`FormatError` whose ``field`` names the offending header
    field (``riff``, ``wave``, ``fmt``, ``audio_format``, ``num_channels``,
    ``bits_per_sample``, ``sample_rate`` or ``data``).
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF":
        raise FormatError(f"{path}: not a RIFF file", field="riff")
    if data[8:12] != b"WAVE":
        raise FormatError(f"{path}: RIFF form type is not WAVE", field="wave")
    fmt = pcm = None
    for cid, body in _chunks(data):
        if cid == b"fmt " and fmt is None:
            fmt = body
        elif cid == b"data" and pcm is None:
            pcm = body
    if fmt is None or len(fmt) < 16:
        raise FormatError(f"{path}: missing or short fmt chunk", field="fmt")
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == 0xFFFE and len(fmt) >= 40:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if tag != PCM_FORMAT_TAG:
        raise FormatError(f"{path}: audio_format={tag}, expected 1 (PCM)", field="audio_format")
    if channels != 1:
        raise FormatError(f"{path}: num_channels={channels}, expected 1", field="num_channels")
    if bits != 16:
        raise FormatError(f"{path}: bits_per_sample={bits}, expected 16", field="bits_per_sample")
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(
            f"{path}: sample_rate={rate}, expected {expected_rate}", field="sample_rate"
        )
    if pcm is None:
        raise FormatError(f"{path}: missing data chunk", field="data")
    n = len(pcm) // 2
    samples = np.frombuffer(pcm[: 2 * n], dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)
