"""Conversation metrics over diarization segments, plus envelope-based tempo."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .diarization import DiarizationSegment
from .dsp import AudioBuffer
from .errors import InvalidArgumentError, TooShortError

RULE_30S = 30.0
MIN_TEMPO_SEGMENT_S = 0.2
ENVELOPE_SMOOTH_S = 0.05
MIN_PEAK_GAP_S = 0.1
_OVERLAP_TOL = 1e-9


@dataclass
class SpeakerStats:
    speaker_id: str
    total_speech_s: float = 0.0
    talk_ratio: float = 0.0
    n_utterances: int = 0
    mean_utterance_s: float = 0.0
    max_utterance_s: float = 0.0
    n_30s_violations: int = 0
    tempo_syl_per_s: float | None = None
    gender: str | None = None
    # derived proxies from the emotion head, not calibrated measures
    positivity: float | None = None
    confidence: float | None = None


@dataclass
class ConversationReport:
    total_duration_s: float
    silence_s: float
    speakers: dict = field(default_factory=dict)


def _utterances(segments):
    """Merge touching segments of the same speaker into maximal utterances."""
    out = []
    for seg in sorted(segments, key=lambda s: (s.start_s, s.end_s)):
        if out and out[-1][0] == seg.speaker_id and abs(out[-1][2] - seg.start_s) <= _OVERLAP_TOL:
            out[-1][2] = seg.end_s
            out[-1][3].append(seg)
        else:
            out.append([seg.speaker_id, seg.start_s, seg.end_s, [seg]])
    return out


def conversation_metrics(segments, total_duration_s: float, audio: AudioBuffer | None = None) -> ConversationReport:
    """Talk ratios, utterance statistics and 30-second-rule violations.

    When ``audio`` is given, each speaker's tempo is the duration-weighted mean
    of :func:`tempo_estimate` over their utterances of at least 200 ms.
    """
    if total_duration_s < 0:
        raise InvalidArgumentError("total duration must be >= 0")
    ordered = sorted(segments, key=lambda s: (s.start_s, s.end_s))
    for seg in ordered:
        if seg.start_s < -_OVERLAP_TOL or seg.end_s > total_duration_s + _OVERLAP_TOL or seg.end_s <= seg.start_s:
            raise InvalidArgumentError(f"segment [{seg.start_s}, {seg.end_s}) outside [0, {total_duration_s}]")
    for a, b in zip(ordered, ordered[1:]):
        if b.start_s < a.end_s - _OVERLAP_TOL:
            raise InvalidArgumentError(
                f"overlapping segments: [{a.start_s}, {a.end_s}) and [{b.start_s}, {b.end_s})"
            )

    speakers: dict[str, SpeakerStats] = {}
    lengths: dict[str, list] = {}
    tempos: dict[str, list] = {}
    for sid, start, end, parts in _utterances(ordered):
        st = speakers.setdefault(sid, SpeakerStats(sid))
        dur = end - start
        lengths.setdefault(sid, []).append(dur)
        st.total_speech_s += dur
        if dur > RULE_30S:
            st.n_30s_violations += 1
        if st.gender is None:
            st.gender = next((p.gender for p in parts if p.gender), None)
        if audio is not None and dur >= MIN_TEMPO_SEGMENT_S:
            tempos.setdefault(sid, []).append((tempo_estimate(audio, DiarizationSegment(sid, start, end, 1.0)), dur))

    emotions: dict[str, list] = {}
    for seg in ordered:
        if seg.emotion:
            emotions.setdefault(seg.speaker_id, []).append((seg.emotion, seg.duration_s))

    for sid, st in speakers.items():
        ls = lengths[sid]
        st.n_utterances = len(ls)
        st.mean_utterance_s = float(np.mean(ls))
        st.max_utterance_s = float(np.max(ls))
        st.talk_ratio = st.total_speech_s / total_duration_s if total_duration_s > 0 else 0.0
        if sid in tempos:
            vals, w = zip(*tempos[sid])
            st.tempo_syl_per_s = float(np.average(vals, weights=w))
        if sid in emotions:
            w = np.array([d for _, d in emotions[sid]])
            happy = np.array([e["Happiness"] for e, _ in emotions[sid]])
            unsure = np.array([e["Fear"] + e["Sadness"] for e, _ in emotions[sid]])
            st.positivity = float(np.average(happy, weights=w))
            st.confidence = float(np.clip(1.0 - np.average(unsure, weights=w), 0.0, 1.0))

    speech = sum(st.total_speech_s for st in speakers.values())
    return ConversationReport(
        total_duration_s=float(total_duration_s),
        silence_s=max(0.0, float(total_duration_s) - speech),
        speakers=dict(sorted(speakers.items())),
    )


def energy_envelope(samples: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """Squared signal smoothed by a 50 ms moving average."""
    width = max(1, int(round(ENVELOPE_SMOOTH_S * sample_rate_hz)))
    kernel = np.ones(width) / width
    return np.convolve(samples * samples, kernel, mode="same")


def tempo_estimate(audio: AudioBuffer, segment) -> float:
    """Syllable rate from peaks of the smoothed wide-band energy envelope.

    A peak must exceed ``median + 0.5 * (max - median)`` of the segment's
    envelope and be at least 100 ms from a stronger peak.
    """
    dur = segment.end_s - segment.start_s
    if dur < MIN_TEMPO_SEGMENT_S:
        raise TooShortError(f"segment of {dur:.3f} s is shorter than {MIN_TEMPO_SEGMENT_S} s")
    if segment.start_s < -_OVERLAP_TOL or segment.end_s > audio.duration_s + 1e-6:
        raise InvalidArgumentError("segment lies outside the audio")
    sr = audio.sample_rate_hz
    x = audio.samples[int(round(segment.start_s * sr)) : int(round(segment.end_s * sr))]
    env = energy_envelope(x, sr)
    med, top = float(np.median(env)), float(np.max(env))
    if top <= med:
        return 0.0
    peaks, _ = find_peaks(env, height=med + 0.5 * (top - med), distance=max(1, int(MIN_PEAK_GAP_S * sr)))
    return len(peaks) / dur
