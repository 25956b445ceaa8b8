"""JSON conversation report (schema ``asya-report/1``) and plot CSV writers."""

from __future__ import annotations

import csv
import json

import numpy as np

from .diarization import distance_histograms, spherical_pca_3d
from .errors import DegenerateProjectionError, InvalidArgumentError
from .synthcorpus import EMOTIONS

SCHEMA_ID = "asya-report/1"

_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_EMOTION = {
    "type": ["object", "null"],
    "properties": {name: _PROB for name in EMOTIONS},
    "required": list(EMOTIONS),
    "additionalProperties": False,
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": SCHEMA_ID,
    "type": "object",
    "required": ["schema", "audio", "segments", "speakers", "pipeline", "conversation"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "audio": {
            "type": "object",
            "required": ["path", "duration_s", "sample_rate"],
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "duration_s": _NONNEG,
                "sample_rate": {"type": "integer", "minimum": 1},
            },
        },
        "segments": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["speaker_id", "start_s", "end_s", "confidence", "gender", "emotion"],
                "additionalProperties": False,
                "properties": {
                    "speaker_id": {"type": "string"},
                    "start_s": _NONNEG,
                    "end_s": _NONNEG,
                    "confidence": _PROB,
                    "gender": {"enum": ["male", "female", None]},
                    "emotion": _EMOTION,
                },
            },
        },
        "speakers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "id", "total_speech_s", "talk_ratio", "n_utterances", "mean_utterance_s",
                    "max_utterance_s", "n_30s_violations", "tempo_syl_per_s", "gender",
                    "positivity", "confidence",
                ],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string"},
                    "total_speech_s": _NONNEG,
                    "talk_ratio": _PROB,
                    "n_utterances": {"type": "integer", "minimum": 0},
                    "mean_utterance_s": _NONNEG,
                    "max_utterance_s": _NONNEG,
                    "n_30s_violations": {"type": "integer", "minimum": 0},
                    "tempo_syl_per_s": {"type": ["number", "null"], "minimum": 0},
                    "gender": {"enum": ["male", "female", None]},
                    "positivity": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "confidence": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                },
            },
        },
        "pipeline": {
            "type": "object",
            "required": ["model_versions", "real_time_factor", "n_windows", "n_speech_windows", "median_window_latency_ms"],
            "additionalProperties": False,
            "properties": {
                "model_versions": {"type": "object"},
                "real_time_factor": _NONNEG,
                "n_windows": {"type": "integer", "minimum": 0},
                "n_speech_windows": {"type": "integer", "minimum": 0},
                "median_window_latency_ms": _NONNEG,
            },
        },
        "conversation": {
            "type": "object",
            "required": ["total_duration_s", "silence_s", "n_speakers"],
            "additionalProperties": False,
            "properties": {
                "total_duration_s": _NONNEG,
                "silence_s": _NONNEG,
                "n_speakers": {"type": "integer", "minimum": 0},
            },
        },
    },
}


def build_report(path, audio, annotations, segments, conversation, versions=None, real_time_factor=0.0) -> dict:
    lat = [a.latency_s for a in annotations]
    return {
        "schema": SCHEMA_ID,
        "audio": {"path": str(path), "duration_s": audio.duration_s, "sample_rate": audio.sample_rate_hz},
        "segments": [
            {
                "speaker_id": s.speaker_id,
                "start_s": s.start_s,
                "end_s": s.end_s,
                "confidence": s.mean_confidence,
                "gender": s.gender,
                "emotion": s.emotion,
            }
            for s in segments
        ],
        "speakers": [
            {
                "id": st.speaker_id,
                "total_speech_s": st.total_speech_s,
                "talk_ratio": st.talk_ratio,
                "n_utterances": st.n_utterances,
                "mean_utterance_s": st.mean_utterance_s,
                "max_utterance_s": st.max_utterance_s,
                "n_30s_violations": st.n_30s_violations,
                "tempo_syl_per_s": st.tempo_syl_per_s,
                "gender": st.gender,
                "positivity": st.positivity,
                "confidence": st.confidence,
            }
            for st in conversation.speakers.values()
        ],
        "pipeline": {
            "model_versions": dict(versions or {}),
            "real_time_factor": float(real_time_factor),
            "n_windows": len(annotations),
            "n_speech_windows": sum(a.is_speech for a in annotations),
            "median_window_latency_ms": float(np.median(lat) * 1000.0) if lat else 0.0,
        },
        "conversation": {
            "total_duration_s": conversation.total_duration_s,
            "silence_s": conversation.silence_s,
            "n_speakers": len(conversation.speakers),
        },
    }


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def loads(text: str) -> dict:
    return json.loads(text)


def write_histogram_csv(path, embeddings, labels, n_bins=40) -> None:
    h_intra, h_inter, edges = distance_histograms(embeddings, labels, n_bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "intra", "inter"])
        for k in range(n_bins):
            w.writerow([f"{edges[k]:.4f}", f"{edges[k + 1]:.4f}", int(h_intra[k]), int(h_inter[k])])


def write_projection_csv(path, embeddings, labels, times) -> None:
    proj = spherical_pca_3d(embeddings)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start_s", "speaker_id", "x", "y", "z"])
        for t, lab, p in zip(times, labels, proj):
            w.writerow([f"{t:.3f}", lab, f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}"])


def emit_plots(directory, annotations, n_bins=40) -> list:
    """Write distance-histogram and 3-D projection CSVs for diarized speech windows.

    Returns the paths written; plots that need more distinct speakers or
    dimensions than the audio provides are skipped.
    """
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    speech = [a for a in annotations if a.embedding is not None and a.speaker_id is not None]
    embs = np.array([a.embedding for a in speech]) if speech else np.zeros((0, 0))
    labels = [a.speaker_id for a in speech]
    written = []
    try:
        write_histogram_csv(out / "distance_histogram.csv", embs, labels, n_bins)
        written.append(out / "distance_histogram.csv")
    except InvalidArgumentError:
        pass
    try:
        write_projection_csv(out / "embedding_sphere.csv", embs, labels, [a.start_time_s for a in speech])
        written.append(out / "embedding_sphere.csv")
    except DegenerateProjectionError:
        pass
    return written
