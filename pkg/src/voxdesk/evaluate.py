"""Held-out evaluation: per-stage accuracy, re-identification, separation, latency."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .diarization import (
    SpeakerRegistry,
    assign_speaker,
    centroid,
    distance_histograms,
    overlap_coefficient,
    pairwise_distances_by_label,
)
from .dsp import AudioBuffer
from .errors import InvalidArgumentError
from .pipeline import CascadeBundle, process_stream, real_time_factor
from .synthcorpus import EMOTIONS, CorpusManifest
from .training import WindowSet, load_windows
from .wavio import read_wav

MIN_LATENCY_AUDIO_S = 60.0


@dataclass
class EvalResult:
    vad_accuracy: float
    gender_accuracy: float
    reid_accuracy: float
    emotion_accuracy: float
    median_window_latency_ms: float
    real_time_factor: float
    latency_audio_s: float
    mean_intra_distance: float
    mean_inter_distance: float
    histogram_overlap: float
    n_test_windows: int
    n_test_utterances: int
    emotion_confusion: list = field(default_factory=list)
    per_route: dict = field(default_factory=dict)

    def rows(self):
        """(metric, value) pairs for tabular output."""
        d = asdict(self)
        d.pop("emotion_confusion")
        d.pop("per_route")
        return list(d.items())


def reid_accuracy(enroll, probes) -> float:
    """Nearest-centroid speaker re-identification.

    ``enroll`` and ``probes`` are lists of ``(speaker_id, route, embeddings)``
    where ``embeddings`` is an (n, D) array of window embeddings. Each enrolled
    speaker's centroid is built from all its enrollment windows; each probe
    utterance is represented by the centroid of its windows and matched only
    against speakers on the same route.
    """
    if not probes:
        raise InvalidArgumentError("no probe utterances to evaluate")
    reg = SpeakerRegistry()
    by_spk: dict = {}
    for spk, route, embs in enroll:
        by_spk.setdefault((spk, route), []).append(np.asarray(embs, dtype=np.float64))
    for (spk, route), chunks in by_spk.items():
        allv = np.concatenate(chunks)
        prof = reg.enroll(allv[0], speaker_id=spk, gender=route)
        prof.mean = allv.mean(axis=0)
        prof.n_samples = len(allv)
    hits = 0
    for spk, route, embs in probes:
        res = assign_speaker(centroid(embs), reg, gender=route)
        hits += res.best == spk
    return hits / len(probes)


def _majority(values):
    vals = [v for v in values if v is not None]
    return max(sorted(set(vals)), key=vals.count) if vals else None


def _encode(bundle: CascadeBundle, ws: WindowSet, route: str) -> np.ndarray:
    enc = bundle.encoder_for(route)
    x = ((ws.patches - bundle.feature_mean) / bundle.feature_std)[:, None]
    return enc.forward(x, cache=False).astype(np.float64)


def evaluate(bundle: CascadeBundle, manifest: CorpusManifest, embedder=None, n_bins: int = 40, log=None) -> EvalResult:
    """Run the held-out evaluation.

    ``embedder``, when given, replaces speaker embeddings for both enrollment
    and probes: it is called as ``embedder(entry, window_index)`` and must
    return a unit vector. Tests use it to inject oracle embeddings.
    """
    test = manifest.select(split="test")
    test_speech = [e for e in test if e.vad == "speech"]
    if not test or not test_speech:
        raise InvalidArgumentError("manifest has an empty test split")
    cfg = bundle.config

    anns_by_entry = {}
    for entry in test:
        audio = read_wav(manifest.resolve(entry), expected_rate=cfg.sample_rate_hz)
        anns_by_entry[entry.path] = process_stream(audio, bundle)
    all_anns = [(e, a) for e in test for a in anns_by_entry[e.path]]
    vad_acc = float(np.mean([a.vad == e.vad for e, a in all_anns]))
    speech_anns = [(e, a) for e, a in all_anns if e.vad == "speech"]
    gender_acc = float(np.mean([a.gender == e.gender for e, a in speech_anns]))
    emo_true = [EMOTIONS.index(e.emotion) for e, _ in speech_anns]
    emo_pred = [EMOTIONS.index(a.emotion.top) if a.emotion else -1 for _, a in speech_anns]
    emotion_acc = float(np.mean(np.array(emo_true) == np.array(emo_pred)))
    confusion = np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=int)
    for t, p in zip(emo_true, emo_pred):
        if p >= 0:
            confusion[t, p] += 1

    # enrollment from the training split, using each speaker's true route
    train_speech = manifest.select(split="train", vad="speech")
    enroll = []
    if embedder is None:
        ws = load_windows(manifest, train_speech, cfg)
        for route in sorted({e.gender for e in train_speech}):
            mask = np.array([ws.entries[i].gender == route for i in ws.entry_index])
            sub = ws.subset(mask)
            embs = _encode(bundle, sub, route)
            for i, entry in enumerate(ws.entries):
                rows = sub.entry_index == i
                if rows.any():
                    enroll.append((entry.speaker_id, route, embs[rows]))
    else:
        for entry in train_speech:
            n = cfg.n_windows(int(round(entry.duration_s * cfg.sample_rate_hz)))
            enroll.append((entry.speaker_id, entry.gender, np.array([embedder(entry, k) for k in range(n)])))

    probes, test_embs, test_labels, test_routes = [], [], [], []
    missed = 0
    for entry in test_speech:
        anns = anns_by_entry[entry.path]
        if embedder is None:
            embs = [a.embedding for a in anns if a.embedding is not None]
            route = _majority([a.gender for a in anns])
        else:
            embs = [embedder(entry, k) for k in range(len(anns))]
            route = entry.gender
        if not embs:
            missed += 1  # no window reached the embedding stage
            continue
        embs = np.asarray(embs)
        probes.append((entry.speaker_id, route, embs))
        test_embs.extend(embs)
        test_labels.extend([entry.speaker_id] * len(embs))
        test_routes.extend([entry.gender] * len(embs))
    reid = reid_accuracy(enroll, probes) * len(probes) / (len(probes) + missed) if probes else 0.0

    # distance separation, pairs taken within each gender route
    test_embs = np.asarray(test_embs)
    intra_all, inter_all, per_route = [], [], {}
    for route in sorted(set(test_routes)):
        idx = [i for i, r in enumerate(test_routes) if r == route]
        labs = [test_labels[i] for i in idx]
        if len(set(labs)) < 2:
            continue
        intra, inter = pairwise_distances_by_label(test_embs[idx], labs)
        h_i, h_x, _ = distance_histograms(test_embs[idx], labs, n_bins)
        per_route[route] = {
            "mean_intra": float(intra.mean()),
            "mean_inter": float(inter.mean()),
            "overlap": overlap_coefficient(h_i, h_x),
        }
        intra_all.append(intra)
        inter_all.append(inter)
    intra_all = np.concatenate(intra_all) if intra_all else np.array([np.nan])
    inter_all = np.concatenate(inter_all) if inter_all else np.array([np.nan])
    edges = np.linspace(0, 2, n_bins + 1)
    overlap = overlap_coefficient(np.histogram(intra_all, edges)[0], np.histogram(inter_all, edges)[0])

    latency = measure_latency(bundle, manifest)
    return EvalResult(
        vad_accuracy=vad_acc,
        gender_accuracy=gender_acc,
        reid_accuracy=float(reid),
        emotion_accuracy=emotion_acc,
        median_window_latency_ms=latency["median_ms"],
        real_time_factor=latency["rtf"],
        latency_audio_s=latency["duration_s"],
        mean_intra_distance=float(np.mean(intra_all)),
        mean_inter_distance=float(np.mean(inter_all)),
        histogram_overlap=overlap,
        n_test_windows=len(all_anns),
        n_test_utterances=len(test_speech),
        emotion_confusion=confusion.tolist(),
        per_route=per_route,
    )


def latency_stream(manifest: CorpusManifest, min_duration_s: float = MIN_LATENCY_AUDIO_S, sample_rate_hz: int = 16000) -> AudioBuffer:
    """Concatenate test files (cycling if needed) into one stream of at least ``min_duration_s``."""
    test = manifest.select(split="test")
    if not test:
        raise InvalidArgumentError("manifest has an empty test split")
    chunks, total = [], 0
    while total < min_duration_s * sample_rate_hz:
        for entry in test:
            s = read_wav(manifest.resolve(entry), expected_rate=sample_rate_hz).samples
            chunks.append(s)
            total += s.size
            if total >= min_duration_s * sample_rate_hz:
                break
    return AudioBuffer(np.concatenate(chunks), sample_rate_hz)


def measure_latency(bundle: CascadeBundle, manifest: CorpusManifest, min_duration_s: float = MIN_LATENCY_AUDIO_S) -> dict:
    audio = latency_stream(manifest, min_duration_s, bundle.config.sample_rate_hz)
    t0 = time.perf_counter()
    anns = process_stream(audio, bundle)
    wall = time.perf_counter() - t0
    lat = np.array([a.latency_s for a in anns])
    return {
        "median_ms": float(np.median(lat) * 1000.0),
        "max_ms": float(np.max(lat) * 1000.0),
        "rtf": max(real_time_factor(anns, audio.duration_s), wall / audio.duration_s),
        "duration_s": audio.duration_s,
        "n_windows": len(anns),
    }
