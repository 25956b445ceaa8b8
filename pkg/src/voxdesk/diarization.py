"""Speaker registry, centroid assignment, online clustering and segments."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .synthcorpus import EMOTIONS
from .errors import (
    DegenerateCentroidError,
    DegenerateProjectionError,
    InvalidArgumentError,
)

NEW = "NEW"
DEFAULT_TAU = 0.1
DEFAULT_D_NEW = 0.6
_ZERO_TOL = 1e-12


def _vec(e) -> np.ndarray:
    v = np.asarray(e, dtype=np.float64).ravel()
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("embedding contains non-finite values")
    return v


def normalize(v) -> np.ndarray:
    v = _vec(v)
    n = np.linalg.norm(v)
    if n < _ZERO_TOL:
        raise DegenerateCentroidError("cannot normalize a zero vector")
    return v / n


def cosine_distance(a, b) -> float:
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.clip(1.0 - a @ b, 0.0, 2.0))


def centroid(embeddings) -> np.ndarray:
    """Normalised element-wise mean ("centre of mass") of unit embeddings."""
    arr = np.asarray(embeddings, dtype=np.float64)
    if arr.size == 0 or arr.ndim != 2 or arr.shape[0] == 0:
        raise InvalidArgumentError("centroid needs a nonempty list of vectors")
    mean = arr.mean(axis=0)
    if np.linalg.norm(mean) < 1e-9:
        raise DegenerateCentroidError("embeddings cancel out; mean vector is zero")
    return mean / np.linalg.norm(mean)


@dataclass
class SpeakerProfile:
    speaker_id: str
    mean: np.ndarray  # running mean of assigned embeddings, not normalised
    n_samples: int = 1
    gender: str | None = None
    order: int = 0

    @property
    def centroid(self) -> np.ndarray:
        n = np.linalg.norm(self.mean)
        if n < 1e-9:
            raise DegenerateCentroidError(f"{self.speaker_id}: mean embedding is zero")
        return self.mean / n


@dataclass
class SpeakerRegistry:
    tau: float = DEFAULT_TAU
    d_new: float = DEFAULT_D_NEW
    profiles: dict = field(default_factory=dict)
    next_index: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidArgumentError(f"tau must be > 0, got {self.tau}")
        if not 0 < self.d_new < 2:
            raise InvalidArgumentError(f"d_new must be in (0, 2), got {self.d_new}")

    def __len__(self):
        return len(self.profiles)

    def candidates(self, gender=None) -> list[SpeakerProfile]:
        profs = sorted(self.profiles.values(), key=lambda p: p.order)
        if gender is None:
            return profs
        return [p for p in profs if p.gender is None or p.gender == gender]

    def enroll(self, embedding, speaker_id=None, gender=None) -> SpeakerProfile:
        sid = speaker_id or f"S{self.next_index + 1}"
        if sid in self.profiles:
            raise InvalidArgumentError(f"speaker id {sid!r} already enrolled")
        prof = SpeakerProfile(sid, normalize(embedding), 1, gender, self.next_index)
        self.profiles[sid] = prof
        self.next_index += 1
        return prof


@dataclass
class Assignment:
    speaker_id: str  # NEW when no enrolled speaker is close enough
    probabilities: dict
    distances: dict

    @property
    def best(self) -> str | None:
        if not self.distances:
            return None
        return min(self.distances, key=self.distances.get)

    @property
    def confidence(self) -> float:
        best = self.best
        return self.probabilities[best] if best is not None else 1.0


def assign_speaker(e, reg: SpeakerRegistry, gender=None) -> Assignment:
    """Softmax of negative centroid distances with temperature ``tau``.

    With ``gender`` set, only profiles on that gender route compete, since
    embeddings from different encoders are not comparable.
    """
    e = _vec(e)
    profs = reg.candidates(gender)
    if not profs:
        return Assignment(NEW, {}, {})
    dists = {}
    for p in profs:
        c = p.centroid
        if c.shape != e.shape:
            raise InvalidArgumentError(f"dimension mismatch: {e.shape[0]} vs {c.shape[0]}")
        dists[p.speaker_id] = cosine_distance(e, c)
    d = np.array(list(dists.values()))
    logits = -d / reg.tau
    w = np.exp(logits - logits.max())
    probs = dict(zip(dists, (w / w.sum()).tolist()))
    winner = profs[int(np.argmin(d))].speaker_id  # argmin keeps the first (oldest) on ties
    decision = NEW if dists[winner] > reg.d_new else winner
    return Assignment(decision, probs, dists)


def enroll_or_update(e, decision: str, reg: SpeakerRegistry, gender=None) -> SpeakerProfile:
    if decision == NEW:
        return reg.enroll(e, gender=gender)
    prof = reg.profiles.get(decision)
    if prof is None:
        raise InvalidArgumentError(f"unknown speaker id {decision!r}")
    e = _vec(e)
    prof.n_samples += 1
    prof.mean = prof.mean + (e - prof.mean) / prof.n_samples
    return prof


def diarize(annotations, reg: SpeakerRegistry | None = None, min_new_windows: int = 2) -> SpeakerRegistry:
    """Online clustering: assign each speech window, enrolling new speakers.

    A new speaker is enrolled only after ``min_new_windows`` consecutive speech
    windows are all farther than ``d_new`` from every known speaker and within
    ``d_new`` of each other's centroid. A shorter run of outliers (typically a
    window straddling a speaker change) is attached to its nearest known
    speaker without moving that speaker's centroid. This costs at most
    ``min_new_windows - 1`` hops of look-ahead.

    Writes ``speaker_id`` and ``speaker_p`` onto each speech annotation.
    """
    reg = reg if reg is not None else SpeakerRegistry()
    if min_new_windows < 1:
        raise InvalidArgumentError("min_new_windows must be >= 1")
    pending: list = []

    def orphan():
        for ann in pending:
            res = assign_speaker(ann.embedding, reg, ann.gender)
            if not res.distances:
                res = assign_speaker(ann.embedding, reg)
            if res.distances:
                ann.speaker_id = res.best
                ann.speaker_p = res.confidence
            else:  # nothing enrolled yet: nowhere else to put it
                ann.speaker_id = reg.enroll(ann.embedding, gender=ann.gender).speaker_id
                ann.speaker_p = 1.0
        pending.clear()

    def confirm():
        prof = reg.enroll(pending[0].embedding, gender=pending[0].gender)
        for ann in pending[1:]:
            enroll_or_update(ann.embedding, prof.speaker_id, reg, ann.gender)
        for ann in pending:
            ann.speaker_id, ann.speaker_p = prof.speaker_id, 1.0
        pending.clear()

    for ann in annotations:
        if not ann.is_speech or ann.embedding is None:
            orphan()
            continue
        res = assign_speaker(ann.embedding, reg, ann.gender)
        if res.speaker_id != NEW:
            orphan()
            enroll_or_update(ann.embedding, res.speaker_id, reg, ann.gender)
            ann.speaker_id = res.speaker_id
            ann.speaker_p = res.probabilities[res.speaker_id]
            continue
        if pending and cosine_distance(ann.embedding, centroid([a.embedding for a in pending])) > reg.d_new:
            orphan()
        pending.append(ann)
        if len(pending) >= min_new_windows:
            confirm()
    orphan()
    return reg


@dataclass
class DiarizationSegment:
    speaker_id: str
    start_s: float
    end_s: float
    mean_confidence: float
    gender: str | None = None
    emotion: dict | None = None

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def build_segments(annotations, hop_s: float = 0.5) -> list[DiarizationSegment]:
    """Merge consecutive same-speaker windows; each window spans [start, start + hop)."""
    segments = []
    run = []

    def close():
        if not run:
            return
        conf = float(np.mean([a.speaker_p if a.speaker_p is not None else 1.0 for a in run]))
        genders = [a.gender for a in run if a.gender]
        gender = max(sorted(set(genders)), key=genders.count) if genders else None
        emos = [a.emotion.probabilities for a in run if a.emotion is not None]
        emotion = None
        if emos:
            mean = np.mean(emos, axis=0)
            emotion = dict(zip(EMOTIONS, (mean / mean.sum()).tolist()))
        segments.append(
            DiarizationSegment(run[0].speaker_id, run[0].start_time_s, run[-1].start_time_s + hop_s, conf, gender, emotion)
        )
        run.clear()

    for ann in annotations:
        if not ann.is_speech or ann.speaker_id is None:
            close()
            continue
        if run and (ann.speaker_id != run[-1].speaker_id or abs(ann.start_time_s - run[-1].start_time_s - hop_s) > 1e-9):
            close()
        run.append(ann)
    close()
    return segments


def spherical_pca_3d(embeddings) -> np.ndarray:
    """Project onto the top-3 principal axes and re-normalise onto the sphere.

    Axes are eigenvectors of the second-moment matrix ``X^T X / n`` (no mean
    removal), which keeps directional structure of unit vectors intact. Each
    axis is signed so that its largest-magnitude component is positive.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3 or x.shape[1] < 3:
        raise DegenerateProjectionError("need at least 3 embeddings of dimension >= 3")
    if np.linalg.matrix_rank(x) < 3:
        raise DegenerateProjectionError("embeddings span fewer than 3 dimensions")
    moment = x.T @ x / x.shape[0]
    vals, vecs = np.linalg.eigh(moment)
    axes = vecs[:, np.argsort(vals, kind="stable")[::-1][:3]]
    for j in range(3):
        k = int(np.argmax(np.abs(axes[:, j])))
        if axes[k, j] < 0:
            axes[:, j] = -axes[:, j]
    proj = x @ axes
    norms = np.linalg.norm(proj, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise DegenerateProjectionError("an embedding is orthogonal to all three principal axes")
    return proj / norms


def distance_histograms(embeddings, labels, n_bins=40):
    """Histograms over [0, 2] of pairwise cosine distances, split intra/inter label."""
    x = np.asarray(embeddings, dtype=np.float64)
    labels = list(labels)
    if len(set(labels)) < 2:
        raise InvalidArgumentError("need at least 2 distinct labels")
    if len(labels) != x.shape[0]:
        raise InvalidArgumentError("one label per embedding required")
    intra, inter = pairwise_distances_by_label(x, labels)
    edges = np.linspace(0.0, 2.0, n_bins + 1)
    h_intra, _ = np.histogram(np.clip(intra, 0.0, 2.0), bins=edges)
    h_inter, _ = np.histogram(np.clip(inter, 0.0, 2.0), bins=edges)
    return h_intra, h_inter, edges


def pairwise_distances_by_label(x, labels):
    intra, inter = [], []
    for i, j in combinations(range(len(labels)), 2):
        d = 1.0 - float(x[i] @ x[j])
        (intra if labels[i] == labels[j] else inter).append(d)
    return np.array(intra), np.array(inter)


def overlap_coefficient(h_a, h_b) -> float:
    """Shared mass of two histograms after normalising each to sum 1."""
    a = np.asarray(h_a, dtype=np.float64)
    b = np.asarray(h_b, dtype=np.float64)
    if a.sum() == 0 or b.sum() == 0:
        return 0.0
    return float(np.minimum(a / a.sum(), b / b.sum()).sum())
