"""Training loops for each cascade stage and the end-to-end orchestration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .architectures import build_classifier, build_encoder
from .emotion import train_emotion_head
from .errors import InvalidArgumentError, TrainingDivergenceError
from .nnet import Model, TripletBatch, exp_triplet_loss, sgd_step, softmax_cross_entropy
from .pipeline import GENDER_CLASSES, SHARED, VAD_CLASSES, CascadeBundle, StreamConfig, iter_windows
from .synthcorpus import EMOTIONS, CorpusManifest
from .wavio import read_wav


@dataclass
class TrainConfig:
    seed: int = 0
    lr: float = 0.05
    batch_size: int = 16
    classifier_epochs: int = 12
    encoder_epochs: int = 25
    batches_per_epoch: int = 16
    triplets_per_batch: int = 32
    margin: float = 0.2
    beta: float = 1.0
    mining: str = "random"  # or "semihard"
    emotion_epochs: int = 60
    clip_norm: float | None = 1.0  # emotion fine-tuning only
    freeze_trunk: bool = False
    shared_encoder: bool = False
    embed_dim: int = 32


@dataclass
class WindowSet:
    """Raw log-mel patches for every window of a list of manifest entries."""

    patches: np.ndarray  # (N, n_mels, n_frames), float32
    entry_index: np.ndarray  # (N,) index into ``entries``
    entries: list

    def labels(self, attr: str, classes) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(classes)}
        return np.array([lookup[getattr(self.entries[i], attr)] for i in self.entry_index], dtype=np.int64)

    def subset(self, mask) -> "WindowSet":
        mask = np.asarray(mask)
        return WindowSet(self.patches[mask], self.entry_index[mask], self.entries)

    def __len__(self):
        return self.patches.shape[0]


def load_windows(manifest: CorpusManifest, entries, cfg: StreamConfig = StreamConfig()) -> WindowSet:
    patches, index = [], []
    for i, entry in enumerate(entries):
        audio = read_wav(manifest.resolve(entry), expected_rate=cfg.sample_rate_hz)
        for w in iter_windows(audio, cfg):
            patches.append(w.mel_patch.astype(np.float32))
            index.append(i)
    if not patches:
        raise InvalidArgumentError("no windows could be extracted from the given entries")
    return WindowSet(np.stack(patches), np.array(index), list(entries))


def _inputs(patches, mean, std):
    return ((patches - mean) / std)[:, None].astype(np.float32)


def _check_finite(loss, stage):
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"{stage}: loss became non-finite ({loss})")


def train_classifier(model: Model, x: np.ndarray, y: np.ndarray, epochs: int, lr: float, batch_size: int, seed: int, log=None):
    """Mini-batch SGD on softmax cross-entropy. Returns per-epoch mean losses."""
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for a in range(0, len(order), batch_size):
            idx = order[a : a + batch_size]
            loss, g = softmax_cross_entropy(model.forward(x[idx]), y[idx])
            _check_finite(loss, model.name)
            sgd_step(model.params, model.backward(g), lr)
            total += loss * len(idx)
        losses.append(total / len(y))
        if log:
            log(f"{model.name} epoch {epoch + 1}/{epochs} loss {losses[-1]:.4f}")
    return losses


def sample_triplets(labels, groups, n, rng):
    """Random (anchor, positive, negative) index triples.

    Positives come from a different utterance (``groups``) of the anchor's
    speaker whenever one exists.
    """
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    by_label = {lab: np.flatnonzero(labels == lab) for lab in np.unique(labels)}
    if len(by_label) < 2:
        raise InvalidArgumentError("triplet sampling needs at least two speakers")
    anchors = rng.integers(len(labels), size=n)
    pos, neg = np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64)
    for t, a in enumerate(anchors):
        same = by_label[labels[a]]
        other_utt = same[groups[same] != groups[a]]
        pool = other_utt if other_utt.size else same[same != a]
        if pool.size == 0:
            pool = same
        pos[t] = pool[rng.integers(pool.size)]
        others = np.flatnonzero(labels != labels[a])
        neg[t] = others[rng.integers(others.size)]
    return anchors, pos, neg


def _semihard_negatives(model, x, labels, anchors, pos, rng, n_candidates=8):
    # pick the closest candidate negative that is still farther than the positive
    out = np.empty_like(anchors)
    ea = model.forward(x[anchors], cache=False)
    ep = model.forward(x[pos], cache=False)
    d_ap = 1.0 - np.sum(ea * ep, axis=1)
    for t, a in enumerate(anchors):
        others = np.flatnonzero(labels != labels[a])
        cand = others[rng.integers(others.size, size=n_candidates)]
        ec = model.forward(x[cand], cache=False)
        d = 1.0 - ec @ ea[t]
        ok = d > d_ap[t]
        out[t] = cand[np.argmin(np.where(ok, d, np.inf))] if ok.any() else cand[np.argmax(d)]
    return out


def train_encoder(
    model: Model,
    x: np.ndarray,
    labels: np.ndarray,
    groups: np.ndarray,
    epochs: int,
    batches_per_epoch: int,
    triplets_per_batch: int,
    lr: float,
    margin: float,
    beta: float,
    seed: int,
    mining: str = "random",
    log=None,
):
    """Metric learning with the exponential triplet loss. Returns per-epoch losses."""
    if mining not in ("random", "semihard"):
        raise InvalidArgumentError(f"unknown mining mode {mining!r}")
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(epochs):
        total = 0.0
        for _ in range(batches_per_epoch):
            a, p, n = sample_triplets(labels, groups, triplets_per_batch, rng)
            if mining == "semihard":
                n = _semihard_negatives(model, x, labels, a, p, rng)
            uniq, inv = np.unique(np.concatenate([a, p, n]), return_inverse=True)
            emb = model.forward(x[uniq]).astype(np.float64)
            t = len(a)
            ia, ip, ineg = inv[:t], inv[t : 2 * t], inv[2 * t :]
            loss, (ga, gp, gn) = exp_triplet_loss(
                TripletBatch(emb[ia], emb[ip], emb[ineg]), margin, beta, check_unit=False
            )
            _check_finite(loss, model.name)
            g = np.zeros_like(emb)
            np.add.at(g, ia, ga)
            np.add.at(g, ip, gp)
            np.add.at(g, ineg, gn)
            sgd_step(model.params, model.backward(g), lr)
            total += loss
        losses.append(total / batches_per_epoch)
        if log:
            log(f"{model.name} epoch {epoch + 1}/{epochs} triplet loss {losses[-1]:.4f}")
    return losses


@dataclass
class TrainResult:
    bundle: CascadeBundle
    history: dict = field(default_factory=dict)


def _speaker_codes(ws: WindowSet):
    ids = [ws.entries[i].speaker_id for i in ws.entry_index]
    names = sorted(set(ids))
    lookup = {s: k for k, s in enumerate(names)}
    return np.array([lookup[s] for s in ids], dtype=np.int64)


def train_cascade(manifest: CorpusManifest, cfg: TrainConfig = TrainConfig(), stream: StreamConfig = StreamConfig(), log=None) -> TrainResult:
    """Train every stage in cascade order: VAD, gender, encoders, emotion heads."""
    train_entries = manifest.select(split="train")
    if not train_entries:
        raise InvalidArgumentError("manifest has no training entries")
    ws = load_windows(manifest, train_entries, stream)
    mean = float(ws.patches.mean())
    std = float(ws.patches.std()) or 1.0
    x = _inputs(ws.patches, mean, std)
    n_mels, n_frames = ws.patches.shape[1:]
    history = {}

    vad = build_classifier(len(VAD_CLASSES), n_mels, n_frames, seed=cfg.seed + 1, name="vad")
    history["vad"] = train_classifier(
        vad, x, ws.labels("vad", VAD_CLASSES), cfg.classifier_epochs, cfg.lr, cfg.batch_size, cfg.seed + 1, log
    )

    speech = np.array([ws.entries[i].vad == "speech" for i in ws.entry_index])
    sp = ws.subset(speech)
    xs = x[speech]
    gender = build_classifier(len(GENDER_CLASSES), n_mels, n_frames, seed=cfg.seed + 2, name="gender")
    history["gender"] = train_classifier(
        gender, xs, sp.labels("gender", GENDER_CLASSES), cfg.classifier_epochs, cfg.lr, cfg.batch_size, cfg.seed + 2, log
    )

    routes = [SHARED] if cfg.shared_encoder else list(GENDER_CLASSES)
    encoders, heads, trunks = {}, {}, {}
    genders = np.array([sp.entries[i].gender for i in sp.entry_index])
    emo_labels = sp.labels("emotion", EMOTIONS)
    for k, route in enumerate(routes):
        mask = np.ones(len(sp), dtype=bool) if route == SHARED else genders == route
        enc = build_encoder(n_mels, n_frames, cfg.embed_dim, seed=cfg.seed + 10 + k, name=f"encoder_{route}")
        history[enc.name] = train_encoder(
            enc, xs[mask], _speaker_codes(sp.subset(mask)), sp.entry_index[mask],
            cfg.encoder_epochs, cfg.batches_per_epoch, cfg.triplets_per_batch,
            cfg.lr, cfg.margin, cfg.beta, cfg.seed + 10 + k, cfg.mining, log,
        )
        # unfrozen: fine-tune a copy so the speaker embedding is left untouched
        trunk = enc if cfg.freeze_trunk else enc.copy()
        trunk.name = enc.name if cfg.freeze_trunk else f"emotion_trunk_{route}"
        head, losses = train_emotion_head(
            trunk, xs[mask], emo_labels[mask], epochs=cfg.emotion_epochs, lr=cfg.lr,
            batch_size=cfg.batch_size, seed=cfg.seed + 20 + k, freeze_trunk=cfg.freeze_trunk,
            clip_norm=cfg.clip_norm, log=log,
        )
        head.name = f"emotion_{route}"
        history[head.name] = losses
        encoders[route], heads[route] = enc, head
        if not cfg.freeze_trunk:
            trunks[route] = trunk

    bundle = CascadeBundle(
        vad=vad, gender=gender, encoders=encoders, emotion_heads=heads, emotion_trunks=trunks,
        feature_mean=mean, feature_std=std, config=stream,
        versions={"seed": cfg.seed},
    )
    return TrainResult(bundle, history)
