"""Save and load a trained cascade as a directory of ASYA1 checkpoints."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .dsp import FrameConfig
from .errors import FormatError, VersionError
from .nnet import checkpoint
from .pipeline import CascadeBundle, StreamConfig

BUNDLE_FILE = "bundle.json"
BUNDLE_FORMAT = "voxdesk-bundle/1"


def save_bundle(bundle: CascadeBundle, directory, extra: dict | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files = {"vad": "vad.asya", "gender": "gender.asya", "encoders": {}, "emotion_heads": {}, "emotion_trunks": {}}
    checkpoint.save(bundle.vad, out / files["vad"])
    checkpoint.save(bundle.gender, out / files["gender"])
    for group in ("encoders", "emotion_heads", "emotion_trunks"):
        for route, model in getattr(bundle, group).items():
            name = f"{group.rstrip('s')}_{route}.asya"
            checkpoint.save(model, out / name)
            files[group][route] = name
    stream = asdict(bundle.config)
    meta = {
        "format": BUNDLE_FORMAT,
        "checkpoint_version": checkpoint.FORMAT_VERSION,
        "feature_mean": bundle.feature_mean,
        "feature_std": bundle.feature_std,
        "stream": stream,
        "files": files,
        "versions": bundle.versions,
        **(extra or {}),
    }
    path = out / BUNDLE_FILE
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_bundle(directory) -> CascadeBundle:
    src = Path(directory)
    try:
        meta = json.loads((src / BUNDLE_FILE).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{src / BUNDLE_FILE}: {exc}") from exc
    if meta.get("format") != BUNDLE_FORMAT:
        raise VersionError(f"bundle format {meta.get('format')!r}, expected {BUNDLE_FORMAT!r}", field="format")
    files = meta["files"]
    stream = dict(meta["stream"])
    stream["frame"] = FrameConfig(**stream["frame"])
    return CascadeBundle(
        vad=checkpoint.load(src / files["vad"]),
        gender=checkpoint.load(src / files["gender"]),
        encoders={r: checkpoint.load(src / f) for r, f in files["encoders"].items()},
        emotion_heads={r: checkpoint.load(src / f) for r, f in files["emotion_heads"].items()},
        emotion_trunks={r: checkpoint.load(src / f) for r, f in files.get("emotion_trunks", {}).items()},
        feature_mean=float(meta["feature_mean"]),
        feature_std=float(meta["feature_std"]),
        config=StreamConfig(**stream),
        versions=dict(meta.get("versions", {})),
    )
