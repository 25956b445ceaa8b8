"""Command-line entry point: ``voxdesk {synth,train,analyze,eval}``.

Exit codes: 0 ok, 2 usage, 3 training failure, 4 I/O, 5 format/version.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .bundle import load_bundle, save_bundle
from .diarization import SpeakerRegistry, build_segments, diarize
from .dsp import FrameConfig
from .errors import (
    ConfigurationError,
    EmptyInputError,
    FormatError,
    InvalidArgumentError,
    ModelError,
    TrainingDivergenceError,
    VoxError,
)
from .evaluate import evaluate
from .metrics import conversation_metrics
from .pipeline import StreamConfig, process_stream, real_time_factor
from .report import build_report, dumps, emit_plots
from .synthcorpus import EMOTIONS, generate_corpus, read_manifest
from .training import TrainConfig, train_cascade
from .wavio import read_wav

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRAIN = 3
EXIT_IO = 4
EXIT_FORMAT = 5


@dataclass
class RunConfig:
    """Parsed command line, one object per invocation."""

    subcommand: str
    paths: dict = field(default_factory=dict)
    frame: FrameConfig = FrameConfig()
    train: TrainConfig = field(default_factory=TrainConfig)
    tau: float = 0.1
    d_new: float = 0.6
    seed: int = 0
    options: dict = field(default_factory=dict)


def _ranged(kind, lo=None, hi=None, lo_open=False):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise argparse.ArgumentTypeError(f"{v} is below the allowed minimum {lo}")
        if hi is not None and v > hi:
            raise argparse.ArgumentTypeError(f"{v} is above the allowed maximum {hi}")
        return v

    return parse


_pos_int = _ranged(int, 1)
_nonneg_int = _ranged(int, 0)
_pos_float = _ranged(float, 0.0, lo_open=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxdesk", description="Desk-scale conversation analytics on synthetic speech.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("synth", help="generate the synthetic corpus")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--speakers", type=_pos_int, default=8)
    s.add_argument("--utts", type=_pos_int, default=20)
    s.add_argument("--duration", type=_ranged(float, 0.5, 60.0), default=2.0)
    s.add_argument("--noise-fraction", type=_ranged(float, 0.0, 0.95), default=0.2)
    s.add_argument("--seed", type=_nonneg_int, default=0)

    t = sub.add_parser("train", help="train every cascade stage")
    t.add_argument("--manifest", required=True, type=Path)
    t.add_argument("--checkpoints", required=True, type=Path)
    t.add_argument("--seed", type=_nonneg_int, default=0)
    t.add_argument("--epochs", type=_pos_int, default=TrainConfig.encoder_epochs, help="encoder epochs")
    t.add_argument("--classifier-epochs", type=_pos_int, default=TrainConfig.classifier_epochs)
    t.add_argument("--emotion-epochs", type=_pos_int, default=TrainConfig.emotion_epochs)
    t.add_argument("--lr", type=_ranged(float, 0.0, 1.0, lo_open=True), default=TrainConfig.lr)
    t.add_argument("--margin", type=_ranged(float, 0.0, 2.0), default=TrainConfig.margin)
    t.add_argument("--beta", type=_ranged(float, 0.0, 10.0, lo_open=True), default=TrainConfig.beta)
    t.add_argument("--batch-size", type=_pos_int, default=TrainConfig.batch_size)
    t.add_argument("--mining", choices=("random", "semihard"), default=TrainConfig.mining)
    t.add_argument("--freeze-trunk", action="store_true", help="train the emotion head on the frozen speaker encoder")
    t.add_argument("--shared-encoder", action="store_true", help="one encoder for both gender routes")
    t.add_argument("--n-mels", type=_pos_int, default=FrameConfig.n_mels)
    t.add_argument("--fft-size", type=_pos_int, default=FrameConfig.fft_size)
    t.add_argument("--window-len", type=_pos_int, default=FrameConfig.window_len_samples)
    t.add_argument("--hop-len", type=_pos_int, default=FrameConfig.hop_len_samples)
    t.add_argument("--no-eval", action="store_true", help="skip the final test-split evaluation")

    a = sub.add_parser("analyze", help="analyze one WAV file and emit a JSON report")
    a.add_argument("wav", type=Path)
    a.add_argument("--checkpoints", required=True, type=Path)
    a.add_argument("--out", type=Path, help="report file (default: stdout)")
    a.add_argument("--emit-plots", type=Path, metavar="DIR", help="write histogram and projection CSVs here")
    a.add_argument("--tau", type=_pos_float, default=0.1)
    a.add_argument("--d-new", type=_ranged(float, 0.0, 2.0, lo_open=True), default=0.6)
    a.add_argument("--seed", type=_nonneg_int, default=0)

    e = sub.add_parser("eval", help="evaluate a trained cascade on the test split")
    e.add_argument("--manifest", required=True, type=Path)
    e.add_argument("--checkpoints", required=True, type=Path)
    e.add_argument("--csv", type=Path, help="write metrics as CSV")
    e.add_argument("--confusion-csv", type=Path, help="write the emotion confusion matrix as CSV")
    return p


def parse_args(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    opts = vars(ns).copy()
    cfg = RunConfig(ns.subcommand, seed=getattr(ns, "seed", 0), options=opts)
    cfg.paths = {k: v for k, v in opts.items() if isinstance(v, Path)}
    if ns.subcommand == "train":
        try:
            cfg.frame = FrameConfig(
                window_len_samples=ns.window_len, hop_len_samples=ns.hop_len, fft_size=ns.fft_size, n_mels=ns.n_mels
            )
        except ConfigurationError as exc:
            build_parser().error(str(exc))
        cfg.train = TrainConfig(
            seed=ns.seed, lr=ns.lr, batch_size=ns.batch_size, classifier_epochs=ns.classifier_epochs,
            encoder_epochs=ns.epochs, margin=ns.margin, beta=ns.beta, mining=ns.mining,
            emotion_epochs=ns.emotion_epochs, freeze_trunk=ns.freeze_trunk, shared_encoder=ns.shared_encoder,
        )
    if ns.subcommand == "analyze":
        cfg.tau, cfg.d_new = ns.tau, ns.d_new
    return cfg


def _out(msg, stream=None):
    print(msg, file=stream or sys.stdout, flush=True)


def cmd_synth(cfg: RunConfig) -> int:
    o = cfg.options
    generate_corpus(o["out"], o["speakers"], o["utts"], o["duration"], o["noise_fraction"], root_seed=cfg.seed)
    _out(str(Path(o["out"]) / "manifest.csv"))
    return EXIT_OK


def print_metrics(result, stream=None) -> None:
    rows = result.rows()
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        _out(f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}", stream)


def cmd_train(cfg: RunConfig) -> int:
    o = cfg.options
    manifest = read_manifest(o["manifest"])
    stream = StreamConfig(frame=cfg.frame)
    result = train_cascade(manifest, cfg.train, stream, log=_out)
    save_bundle(result.bundle, o["checkpoints"], extra={"history": result.history})
    _out(f"checkpoints written to {o['checkpoints']}")
    if not o["no_eval"]:
        print_metrics(evaluate(result.bundle, manifest))
    return EXIT_OK


def analyze_file(wav_path, bundle, tau=0.1, d_new=0.6, plots_dir=None) -> dict:
    audio = read_wav(wav_path, expected_rate=bundle.config.sample_rate_hz)
    try:
        anns = process_stream(audio, bundle)
    except EmptyInputError:
        anns = []  # shorter than one window: nothing to report
    diarize(anns, SpeakerRegistry(tau=tau, d_new=d_new))
    segments = build_segments(anns, bundle.config.hop_s)
    conv = conversation_metrics(segments, audio.duration_s, audio)
    if plots_dir is not None:
        emit_plots(plots_dir, anns)
    versions = {"bundle": "voxdesk-bundle/1", **bundle.versions}
    for name, m in [("vad", bundle.vad), ("gender", bundle.gender), *bundle.encoders.items()]:
        versions.setdefault("models", {})[name if name in ("vad", "gender") else f"encoder_{name}"] = m.name
    return build_report(wav_path, audio, anns, segments, conv, versions, real_time_factor(anns, audio.duration_s))


def cmd_analyze(cfg: RunConfig) -> int:
    o = cfg.options
    bundle = load_bundle(o["checkpoints"])
    text = dumps(analyze_file(o["wav"], bundle, cfg.tau, cfg.d_new, o["emit_plots"]))
    if o["out"] is None:
        _out(text)
    else:
        Path(o["out"]).write_text(text + "\n")
    return EXIT_OK


def write_metrics_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerows(result.rows())


def write_confusion_csv(path, confusion) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\predicted", *EMOTIONS])
        for name, row in zip(EMOTIONS, confusion):
            w.writerow([name, *row])


def cmd_eval(cfg: RunConfig) -> int:
    o = cfg.options
    manifest = read_manifest(o["manifest"])
    bundle = load_bundle(o["checkpoints"])
    result = evaluate(bundle, manifest)
    print_metrics(result)
    if o["csv"]:
        write_metrics_csv(o["csv"], result)
    if o["confusion_csv"]:
        write_confusion_csv(o["confusion_csv"], result.emotion_confusion)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "analyze": cmd_analyze, "eval": cmd_eval}


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except FormatError as exc:  # includes VersionError
        _out(f"error: {exc}", sys.stderr)
        return EXIT_FORMAT
    except ModelError as exc:
        _out(f"error: incompatible checkpoint: {exc}", sys.stderr)
        return EXIT_FORMAT
    except TrainingDivergenceError as exc:
        _out(f"error: training failed: {exc}", sys.stderr)
        return EXIT_TRAIN
    except OSError as exc:
        _out(f"error: {exc}", sys.stderr)
        return EXIT_IO
    except (InvalidArgumentError, ConfigurationError) as exc:
        _out(f"error: {exc}", sys.stderr)
        return EXIT_USAGE
    except VoxError as exc:
        _out(f"error: {exc}", sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
