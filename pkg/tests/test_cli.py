import hashlib
import json

import jsonschema
import numpy as np
import pytest

from helpers import untrained_bundle
from voxdesk import cli
from voxdesk.bundle import save_bundle
from voxdesk.cli import main
from voxdesk.dsp import AudioBuffer
from voxdesk.errors import TrainingDivergenceError
from voxdesk.evaluate import evaluate
from voxdesk.report import REPORT_SCHEMA, dumps, loads
from voxdesk.synthcorpus import generate_corpus, read_manifest
from voxdesk.wavio import read_wav, write_wav

SR = 16000


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    generate_corpus(out, n_speakers=4, n_utts_per_speaker=5, duration_s=1.5, root_seed=3)
    return out / "manifest.csv"


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["synth", "--speakers", "2"]) == 2
    assert "--out" in capsys.readouterr().err
    assert main(["synth", "--out", str(tmp_path), "--bogus"]) == 2
    assert main(["synth", "--out", str(tmp_path), "--speakers", "0"]) == 2
    assert main(["train", "--manifest", "m.csv", "--checkpoints", "ck", "--lr", "-1"]) == 2
    assert main(["analyze", "x.wav", "--checkpoints", "ck", "--tau", "0"]) == 2
    assert main([]) == 2


def test_synth_prints_manifest_and_is_reproducible(tmp_path, capsys):
    args = ["synth", "--speakers", "2", "--utts", "2", "--duration", "1.0", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert capsys.readouterr().out.strip() == str(tmp_path / "a" / "manifest.csv")
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _sha(tmp_path / "a" / "manifest.csv") == _sha(tmp_path / "b" / "manifest.csv")
    for wav in (tmp_path / "a" / "speech").iterdir():
        assert _sha(wav) == _sha(tmp_path / "b" / "speech" / wav.name)


def test_synth_odd_speaker_count_is_usage_error(tmp_path):
    assert main(["synth", "--speakers", "3", "--out", str(tmp_path)]) == 2


def test_synth_unwritable_output_is_io_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", "--speakers", "2", "--utts", "1", "--out", str(blocker / "sub")]) == 4
    assert "error" in capsys.readouterr().err


def test_train_bad_manifest(tmp_path, capsys):
    assert main(["train", "--manifest", str(tmp_path / "missing.csv"), "--checkpoints", str(tmp_path / "ck")]) == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("path,speaker_id,gender,vad,emotion,duration_s,split\na.wav,s,male,speech,Anger,2.0,train\nb.wav,s\n")
    assert main(["train", "--manifest", str(bad), "--checkpoints", str(tmp_path / "ck")]) == 5
    assert ":3:" in capsys.readouterr().err


def test_train_divergence_exits_3(tmp_path, small_corpus, monkeypatch):
    def boom(*a, **k):
        raise TrainingDivergenceError("loss became non-finite (nan)")

    monkeypatch.setattr(cli, "train_cascade", boom)
    assert main(["train", "--manifest", str(small_corpus), "--checkpoints", str(tmp_path / "ck")]) == 3


def _quick_train(manifest, ck):
    return main([
        "train", "--manifest", str(manifest), "--checkpoints", str(ck), "--seed", "7",
        "--epochs", "2", "--classifier-epochs", "2", "--emotion-epochs", "2",
    ])


def test_train_is_deterministic(tmp_path, small_corpus, capsys):
    assert _quick_train(small_corpus, tmp_path / "a") == 0
    out_a = capsys.readouterr().out
    assert _quick_train(small_corpus, tmp_path / "b") == 0
    out_b = capsys.readouterr().out
    for f in sorted((tmp_path / "a").glob("*.asya")):
        assert _sha(f) == _sha(tmp_path / "b" / f.name), f.name
    assert (tmp_path / "a" / "bundle.json").read_text() == (tmp_path / "b" / "bundle.json").read_text()

    def stable(text):  # timing rows and output paths differ between runs
        skip = ("latency", "real_time", "checkpoints written")
        return [l for l in text.splitlines() if not any(s in l for s in skip)]

    assert stable(out_a) == stable(out_b)
    assert "vad epoch 1/2 loss" in out_a and "reid_accuracy" in out_a


def test_eval_empty_test_split(tmp_path, small_corpus):
    m = read_manifest(small_corpus)
    lines = small_corpus.read_text().splitlines()
    only_train = tmp_path / "manifest.csv"
    only_train.write_text("\n".join([lines[0]] + [l.replace(",test", ",train") for l in lines[1:]]) + "\n")
    save_bundle(untrained_bundle(), tmp_path / "ck")
    for e in m.entries:
        (tmp_path / e.path).parent.mkdir(parents=True, exist_ok=True)
        (tmp_path / e.path).write_bytes((m.root / e.path).read_bytes())
    assert main(["eval", "--manifest", str(only_train), "--checkpoints", str(tmp_path / "ck")]) == 2


def test_oracle_embeddings_give_perfect_reid(small_corpus):
    m = read_manifest(small_corpus)
    spks = sorted({e.speaker_id for e in m.entries if e.vad == "speech"})

    def oracle(entry, k):
        return np.eye(8)[spks.index(entry.speaker_id)]

    res = evaluate(untrained_bundle(vad_bias=8.0), m, embedder=oracle)
    assert res.reid_accuracy == 1.0
    assert res.histogram_overlap == 0.0


def test_analyze_format_and_version_errors(tmp_path, capsys):
    ck = tmp_path / "ck"
    save_bundle(untrained_bundle(), ck)
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    assert main(["analyze", str(bad), "--checkpoints", str(ck)]) == 5
    assert "fmt" in capsys.readouterr().err
    stereo = tmp_path / "st.wav"
    import wave

    with wave.open(str(stereo), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(SR)
        wf.writeframes(b"\x00" * 400)
    assert main(["analyze", str(stereo), "--checkpoints", str(ck)]) == 5
    assert "num_channels" in capsys.readouterr().err
    meta = json.loads((ck / "bundle.json").read_text())
    meta["format"] = "voxdesk-bundle/99"
    (ck / "bundle.json").write_text(json.dumps(meta))
    silent = tmp_path / "silent.wav"
    write_wav(silent, AudioBuffer(np.zeros(SR), SR))
    assert main(["analyze", str(silent), "--checkpoints", str(ck)]) == 5
    assert "format" in capsys.readouterr().err


def test_analyze_silent_wav(tmp_path, capsys):
    ck = tmp_path / "ck"
    save_bundle(untrained_bundle(), ck)
    silent = tmp_path / "silent.wav"
    write_wav(silent, AudioBuffer(np.zeros(3 * SR), SR))
    assert main(["analyze", str(silent), "--checkpoints", str(ck)]) == 0
    report = json.loads(capsys.readouterr().out)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert report["speakers"] == [] and report["segments"] == []
    assert report["conversation"]["silence_s"] == pytest.approx(3.0)
    assert report["pipeline"]["n_speech_windows"] == 0
    assert loads(dumps(report)) == report


def _conversation(trained, path):
    # two test speakers of different gender taking turns, then a short pause
    test = trained.manifest.select(split="test", vad="speech")
    a = [e for e in test if e.speaker_id == "spk00"][:2]
    b = [e for e in test if e.speaker_id == "spk01"][:2]
    parts = [read_wav(trained.manifest.resolve(e)).samples for e in (a[0], a[1], b[0], b[1], a[0])]
    write_wav(path, AudioBuffer(np.concatenate(parts + [np.zeros(SR)]), SR))


def test_analyze_two_speaker_conversation(trained, tmp_path):
    wav, out, plots = tmp_path / "conv.wav", tmp_path / "report.json", tmp_path / "plots"
    _conversation(trained, wav)
    code = main(["analyze", str(wav), "--checkpoints", str(trained.checkpoints), "--out", str(out), "--emit-plots", str(plots)])
    assert code == 0
    report = json.loads(out.read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    assert loads(dumps(report)) == report
    assert len(report["speakers"]) == 2
    assert {s["gender"] for s in report["speakers"]} == {"male", "female"}
    assert [s["speaker_id"] for s in report["segments"]] == ["S1", "S2", "S1"]
    for seg in report["segments"]:
        assert abs(sum(seg["emotion"].values()) - 1.0) < 1e-9
    assert (plots / "distance_histogram.csv").read_text().startswith("bin_left,bin_right,intra,inter")
    assert (plots / "embedding_sphere.csv").read_text().startswith("start_s,speaker_id,x,y,z")


def test_checkpoint_dir_created_and_losses_fall(trained):
    assert (trained.checkpoints / "bundle.json").exists()
    for stage, losses in trained.history.items():
        assert losses[0] > losses[1] > losses[2], stage


def test_eval_reports_latency_row(trained):
    assert 0 < trained.metrics["median_window_latency_ms"] < 500
    assert trained.metrics["latency_audio_s"] >= 60


def test_benchmark_script(trained, repo_root, capsys):
    import importlib.util

    spec = importlib.util.spec_from_file_location("bench", repo_root / "scripts" / "benchmark_latency.py")
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    assert bench.main(["--manifest", str(trained.manifest_path), "--checkpoints", str(trained.checkpoints)]) == 0
    assert "within budget" in capsys.readouterr().out
