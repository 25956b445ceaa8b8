import csv
import json
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from voxdesk.bundle import load_bundle
from voxdesk.cli import main
from voxdesk.synthcorpus import read_manifest


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """The default synthetic corpus (8 speakers x 20 utterances x 2 s, seed 0)."""
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--speakers", "8", "--utts", "20", "--out", str(out), "--seed", "0"]) == 0
    return read_manifest(out / "manifest.csv")


@pytest.fixture(scope="session")
def trained(default_corpus, tmp_path_factory):
    """Train with the default seed and evaluate, both through the CLI."""
    root = tmp_path_factory.mktemp("run")
    manifest = default_corpus.root / "manifest.csv"
    ck = root / "checkpoints" / "nested"  # must be created by train
    t0 = time.perf_counter()
    assert main(["train", "--manifest", str(manifest), "--checkpoints", str(ck), "--no-eval"]) == 0
    t_train = time.perf_counter() - t0
    metrics_csv, confusion_csv = root / "metrics.csv", root / "confusion.csv"
    t0 = time.perf_counter()
    code = main(["eval", "--manifest", str(manifest), "--checkpoints", str(ck),
                 "--csv", str(metrics_csv), "--confusion-csv", str(confusion_csv)])
    t_eval = time.perf_counter() - t0
    assert code == 0
    with open(metrics_csv) as fh:
        metrics = {row["metric"]: float(row["value"]) for row in csv.DictReader(fh)}
    meta = json.loads((ck / "bundle.json").read_text())
    return SimpleNamespace(
        root=root,
        manifest_path=manifest,
        manifest=default_corpus,
        checkpoints=ck,
        bundle=load_bundle(ck),
        metrics=metrics,
        history=meta["history"],
        confusion_csv=confusion_csv,
        seconds=t_train + t_eval,
    )


@pytest.fixture
def repo_root():
    return Path(__file__).resolve().parents[1]


def pytest_collection_modifyitems(items):
    # anything that needs the trained cascade is slow
    for item in items:
        if "trained" in getattr(item, "fixturenames", ()):
            item.add_marker(pytest.mark.slow)
