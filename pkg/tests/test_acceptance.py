"""Acceptance criteria, one test each, printing a pass/fail line per criterion.

Criteria 1-5 reuse the session ``trained`` fixture (CLI train with the default
seed on the default corpus, then CLI eval). Criteria 6 and 7 need no training.
Run verbosely with ``pytest tests/test_acceptance.py -s -v`` or
``python scripts/run_acceptance.py``.
"""

import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import REL_TOL, model_gradcheck, numeric_grad, rel_error, untrained_bundle
from voxdesk.architectures import build_classifier, build_emotion_head, build_encoder
from voxdesk.diarization import NEW, SpeakerRegistry, assign_speaker, build_segments, enroll_or_update
from voxdesk.dsp import AudioBuffer, fft, hz_to_mel, mel_to_hz, naive_dft
from voxdesk.nnet import (
    Conv2D,
    Dense,
    GlobalAvgPool,
    L2Normalize,
    Model,
    ReLU,
    Softmax,
    TripletBatch,
    exp_triplet_loss,
    softmax_cross_entropy,
)
from voxdesk.pipeline import process_stream
from voxdesk.synthcorpus import generate_corpus
from voxdesk.wavio import read_wav

SR = 16000


@pytest.fixture
def report(capsys):
    def _emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        return ok

    return _emit


def test_criterion_1_reidentification(trained, report):
    acc, secs = trained.metrics["reid_accuracy"], trained.seconds
    ok = acc >= 0.95 and secs < 15 * 60
    assert report(1, ok, f"re-id accuracy {acc:.4f} (>= 0.95), train+eval {secs:.1f} s (< 900 s)")


def test_criterion_2_distance_separation(trained, report):
    m = trained.metrics
    intra, inter, ov = m["mean_intra_distance"], m["mean_inter_distance"], m["histogram_overlap"]
    ok = intra + 0.1 < inter and ov < 0.10
    assert report(2, ok, f"intra {intra:.4f} + 0.1 < inter {inter:.4f}, overlap {ov:.4f} (< 0.10)")


def test_criterion_3_latency(trained, report):
    m = trained.metrics
    lat, rtf, dur = m["median_window_latency_ms"], m["real_time_factor"], m["latency_audio_s"]
    ok = lat < 500 and rtf < 0.5 and dur >= 60
    assert report(3, ok, f"median window {lat:.2f} ms (< 500), RTF {rtf:.4f} (< 0.5) over {dur:.1f} s (>= 60)")


def test_criterion_4_vad_and_gender(trained, report):
    vad, gen = trained.metrics["vad_accuracy"], trained.metrics["gender_accuracy"]
    ok = vad >= 0.95 and gen >= 0.95
    assert report(4, ok, f"VAD {vad:.4f}, gender {gen:.4f} (both >= 0.95)")


def test_criterion_5_emotion(trained, report):
    acc = trained.metrics["emotion_accuracy"]
    worst, n = 0.0, 0
    for e in trained.manifest.select(split="test"):
        for a in process_stream(read_wav(trained.manifest.resolve(e)), trained.bundle):
            if a.emotion is not None:
                worst = max(worst, abs(sum(a.emotion.probabilities) - 1.0))
                n += 1
    ok = acc >= 0.90 and n > 0 and worst <= 1e-9
    assert report(5, ok, f"emotion accuracy {acc:.4f} (>= 0.90), max |sum-1| {worst:.1e} over {n} distributions")


LAYERS = [
    ([Conv2D(2, 3, (3, 3))], (2, 6, 7)),
    ([Conv2D(2, 3, (2, 3), (1, 2))], (2, 5, 9)),
    ([Dense(5, 4)], (5,)),
    ([ReLU()], (6,)),
    ([GlobalAvgPool()], (3, 4, 5)),
    ([L2Normalize()], (6,)),
    ([Softmax()], (6,)),
]


def test_criterion_6_numerical_suites(report):
    rng = np.random.default_rng(0)
    errs = []
    for i, (layers, shape) in enumerate(LAYERS):
        x = rng.normal(size=(3,) + shape)
        errs.append(max(model_gradcheck(Model(layers, shape, rng_seed=i), x).values()))
    for model, shape in (
        (build_encoder(n_mels=8, n_frames=20, embed_dim=4, channels=3, seed=1), (1, 8, 20)),
        (build_classifier(2, n_mels=8, n_frames=20, channels=3, seed=2), (1, 8, 20)),
        (build_emotion_head(6, seed=3), (6,)),
    ):
        errs.append(max(model_gradcheck(model, rng.normal(size=(2,) + shape)).values()))
    unit = lambda: (lambda v: v / np.linalg.norm(v, axis=1, keepdims=True))(rng.normal(size=(5, 4)))
    a, p, n = unit(), unit(), unit()
    _, grads = exp_triplet_loss(TripletBatch(a, p, n), margin=0.2, beta=1.0)
    f = lambda: exp_triplet_loss(TripletBatch(a, p, n), 0.2, 1.0, check_unit=False)[0]
    errs += [rel_error(g, numeric_grad(f, arr)) for arr, g in zip((a, p, n), grads)]
    logits, labels = rng.normal(size=(4, 8)), np.array([0, 3, 7, 2])
    _, g = softmax_cross_entropy(logits, labels)
    errs.append(rel_error(g, numeric_grad(lambda: softmax_cross_entropy(logits, labels)[0], logits)))
    grad_err = max(errs)

    fft_err = 0.0
    for k in range(2, 10):
        x = rng.normal(size=2 ** k) + 1j * rng.normal(size=2 ** k)
        fft_err = max(fft_err, float(np.max(np.abs(fft(x) - naive_dft(x)))))

    f_hz = np.concatenate([[0.0, 1e-6, 1.0, 700.0, 8000.0], rng.uniform(0, 24000, 2000)])
    back = mel_to_hz(hz_to_mel(f_hz))
    mel_err = float(np.max(np.abs(back - f_hz) / np.maximum(f_hz, 1e-300)))

    ok = grad_err < REL_TOL and fft_err < 1e-6 and mel_err <= 1e-9
    assert report(6, ok, f"gradcheck max rel {grad_err:.1e} (< 1e-4), FFT max abs {fft_err:.1e} (< 1e-6, N 4..512), "
                         f"mel round trip {mel_err:.1e} (<= 1e-9)")


unit4 = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.array(v) / np.linalg.norm(v)
)


def _stream(kinds, seed):
    from helpers import noise_audio, speech_audio

    rng = np.random.default_rng(seed)
    parts = []
    for kind in kinds:
        s = int(rng.integers(1000))
        if kind == "silence":
            parts.append(np.zeros(SR // 2))
        elif kind == "noise":
            parts.append(noise_audio("white", 0.5, s).samples)
        else:
            parts.append(speech_audio(gender=kind, duration_s=0.5, seed=s).samples)
    return AudioBuffer(np.concatenate(parts), SR)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.sampled_from(["silence", "noise", "male", "female"]), min_size=2, max_size=6),
       st.sampled_from([None, 8.0, -8.0]), st.integers(0, 50))
def _cascade_ordering(kinds, bias, seed):
    for a in process_stream(_stream(kinds, seed), untrained_bundle(vad_bias=bias, seed=seed)):
        present = (a.gender is not None, a.embedding is not None, a.emotion is not None)
        assert all(present) if a.vad == "speech" else not any(present)


@given(st.lists(st.sampled_from(["A", "B", None]), max_size=40))
def _segment_coverage(labels):
    from voxdesk.pipeline import FrameAnnotation, FrameWindow

    anns = []
    for i, lab in enumerate(labels):
        a = FrameAnnotation(FrameWindow(np.zeros((1, 1)), 0.5 * i, 0.0), "speech" if lab else "noise", 1.0)
        a.speaker_id = lab
        anns.append(a)
    total = sum(s.duration_s for s in build_segments(anns, hop_s=0.5))
    assert total == pytest.approx(0.5 * sum(lab is not None for lab in labels), abs=1e-9)


@given(st.lists(unit4, min_size=1, max_size=20), st.randoms(use_true_random=False))
def _running_mean(vs, rnd):
    order = list(range(len(vs)))
    rnd.shuffle(order)
    reg = SpeakerRegistry()
    prof = enroll_or_update(vs[order[0]], NEW, reg)
    for i in order[1:]:
        enroll_or_update(vs[i], prof.speaker_id, reg)
    np.testing.assert_allclose(prof.mean, np.mean(vs, axis=0), atol=1e-9)


@given(unit4, unit4, unit4, st.floats(0.01, 10), st.floats(0.01, 10))
def _assignment(e, a, b, tau1, tau2):
    winners = []
    for tau in (tau1, tau2):
        reg = SpeakerRegistry(tau=tau)
        reg.enroll(a, "A")
        reg.enroll(b, "B")
        winners.append(assign_speaker(e, reg).best)
    assert winners[0] == winners[1]
    r1, r2 = SpeakerRegistry(), SpeakerRegistry()
    r1.enroll(a, "A"), r1.enroll(b, "B"), r2.enroll(b, "A"), r2.enroll(a, "B")
    p1, p2 = assign_speaker(e, r1).probabilities, assign_speaker(e, r2).probabilities
    assert p1["A"] == pytest.approx(p2["B"], abs=1e-12) and p1["B"] == pytest.approx(p2["A"], abs=1e-12)


def _tree_digest(root):
    h = hashlib.sha256()
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(f.relative_to(root)).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def test_criterion_7_property_suites(tmp_path, report):
    results = {}
    for name, prop in (("cascade ordering", _cascade_ordering), ("segment coverage", _segment_coverage),
                       ("running mean", _running_mean), ("assignment symmetry/temperature", _assignment)):
        try:
            prop()
            results[name] = True
        except AssertionError:
            results[name] = False
    for d in ("a", "b"):
        generate_corpus(tmp_path / d, n_speakers=2, n_utts_per_speaker=3, duration_s=1.0, root_seed=11)
    results["corpus reproducibility"] = _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")
    ok = all(results.values())
    detail = ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in results.items())
    assert report(7, ok, detail)
