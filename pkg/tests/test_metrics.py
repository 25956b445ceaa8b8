import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from voxdesk.diarization import DiarizationSegment
from voxdesk.dsp import AudioBuffer
from voxdesk.errors import InvalidArgumentError, TooShortError
from voxdesk.metrics import conversation_metrics, tempo_estimate

SR = 16000


def _seg(spk, a, b, **kw):
    return DiarizationSegment(spk, a, b, 1.0, **kw)


def test_talk_ratios():
    rep = conversation_metrics([_seg("A", 0, 40), _seg("B", 40, 60)], 60.0)
    assert rep.speakers["A"].talk_ratio == pytest.approx(0.667, abs=1e-3)
    assert rep.speakers["B"].talk_ratio == pytest.approx(0.333, abs=1e-3)
    assert rep.silence_s == pytest.approx(0.0)


def test_thirty_second_rule():
    rep = conversation_metrics([_seg("A", 0, 35), _seg("B", 35, 40)], 40.0)
    assert rep.speakers["A"].n_30s_violations == 1
    assert rep.speakers["B"].n_30s_violations == 0
    # touching segments of one speaker form a single utterance
    rep = conversation_metrics([_seg("A", 0, 20), _seg("A", 20, 31)], 31.0)
    assert rep.speakers["A"].n_utterances == 1
    assert rep.speakers["A"].n_30s_violations == 1


def test_empty_segments():
    rep = conversation_metrics([], 12.5)
    assert rep.speakers == {} and rep.silence_s == 12.5


def test_overlap_rejected():
    with pytest.raises(InvalidArgumentError):
        conversation_metrics([_seg("A", 0, 2), _seg("B", 1.5, 3)], 3.0)


def test_emotion_proxies():
    emo = {"Happiness": 0.5, "Sadness": 0.1, "Fear": 0.2, "Anger": 0.05, "Disgust": 0.05,
           "Surprise": 0.05, "Boredom": 0.025, "Neutrality": 0.025}
    rep = conversation_metrics([_seg("A", 0, 1, emotion=emo)], 1.0)
    assert rep.speakers["A"].positivity == pytest.approx(0.5)
    assert rep.speakers["A"].confidence == pytest.approx(0.7)


@st.composite
def segment_lists(draw):
    n = draw(st.integers(0, 12))
    t, segs = 0.0, []
    for _ in range(n):
        t += draw(st.floats(0, 3))
        d = draw(st.floats(0.5, 40))
        segs.append(_seg(draw(st.sampled_from("ABC")), t, t + d))
        t += d
    return segs, t + draw(st.floats(0, 5))


@given(segment_lists(), st.randoms(use_true_random=False))
def test_metrics_properties(data, rnd):
    segs, total = data
    rep = conversation_metrics(segs, total)
    spoken = sum(s.total_speech_s for s in rep.speakers.values())
    assert spoken + rep.silence_s == pytest.approx(total, abs=1e-6)
    shuffled = list(segs)
    rnd.shuffle(shuffled)
    assert conversation_metrics(shuffled, total) == rep


def _am_tone(rate_hz, seconds=2.0, gain=0.5):
    t = np.arange(int(seconds * SR)) / SR
    env = 0.5 - 0.5 * np.cos(2 * np.pi * rate_hz * t)
    return AudioBuffer(gain * env * np.sin(2 * np.pi * 300 * t), SR)


def test_tempo_examples():
    a = _am_tone(4.0)
    seg = _seg("A", 0.0, 2.0)
    assert tempo_estimate(a, seg) == pytest.approx(4.0, abs=0.5)
    assert tempo_estimate(_am_tone(8.0), seg) == pytest.approx(2 * tempo_estimate(a, seg), abs=0.5)
    assert tempo_estimate(AudioBuffer(np.zeros(2 * SR), SR), seg) == 0.0
    with pytest.raises(TooShortError):
        tempo_estimate(a, _seg("A", 0.0, 0.1))


@given(st.floats(0.01, 1.0), st.floats(2.0, 7.0))
def test_tempo_gain_invariant(gain, rate):
    seg = _seg("A", 0.0, 2.0)
    base = tempo_estimate(_am_tone(rate, gain=1.0), seg)
    assert tempo_estimate(_am_tone(rate, gain=gain), seg) == pytest.approx(base, abs=1e-9)
