import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from nssfkit.corpus import (AudioSignal, UtterancePool, load_wav_dir, loop_concat, read_wav, synth_speech,
                            synthetic_pool, write_wav)
from nssfkit.errors import NoUtterances, UnsupportedFormat


def _write_pcm(path, data, rate=16000):
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, rate, np.asarray(data, dtype=np.int16))


def test_load_two_speakers_three_files(tmp_path):
    for spk in ("alice", "bob"):
        for i in range(3):
            _write_pcm(tmp_path / spk / f"u{i}.wav", np.full(16000, 100 * (i + 1)))
    pool = load_wav_dir(tmp_path)
    assert len(pool) == 6
    assert pool.speakers == ["alice", "bob"]


def test_pcm16_scaling_is_exact(tmp_path):
    data = np.zeros(16000, dtype=np.int16)
    data[0], data[1], data[2] = -32768, 32767, 1
    _write_pcm(tmp_path / "s" / "a.wav", data)
    x = load_wav_dir(tmp_path).utterances[0][1].samples
    assert x[0] == -1.0
    assert x[1] == 32767 / 32768
    assert x[2] == 1 / 32768


def test_float32_is_accepted(tmp_path):
    (tmp_path / "s").mkdir()
    wavfile.write(tmp_path / "s" / "a.wav", 16000, np.linspace(-0.5, 0.5, 16000, dtype=np.float32))
    assert load_wav_dir(tmp_path).utterances[0][1].samples[0] == -0.5


def test_wrong_rate_rejected(tmp_path):
    _write_pcm(tmp_path / "s" / "a.wav", np.zeros(44100), rate=44100)
    with pytest.raises(UnsupportedFormat):
        load_wav_dir(tmp_path)


def test_stereo_rejected(tmp_path):
    _write_pcm(tmp_path / "s" / "a.wav", np.zeros((16000, 2)))
    with pytest.raises(UnsupportedFormat):
        load_wav_dir(tmp_path)


def test_empty_dir(tmp_path):
    with pytest.raises(NoUtterances):
        load_wav_dir(tmp_path)


def test_short_files_skipped(tmp_path):
    _write_pcm(tmp_path / "s" / "short.wav", np.zeros(8000))
    _write_pcm(tmp_path / "s" / "long.wav", np.zeros(16000))
    assert len(load_wav_dir(tmp_path)) == 1


def test_load_is_pure(tmp_path):
    for i in range(2):
        _write_pcm(tmp_path / f"spk{i}" / "x.wav", np.arange(16000) % 300)
    a, b = load_wav_dir(tmp_path), load_wav_dir(tmp_path)
    assert [s for s, _ in a.utterances] == [s for s, _ in b.utterances]
    for (_, u), (_, v) in zip(a.utterances, b.utterances):
        assert np.array_equal(u.samples, v.samples)


def test_disjoint_directories_share_no_speakers(tmp_path):
    _write_pcm(tmp_path / "a" / "x" / "1.wav", np.zeros(16000))
    _write_pcm(tmp_path / "b" / "y" / "1.wav", np.zeros(16000))
    assert not set(load_wav_dir(tmp_path / "a").speakers) & set(load_wav_dir(tmp_path / "b").speakers)


def test_synth_deterministic_and_length():
    a = synth_speech(3, 2.0, 7)
    b = synth_speech(3, 2.0, 7)
    assert len(a) == 32000
    assert np.array_equal(a.samples, b.samples)


def test_synth_speakers_differ():
    a = synth_speech(1, 2.0, 0).samples
    b = synth_speech(2, 2.0, 0).samples
    xc = np.correlate(a, b, mode="full") / (np.linalg.norm(a) * np.linalg.norm(b))
    assert np.max(np.abs(xc)) < 0.5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.0, 4.0), st.integers(0, 10_000))
def test_synth_rms_and_range(spk, dur, seed):
    x = synth_speech(spk, dur, seed).samples
    assert abs(np.sqrt(np.mean(x ** 2)) - 0.1) < 1e-6
    assert np.max(np.abs(x)) <= 1.0


def test_synth_has_pauses():
    x = synth_speech(5, 3.0, 1).samples
    frames = x[: 3 * 16000].reshape(-1, 160)
    energy = (frames ** 2).mean(axis=1)
    assert np.mean(energy < 1e-4 * np.median(energy)) > 0.05


@pytest.mark.parametrize("dur", [0.5, 10.5])
def test_synth_duration_bounds(dur):
    with pytest.raises(ValueError):
        synth_speech(0, dur, 0)


def test_synthetic_pool_names():
    p = synthetic_pool(n_speakers=3, utterances_per_speaker=2, duration_s=1.0)
    assert p.speakers == ["synth000", "synth001", "synth002"]
    assert len(p.by_speaker("synth001")) == 2


def test_audio_signal_validation():
    with pytest.raises(ValueError):
        AudioSignal(np.array([]))
    with pytest.raises(ValueError):
        AudioSignal(np.array([np.nan]))
    with pytest.raises(ValueError):
        AudioSignal(np.zeros(3), 0)


def test_loop_concat_crossfade():
    a, b = np.ones(1000), -np.ones(1000)
    y = loop_concat([a, b], 3000, crossfade_s=0.01)
    assert y.size == 3000
    assert y[0] == 1.0 and y[1500] == -1.0
    # crossfade ramps monotonically between the two levels
    seam = y[840:1000]
    assert np.all(np.diff(seam) <= 0)


def test_loop_concat_empty():
    with pytest.raises(NoUtterances):
        loop_concat([], 10)


def test_wav_roundtrip_multichannel(tmp_path):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (3, 1000))
    write_wav(tmp_path / "x.wav", x)
    y, fs = read_wav(tmp_path / "x.wav")
    assert fs == 16000 and y.shape == (3, 1000)
    assert np.allclose(x, y, atol=1e-7)


def test_pool_from_tuple():
    p = UtterancePool(((1, AudioSignal(np.ones(16000))),))
    assert p.speakers == ["1"]
