"""Speech material: WAV corpus ingestion and a synthetic speech-like generator.

The synthetic generator exists so every pipeline stage can run without a
licensed corpus. It is not a vocoder; it only has to provide speaker-dependent
spectral colouring, syllabic modulation and pauses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from .errors import NoUtterances, UnsupportedFormat

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
MIN_UTTERANCE_S = 1.0
CROSSFADE_S = 0.05

# keeps speaker-trait streams disjoint from excitation streams
_SPEAKER_STREAM = 0x5EED


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("AudioSignal needs a non-empty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioSignal samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class UtterancePool:
    utterances: tuple

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple((str(s), u) for s, u in self.utterances))

    def __len__(self):
        return len(self.utterances)

    @property
    def speakers(self) -> list[str]:
        return sorted({s for s, _ in self.utterances})

    def by_speaker(self, speaker_id: str) -> list[AudioSignal]:
        return [u for s, u in self.utterances if s == speaker_id]


def _decode(data: np.ndarray, path: Path) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.float32:
        return data.astype(np.float64)
    raise UnsupportedFormat(f"{path}: sample format {data.dtype} is not PCM16 or float32")


def load_wav_dir(path) -> UtterancePool:
    """Load every mono 16 kHz WAV file below ``path``.

    The speaker id of a file is the name of its immediate parent directory.
    Files are visited in lexicographic path order. Utterances shorter than
    one second are skipped with a warning.
    """
    root = Path(path)
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".wav")
    if not files:
        raise NoUtterances(f"no WAV files found below {root}")
    utterances = []
    for f in files:
        rate, data = wavfile.read(f)
        if rate != SAMPLE_RATE:
            raise UnsupportedFormat(f"{f}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz")
        if data.ndim != 1:
            raise UnsupportedFormat(f"{f}: {data.shape[1]} channels, expected mono")
        samples = _decode(data, f)
        if samples.size < MIN_UTTERANCE_S * rate:
            logger.warning("skipping %s: shorter than %.1f s", f, MIN_UTTERANCE_S)
            continue
        utterances.append((f.parent.name, AudioSignal(samples, rate)))
    if not utterances:
        raise NoUtterances(f"no usable utterances below {root}")
    return UtterancePool(tuple(utterances))


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write float32 WAV; ``samples`` is (N,) or (channels, N)."""
    samples = np.asarray(samples)
    data = samples.T if samples.ndim == 2 else samples
    wavfile.write(str(path), sample_rate, np.ascontiguousarray(data, dtype=np.float32))


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float64, returning ((channels, N) or (N,), rate)."""
    rate, data = wavfile.read(str(path))
    samples = _decode(data, Path(path))
    return (samples.T.copy() if samples.ndim == 2 else samples), rate


def _resonator(freq: float, bandwidth: float, fs: int):
    r = np.exp(-np.pi * bandwidth / fs)
    a = [1.0, -2.0 * r * np.cos(2 * np.pi * freq / fs), r * r]
    return [1.0 - r], a


def _syllable_envelope(n: int, rate_hz: float, fs: int, rng) -> np.ndarray:
    gap_frac = rng.uniform(0.1, 0.2)
    total_gap = int(round(gap_frac * n))
    speech_len = n - total_gap

    mean_len = fs / rate_hz
    lengths = []
    while sum(lengths) < speech_len:
        lengths.append(max(16, int(mean_len * rng.uniform(0.7, 1.3))))
    lengths[-1] -= sum(lengths) - speech_len
    if lengths[-1] < 16 and len(lengths) > 1:
        lengths[-2] += lengths.pop()

    n_gaps = max(1, int(round(n / fs)))
    gap_lens = np.floor(total_gap * rng.dirichlet(np.ones(n_gaps))).astype(int)
    gap_lens[0] += total_gap - gap_lens.sum()
    after = set(rng.choice(len(lengths) + 1, size=min(n_gaps, len(lengths) + 1), replace=False).tolist())
    gaps = iter(gap_lens)

    pieces = []
    for i, length in enumerate(lengths + [0]):
        if i in after:
            pieces.append(np.zeros(next(gaps, 0)))
        if length:
            pieces.append(rng.uniform(0.5, 1.0) * np.hanning(length + 2)[1:-1])
    env = np.concatenate(pieces)
    if env.size < n:
        env = np.concatenate([env, np.zeros(n - env.size)])
    return env[:n]


def synth_speech(speaker_seed: int, duration_s: float, rng_seed: int,
                 sample_rate: int = SAMPLE_RATE) -> AudioSignal:
    """Speech-like test signal with speaker-dependent formants.

    White noise is filtered by a cascade of three resonators whose centre
    frequencies (300-3500 Hz) and bandwidths depend only on ``speaker_seed``,
    then amplitude-modulated at a 3-5 Hz syllabic rate with 10-20 % of the
    duration left silent. The result has RMS 0.1.
    """
    if not 1.0 <= duration_s <= 10.0:
        raise ValueError("duration_s must lie in [1, 10] seconds")
    n = int(round(duration_s * sample_rate))

    traits = np.random.default_rng([_SPEAKER_STREAM, speaker_seed])
    formants = np.sort(traits.uniform(300.0, 3500.0, size=3))
    bandwidths = traits.uniform(80.0, 250.0, size=3)
    syllable_rate = traits.uniform(3.0, 5.0)

    rng = np.random.default_rng([speaker_seed, rng_seed])
    y = rng.standard_normal(n)
    for f, bw in zip(formants, bandwidths):
        b, a = _resonator(f, bw, sample_rate)
        y = lfilter(b, a, y)
    y = y * _syllable_envelope(n, syllable_rate, sample_rate, rng)
    y *= 0.1 / np.sqrt(np.mean(y ** 2))
    return AudioSignal(y, sample_rate)


def synthetic_pool(n_speakers: int = 8, utterances_per_speaker: int = 4,
                   duration_s: float = 3.0, seed: int = 0) -> UtterancePool:
    """Pool of synthetic speakers ``synth000``, ``synth001``, ..."""
    utts = []
    for k in range(n_speakers):
        speaker_seed = seed * 100003 + k
        for j in range(utterances_per_speaker):
            utts.append((f"synth{k:03d}", synth_speech(speaker_seed, duration_s, j)))
    return UtterancePool(tuple(utts))


def loop_concat(signals, n_samples: int, crossfade_s: float = CROSSFADE_S,
                sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Concatenate ``signals`` cyclically with linear crossfades until ``n_samples``."""
    if n_samples <= 0:
        return np.zeros(0)
    signals = [np.asarray(getattr(s, "samples", s), dtype=np.float64) for s in signals]
    if not signals:
        raise NoUtterances("nothing to concatenate")
    xf = int(round(crossfade_s * sample_rate))
    out = signals[0].copy()
    i = 1
    while out.size < n_samples:
        nxt = signals[i % len(signals)]
        i += 1
        k = min(xf, out.size, nxt.size)
        if k:
            ramp = np.linspace(0.0, 1.0, k + 2)[1:-1]
            out[-k:] = out[-k:] * (1.0 - ramp) + nxt[:k] * ramp
        out = np.concatenate([out, nxt[k:]])
    return out[:n_samples]
