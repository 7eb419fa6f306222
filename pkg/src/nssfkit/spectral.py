"""STFT analysis/synthesis and frame-level activity labels.

Shapes follow (channels, bins, frames). Frames are taken without centre
padding, so T = floor((N - L) / shift) + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import get_window

from .errors import SignalTooShort

SILENCE = 0


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 512
    shift: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_len <= 0 or not 0 < self.shift <= self.frame_len:
            raise ValueError("invalid frame_len/shift")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.frame_len) // self.shift + 1

    def signal_length(self, n_frames: int) -> int:
        return (n_frames - 1) * self.shift + self.frame_len

    def bin_frequencies(self, sample_rate: int) -> np.ndarray:
        return np.arange(self.n_bins) * sample_rate / self.frame_len

    def frame_centers(self, n_frames: int, sample_rate: int) -> np.ndarray:
        return (np.arange(n_frames) * self.shift + self.frame_len / 2) / sample_rate


JNF_STFT = StftConfig(512, 256)
COSPA_STFT = StftConfig(1024, 512)


@lru_cache(maxsize=None)
def window_for(cfg: StftConfig) -> np.ndarray:
    # scipy windows are periodic (fftbins=True) by default
    w = get_window(cfg.window, cfg.frame_len)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=None)
def _window_power_sum(cfg: StftConfig, n_frames: int) -> np.ndarray:
    w2 = window_for(cfg) ** 2
    total = np.zeros(cfg.signal_length(n_frames))
    for t in range(n_frames):
        total[t * cfg.shift:t * cfg.shift + cfg.frame_len] += w2
    total.setflags(write=False)
    return total


def wola_normalizer(cfg: StftConfig, n_frames: int, floor: float = 1e-10) -> np.ndarray:
    """Per-sample reciprocal of the summed squared synthesis window."""
    return 1.0 / np.maximum(_window_power_sum(cfg, n_frames), floor)


@dataclass
class SpectrogramStack:
    data: np.ndarray          # complex (M, F, T)
    config: StftConfig
    sample_rate: int = 16000

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_bins(self):
        return self.data.shape[1]

    @property
    def n_frames(self):
        return self.data.shape[2]


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Windowed frames with shape (..., T, L)."""
    n = x.shape[-1]
    if n < cfg.frame_len:
        raise SignalTooShort(f"signal of {n} samples is shorter than one frame ({cfg.frame_len})")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len, axis=-1)[..., ::cfg.shift, :]
    return frames * window_for(cfg)


def analyze(x, cfg: StftConfig, sample_rate: int = 16000) -> SpectrogramStack:
    """One-sided STFT of a (M, N) or (N,) signal."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    spec = np.fft.rfft(frame_signal(x, cfg), axis=-1)
    return SpectrogramStack(np.swapaxes(spec, -1, -2), cfg, sample_rate)


def synthesize(S: SpectrogramStack, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`analyze`.

    Returns (M, N). Samples beyond the last frame are zero when ``length``
    exceeds the natural synthesis length.
    """
    cfg = S.config
    data = S.data if S.data.ndim == 3 else S.data[None]
    M, _, T = data.shape
    frames = np.fft.irfft(np.swapaxes(data, -1, -2), n=cfg.frame_len, axis=-1) * window_for(cfg)
    out = np.zeros((M, cfg.signal_length(T)))
    for t in range(T):
        out[:, t * cfg.shift:t * cfg.shift + cfg.frame_len] += frames[:, t]
    out *= wola_normalizer(cfg, T)
    if length is not None:
        if length <= out.shape[1]:
            out = out[:, :length]
        else:
            out = np.concatenate([out, np.zeros((M, length - out.shape[1]))], axis=1)
    return out


@lru_cache(maxsize=None)
def irfft_matrices(frame_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Real matrices (F, L) with irfft(re + 1j*im) == re @ A + im @ B."""
    F = frame_len // 2 + 1
    eye = np.eye(F)
    a = np.fft.irfft(eye, n=frame_len, axis=-1)
    b = np.fft.irfft(1j * eye, n=frame_len, axis=-1)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def frame_energy(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Windowed energy per frame of a (N,) or (Q, N) signal summed over rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    return np.sum(frame_signal(x, cfg) ** 2, axis=(0, -1))


def frame_labels(timeline, cfg: StftConfig, energy: np.ndarray, sample_rate: int = 16000,
                 silence_db: float = -40.0) -> np.ndarray:
    """Per-frame source labels (1, 2, ...) with 0 marking silence.

    A frame takes the label of the timeline segment containing its centre
    time (segments are half-open, the final one closed). Frames whose
    reference energy lies more than ``silence_db`` below the median frame
    energy are relabelled silence.
    """
    energy = np.asarray(energy, dtype=np.float64)
    centers = cfg.frame_centers(energy.size, sample_rate)
    labels = np.array([timeline.source_at(t) for t in centers], dtype=np.int64)
    median = np.median(energy)
    if median > 0:
        labels[energy < median * 10.0 ** (silence_db / 10.0)] = SILENCE
    else:
        labels[energy <= 0] = SILENCE
    return labels
