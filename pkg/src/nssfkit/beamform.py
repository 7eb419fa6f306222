"""Far-field delay-and-sum beamforming and training-target construction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .corpus import AudioSignal, write_wav
from .errors import DatasetError, ShapeError
from .scene_sim import SINC_TAPS, SPEED_OF_SOUND, ArrayGeometry, SceneExample, _accumulate, example_dirs, load_example
from .spectral import JNF_STFT, SpectrogramStack, StftConfig, analyze, synthesize

TARGET_KINDS = ("dry", "dsb")
# STFT used for building DSB targets, independent of the model being trained
TARGET_STFT = JNF_STFT


@dataclass
class SteeringVector:
    weights: np.ndarray  # complex (M, F)
    doa_deg: float
    config: StftConfig


def dsb_weights(doa_deg: float, geometry: ArrayGeometry, cfg: StftConfig,
                sample_rate: int = 16000, c: float = SPEED_OF_SOUND) -> SteeringVector:
    """Phase-aligning weights with gain 1/M towards ``doa_deg``.

    A plane wave from ``doa_deg`` reaches the microphone at signed axis
    offset d_m earlier by d_m cos(doa) / c than the array centre, so that
    lead is removed: w_mf = exp(-j 2 pi f d_m cos(doa) / c) / M.
    """
    if not 0.0 <= doa_deg <= 180.0:
        raise ValueError("doa_deg must lie in [0, 180]")
    lead = geometry.offsets * np.cos(np.radians(doa_deg)) / c
    freqs = cfg.bin_frequencies(sample_rate)
    w = np.exp(-2j * np.pi * lead[:, None] * freqs[None, :]) / geometry.n_mics
    return SteeringVector(w, float(doa_deg), cfg)


def apply_dsb(S, w: SteeringVector) -> np.ndarray:
    """Y(f, t) = sum_m w[m, f] S[m, f, t]."""
    data = S.data if isinstance(S, SpectrogramStack) else np.asarray(S)
    if data.ndim != 3 or data.shape[:2] != w.weights.shape:
        raise ShapeError(f"spectrogram {data.shape} does not match steering weights {w.weights.shape}")
    return np.einsum("mf,mft->ft", w.weights, data)


def delay_signal(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Fractional delay with the same windowed-sinc kernel as the RIR direct path."""
    h = np.zeros(int(np.ceil(delay_samples)) + SINC_TAPS)
    _accumulate(h, np.array([delay_samples]), np.array([1.0]))
    return fftconvolve(x, h)[:x.size]


def direct_delay(example: SceneExample, q: int, mic: int) -> float:
    src = np.asarray(example.geometry.sources[q - 1].position)
    m = example.geometry.array.mic_positions[mic]
    return float(np.linalg.norm(src - m) / SPEED_OF_SOUND * example.sample_rate)


def make_target(example: SceneExample, kind: str, cfg: StftConfig = TARGET_STFT,
                ref_channel: int = 0) -> AudioSignal:
    """Training target for the desired sources of ``example``.

    ``dry`` sums the desired dry sources, each delayed by its direct-path
    delay to the reference microphone. ``dsb`` beamforms every desired
    source image towards its own true DOA and sums the results.
    """
    if kind not in TARGET_KINDS:
        raise ValueError(f"unknown target kind {kind!r}")
    if not example.desired_set:
        raise DatasetError("desired set is empty")
    N = example.input.shape[-1]
    out = np.zeros(N)
    for q in example.desired_set:
        if kind == "dry":
            out += delay_signal(example.dry[q - 1], direct_delay(example, q, ref_channel))
            continue
        if example.images is None or example.images.shape[0] < q:
            raise DatasetError(f"missing image for source {q}")
        w = dsb_weights(example.doas[q - 1], example.geometry.array, cfg, example.sample_rate)
        spec = analyze(example.images[q - 1], cfg, example.sample_rate)
        y = apply_dsb(spec, w)
        out += synthesize(SpectrogramStack(y[None], cfg, example.sample_rate), length=N)[0]
    return AudioSignal(out, example.sample_rate)


def target_path(example_dir, kind: str) -> Path:
    return Path(example_dir) / f"target_{kind}.wav"


def write_targets(dataset_root, kind: str, cfg: StftConfig = TARGET_STFT, overwrite: bool = False) -> int:
    """Cache ``target_<kind>.wav`` in every example directory; returns files written."""
    written = 0
    for d in example_dirs(dataset_root):
        path = target_path(d, kind)
        if path.exists() and not overwrite:
            continue
        ex = load_example(d)
        write_wav(path, make_target(ex, kind, cfg).samples, ex.sample_rate)
        written += 1
    return written
