"""FT-JNF: wide-band BLSTM, narrow-band BLSTM, tanh output layer.

The network sees the real and imaginary parts of all channels stacked per
time-frequency point and predicts one compressed complex mask, which is
decompressed and applied to the reference channel.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import ShapeError
from ..spectral import SpectrogramStack, StftConfig

CLAMP = 1.0 - 1e-7


@dataclass(frozen=True)
class JnfConfig:
    n_mics: int = 3
    frame_len: int = 512
    hidden1: int = 256
    hidden2: int = 128
    K: float = 10.0
    C: float = 0.1
    ref_channel: int = 0

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.frame_len, self.frame_len // 2)

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1


PRESETS = {
    "full": JnfConfig(),
    "tiny": JnfConfig(frame_len=128, hidden1=16, hidden2=16),
}


@dataclass
class JnfFeatures:
    h0: np.ndarray  # (T, 2FM)
    h1: np.ndarray  # (T, 2FU1)
    h2: np.ndarray  # (T, 2FU2)


def compress_mask(m, K: float = 10.0, C: float = 0.1):
    """Bounded representation o = c / K of an unbounded mask component."""
    e = np.exp(-C * np.asarray(m, dtype=np.float64))
    return (K * (1.0 - e) / (1.0 + e)) / K


def decompress_mask(raw, K: float = 10.0, C: float = 0.1):
    """Map network outputs in (-1, 1) back to mask values.

    Per component: c = K o, m = ln((K + c) / (K - c)) / C. Outputs are
    clamped to +-(1 - 1e-7) first. Accepts numpy arrays or tensors.
    """
    if isinstance(raw, ad.Tensor):
        o = ad.clip(raw, -CLAMP, CLAMP)
        c = o * K
        return (ad.log(c + K) - ad.log(K - c)) * (1.0 / C)
    o = np.clip(np.asarray(raw, dtype=np.float64), -CLAMP, CLAMP)
    c = K * o
    return np.log((K + c) / (K - c)) / C


def apply_mask(X, mask, ref_channel: int = 0):
    """S(f, t) = mask(f, t) * X_ref(f, t).

    ``mask`` is a complex (F, T) array, or a (real, imag) tensor pair in which
    case a tensor pair is returned.
    """
    data = X.data if isinstance(X, SpectrogramStack) else np.asarray(X)
    ref = data[ref_channel]
    if isinstance(mask, tuple):
        if mask[0].shape != ref.shape:
            raise ShapeError(f"mask {mask[0].shape} does not match spectrogram {ref.shape}")
        return ad.complex_mul(mask, (ref.real, ref.imag))
    mask = np.asarray(mask)
    if mask.shape != ref.shape:
        raise ShapeError(f"mask {mask.shape} does not match spectrogram {ref.shape}")
    return mask * ref


def init_params(cfg: JnfConfig, rng) -> dict:
    params = {}
    for name, n_in, n_h in (("blstm1", 2 * cfg.n_mics, cfg.hidden1), ("blstm2", 2 * cfg.hidden1, cfg.hidden2)):
        for d in ("fwd", "bwd"):
            for k, v in ad.init_lstm(n_in, n_h, rng).items():
                params[f"{name}.{d}.{k}"] = v
    bound = 1.0 / np.sqrt(2 * cfg.hidden2)
    params["fc.W"] = ad.Tensor(rng.uniform(-bound, bound, (2 * cfg.hidden2, 2)), requires_grad=True)
    params["fc.b"] = ad.Tensor(rng.uniform(-bound, bound, 2), requires_grad=True)
    return params


def _sub(params, prefix):
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def stack_input(X: np.ndarray) -> np.ndarray:
    """(M, F, T) complex -> (T, F, 2M) real with all real parts first."""
    return np.concatenate([X.real, X.imag], axis=0).transpose(2, 1, 0)


def jnf_forward(X, params: dict, cfg: JnfConfig):
    """Mask pair (F, T) and the hidden tensors in their native layouts.

    Returns ``(mask_re, mask_im), {"h0": (T,F,2M), "h1": (F,T,2U1), "h2": (T,F,2U2)}``.
    """
    data = X.data if isinstance(X, SpectrogramStack) else np.asarray(X)
    if data.ndim != 3 or data.shape[0] != cfg.n_mics or data.shape[1] != cfg.n_bins:
        raise ShapeError(f"expected ({cfg.n_mics}, {cfg.n_bins}, T) input, got {data.shape}")
    h0 = ad.Tensor(stack_input(data))
    # wide-band: frequency is the sequence axis, frames are the batch
    h1 = ad.bilstm_layer(h0.transpose(1, 0, 2), _sub(params, "blstm1.fwd."), _sub(params, "blstm1.bwd."))
    # narrow-band: time is the sequence axis, bins are the batch
    h2 = ad.bilstm_layer(h1.transpose(1, 0, 2), _sub(params, "blstm2.fwd."), _sub(params, "blstm2.bwd."))
    T, F, U2 = h2.shape
    out = ad.tanh((h2.reshape(T * F, U2) @ params["fc.W"] + params["fc.b"]).reshape(T, F, 2))
    mask_re = decompress_mask(out[..., 0].T, cfg.K, cfg.C)
    mask_im = decompress_mask(out[..., 1].T, cfg.K, cfg.C)
    return (mask_re, mask_im), {"h0": h0, "h1": h1, "h2": h2}


def frame_rows(hidden: dict) -> JnfFeatures:
    """Flatten hidden tensors to one row per STFT frame."""
    h0 = hidden["h0"].data
    T = h0.shape[0]
    h1 = hidden["h1"].data.transpose(1, 0, 2)
    return JnfFeatures(h0.reshape(T, -1), h1.reshape(T, -1), hidden["h2"].data.reshape(T, -1))


class JNF:
    kind = "jnf"
    stages = ("h0", "h1", "h2")

    def __init__(self, config: JnfConfig = PRESETS["tiny"], params: dict | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, np.random.default_rng(seed))

    @property
    def stft(self) -> StftConfig:
        return self.config.stft

    def forward(self, X):
        mask, hidden = jnf_forward(X, self.params, self.config)
        return mask, hidden

    def estimate(self, X):
        """Enhanced reference-channel spectrum as a tensor pair (F, T)."""
        mask, _ = self.forward(X)
        return apply_mask(X, mask, self.config.ref_channel)

    def features(self, X) -> dict:
        with ad.no_grad():
            _, hidden = self.forward(X)
        rows = frame_rows(hidden)
        return {"h0": rows.h0, "h1": rows.h1, "h2": rows.h2}

    def mask(self, X) -> np.ndarray:
        with ad.no_grad():
            (re, im), _ = self.forward(X)
        return re.data + 1j * im.data

    def manifest(self) -> dict:
        return {"model_kind": self.kind, "config": asdict(self.config)}

    @classmethod
    def from_state(cls, arrays: dict, manifest: dict):
        cfg = JnfConfig(**manifest["config"])
        return cls(cfg, {k: ad.Tensor(v, requires_grad=True) for k, v in arrays.items()})
