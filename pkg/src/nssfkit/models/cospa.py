"""COSPA: channel-wise encoders, a channel-coupling compandor, channel-wise decoders.

Encoders map each channel's spectrum, grouped into bands of ``group``
adjacent bins, to ``enc_features`` complex features per band. The compandor
(complex FC, complex GRU, complex FC) is the only block that sees all
channels at once. Decoders return one complex mask per channel, and the
masks are combined by filter-and-sum.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import ShapeError
from ..spectral import SpectrogramStack, StftConfig


@dataclass(frozen=True)
class CospaConfig:
    n_mics: int = 3
    frame_len: int = 1024
    u_in: int = 128
    u_out: int = 128
    enc_features: int = 32
    group: int = 8
    recurrence: str = "cgru"        # or "identity" (needs u_in == u_out)
    activation: str = "split_tanh"  # GRU candidate activation, or "modrelu"

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.frame_len, self.frame_len // 2)

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def n_bands(self) -> int:
        return math.ceil(self.n_bins / self.group)

    @property
    def concat_size(self) -> int:
        return self.n_mics * self.n_bands * self.enc_features


PRESETS = {
    "full": CospaConfig(),
    "tiny": CospaConfig(frame_len=256, u_in=16, u_out=16, enc_features=8),
}


@dataclass
class CospaFeatures:
    h_in: np.ndarray   # complex (T, U_in)
    h_out: np.ndarray  # complex (T, U_out)


def _cparam(rng, bound, shape, prefix):
    return {
        prefix + "_re": ad.Tensor(rng.uniform(-bound, bound, shape), requires_grad=True),
        prefix + "_im": ad.Tensor(rng.uniform(-bound, bound, shape), requires_grad=True),
    }


def init_params(cfg: CospaConfig, rng) -> dict:
    if cfg.recurrence == "identity" and cfg.u_in != cfg.u_out:
        raise ValueError("identity recurrence needs u_in == u_out")
    Fr, G, E, D = cfg.n_bands, cfg.group, cfg.enc_features, cfg.concat_size
    p = {}
    p.update(_cparam(rng, 1 / math.sqrt(2 * G), (Fr, G, E), "enc.W"))
    p.update(_cparam(rng, 1 / math.sqrt(2 * G), (Fr, 1, E), "enc.b"))
    p.update(_cparam(rng, 1 / math.sqrt(2 * D), (D, cfg.u_in), "fc_in.W"))
    p.update(_cparam(rng, 1 / math.sqrt(2 * D), (cfg.u_in,), "fc_in.b"))
    if cfg.recurrence == "cgru":
        for k, v in ad.init_cgru(cfg.u_in, cfg.u_out, rng, cfg.activation).items():
            p["gru." + k] = v
    p.update(_cparam(rng, 1 / math.sqrt(2 * cfg.u_out), (cfg.u_out, D), "fc_out.W"))
    p.update(_cparam(rng, 1 / math.sqrt(2 * cfg.u_out), (D,), "fc_out.b"))
    p.update(_cparam(rng, 1 / math.sqrt(2 * E), (Fr, E, G), "dec.W"))
    p["dec.b_re"] = ad.Tensor(np.full((Fr, 1, G), 1.0 / cfg.n_mics), requires_grad=True)
    p["dec.b_im"] = ad.Tensor(np.zeros((Fr, 1, G)), requires_grad=True)
    return p


def _pair(params, name):
    return params[name + "_re"], params[name + "_im"]


def _affine(x, params, name):
    re, im = ad.complex_matmul(x, _pair(params, name + ".W"))
    br, bi = _pair(params, name + ".b")
    return re + br, im + bi


def _map(pair, fn):
    return fn(pair[0]), fn(pair[1])


def cospa_forward(X, params: dict, cfg: CospaConfig):
    """Per-channel mask pair (M, F, T) and the compandor features (T, U) pairs."""
    data = X.data if isinstance(X, SpectrogramStack) else np.asarray(X)
    M, F, T = cfg.n_mics, cfg.n_bins, data.shape[-1]
    if data.ndim != 3 or data.shape[:2] != (M, F):
        raise ShapeError(f"expected ({M}, {F}, T) input, got {data.shape}")
    Fr, G, E = cfg.n_bands, cfg.group, cfg.enc_features
    padded = np.concatenate([data, np.zeros((M, Fr * G - F, T), dtype=complex)], axis=1)
    bands = padded.reshape(M, Fr, G, T).transpose(1, 0, 3, 2).reshape(Fr, M * T, G)
    x = (ad.Tensor(np.ascontiguousarray(bands.real)), ad.Tensor(np.ascontiguousarray(bands.imag)))

    enc = ad.split_tanh(_affine(x, params, "enc"))                       # (Fr, M*T, E)
    cat = _map(enc, lambda t: t.reshape(Fr, M, T, E).transpose(2, 1, 0, 3).reshape(T, cfg.concat_size))
    h_in = ad.split_tanh(_affine(cat, params, "fc_in"))                 # (T, U_in)
    if cfg.recurrence == "cgru":
        gru = {k[4:]: v for k, v in params.items() if k.startswith("gru.")}
        seq = _map(h_in, lambda t: t.reshape(T, 1, cfg.u_in))
        h_out = _map(ad.cgru_layer(seq, gru, cfg.activation), lambda t: t.reshape(T, cfg.u_out))
    else:
        h_out = h_in
    y = ad.split_tanh(_affine(h_out, params, "fc_out"))               # (T, D)
    y = _map(y, lambda t: t.reshape(T, M, Fr, E).transpose(2, 1, 0, 3).reshape(Fr, M * T, E))
    dec = _affine(y, params, "dec")                                    # (Fr, M*T, G)
    masks = _map(dec, lambda t: t.reshape(Fr, M, T, G).transpose(1, 0, 3, 2).reshape(M, Fr * G, T)[:, :F, :])
    return masks, {"h_in": h_in, "h_out": h_out}


def apply_masks(X, masks):
    """Filter-and-sum: S(f, t) = sum_m mask_m(f, t) X_m(f, t).

    ``masks`` is a complex (M, F, T) array or a (real, imag) tensor pair.
    """
    data = X.data if isinstance(X, SpectrogramStack) else np.asarray(X)
    if isinstance(masks, tuple):
        if masks[0].shape != data.shape:
            raise ShapeError(f"masks {masks[0].shape} do not match spectrogram {data.shape}")
        re, im = ad.complex_mul(masks, (data.real, data.imag))
        return re.sum(axis=0), im.sum(axis=0)
    masks = np.asarray(masks)
    if masks.shape != data.shape:
        raise ShapeError(f"masks {masks.shape} do not match spectrogram {data.shape}")
    return np.sum(masks * data, axis=0)


class COSPA:
    kind = "cospa"
    stages = ("h_in", "h_out")

    def __init__(self, config: CospaConfig = PRESETS["tiny"], params: dict | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, np.random.default_rng(seed))

    @property
    def stft(self) -> StftConfig:
        return self.config.stft

    def forward(self, X):
        return cospa_forward(X, self.params, self.config)

    def estimate(self, X):
        masks, _ = self.forward(X)
        return apply_masks(X, masks)

    def features(self, X) -> dict:
        """Frame rows with real parts followed by imaginary parts."""
        with ad.no_grad():
            _, hidden = self.forward(X)
        return {k: np.concatenate([v[0].data, v[1].data], axis=1) for k, v in hidden.items()}

    def masks(self, X) -> np.ndarray:
        with ad.no_grad():
            (re, im), _ = self.forward(X)
        return re.data + 1j * im.data

    def manifest(self) -> dict:
        return {"model_kind": self.kind, "config": asdict(self.config)}

    @classmethod
    def from_state(cls, arrays: dict, manifest: dict):
        cfg = CospaConfig(**manifest["config"])
        return cls(cfg, {k: ad.Tensor(v, requires_grad=True) for k, v in arrays.items()})
