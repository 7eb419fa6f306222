"""Pieces shared by both filters: differentiable synthesis and model loading."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..spectral import StftConfig, irfft_matrices, window_for, wola_normalizer


def istft_tensor(spec, cfg: StftConfig) -> ad.Tensor:
    """Differentiable single-channel WOLA synthesis of a (F, T) (real, imag) pair.

    Matches :func:`nssfkit.spectral.synthesize` sample for sample.
    """
    re, im = spec
    T = re.shape[1]
    A, B = irfft_matrices(cfg.frame_len)
    w = window_for(cfg)
    frames = (re.T @ A + im.T @ B) * w
    return ad.overlap_add(frames, cfg.shift) * wola_normalizer(cfg, T)


def to_pair(x: np.ndarray):
    return ad.Tensor(np.ascontiguousarray(x.real)), ad.Tensor(np.ascontiguousarray(x.imag))


def pair_to_complex(pair) -> np.ndarray:
    return pair[0].data + 1j * pair[1].data


def load_model(path):
    """Instantiate the filter stored in a checkpoint file."""
    from ..autodiff import load_checkpoint
    from .cospa import COSPA
    from .jnf import JNF

    params, manifest = load_checkpoint(path)
    kind = manifest.get("model_kind")
    cls = {"jnf": JNF, "cospa": COSPA}.get(kind)
    if cls is None:
        raise ValueError(f"checkpoint {path} has unknown model kind {kind!r}")
    return cls.from_state(params, manifest)
