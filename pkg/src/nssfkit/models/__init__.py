from .common import istft_tensor, load_model
from .cospa import COSPA, CospaConfig, CospaFeatures, apply_masks, cospa_forward
from .cospa import PRESETS as COSPA_PRESETS
from .jnf import JNF, JnfConfig, JnfFeatures, apply_mask, compress_mask, decompress_mask, jnf_forward
from .jnf import PRESETS as JNF_PRESETS


def build_model(kind: str, preset: str = "tiny", seed: int = 0, **overrides):
    """Fresh filter of ``kind`` ('jnf' or 'cospa') from a named preset."""
    from dataclasses import replace

    if kind == "jnf":
        return JNF(replace(JNF_PRESETS[preset], **overrides), seed=seed)
    if kind == "cospa":
        return COSPA(replace(COSPA_PRESETS[preset], **overrides), seed=seed)
    raise ValueError(f"unknown model kind {kind!r}")
