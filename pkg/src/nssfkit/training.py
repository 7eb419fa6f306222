"""Training loop with the time-domain SNR cost."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .beamform import TARGET_KINDS, delay_signal, direct_delay, target_path
from .corpus import read_wav
from .errors import DatasetError, DegenerateTarget, TrainingDiverged
from .models import build_model, istft_tensor
from .scene_sim import example_dirs, load_example, load_manifest
from .spectral import analyze

logger = logging.getLogger(__name__)

SNR_EPS = 1e-8
_DB = 10.0 / np.log(10.0)


def snr_loss(estimate, target, eps: float = SNR_EPS):
    """Negative SNR in dB with an error floor of ``eps * ||target||^2``.

    ``estimate`` may be a tensor (the result is then a scalar tensor) or an
    array (the result is a float).
    """
    target = np.asarray(target, dtype=np.float64)
    energy = float(np.sum(target ** 2))
    if energy == 0.0:
        raise DegenerateTarget("target signal has zero energy")
    if tuple(np.shape(estimate)) != target.shape:
        raise ValueError(f"estimate {np.shape(estimate)} and target {target.shape} differ in length")
    if isinstance(estimate, ad.Tensor):
        err = ad.sum_(ad.square(estimate - target)) + eps * energy
        return ad.log(err) * _DB - _DB * np.log(energy)
    err = float(np.sum((np.asarray(estimate) - target) ** 2)) + eps * energy
    return float(_DB * (np.log(err) - np.log(energy)))


def alignment_lag(target: np.ndarray, reference: np.ndarray, max_lag: int = 64) -> int:
    """Lag (samples) of the phase-transform cross-correlation peak.

    Positive means ``target`` lags ``reference``. Whitening keeps the peak on
    the direct path in reverberant mixtures.
    """
    n = target.size + reference.size
    cross = np.fft.rfft(target, n) * np.conj(np.fft.rfft(reference, n))
    xc = np.fft.irfft(cross / np.maximum(np.abs(cross), 1e-12), n)
    window = np.concatenate([xc[-max_lag:], xc[:max_lag + 1]])
    return int(np.argmax(window)) - max_lag


@dataclass
class TrainConfig:
    model_kind: str = "jnf"
    target_kind: str = "dsb"
    dataset: str = ""
    epochs: int = 10
    batch_size: int = 1
    lr: float = 1e-3
    seed: int = 0
    preset: str = "tiny"
    clip_norm: float = 5.0
    max_steps: int | None = None
    out: str = "runs/run"
    scenario: str | None = None
    check_alignment: bool = True
    scan_dtype: str = "float32"  # LSTM recurrence precision during training
    val_every: int = 1              # epochs between validation passes; the last epoch always validates

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.target_kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.target_kind!r}")


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    val_snr_db: list = field(default_factory=list)
    wall_s: float = 0.0


@dataclass
class TrainItem:
    input: np.ndarray   # (M, N)
    target: np.ndarray  # (N,)
    name: str = ""


def load_items(dataset, target_kind: str, check_alignment: bool = True, ref_channel: int = 0) -> list[TrainItem]:
    """Load inputs and cached targets; fails before any training step."""
    dirs = example_dirs(dataset)
    if not dirs:
        raise DatasetError(f"dataset {dataset} is empty")
    missing = [d for d in dirs if not target_path(d, target_kind).exists()]
    if missing:
        raise DatasetError(f"{len(missing)} examples lack target_{target_kind}.wav (first: {missing[0]})")
    items = []
    for d in dirs:
        x, _ = read_wav(Path(d) / "input.wav")
        s, _ = read_wav(target_path(d, target_kind))
        items.append(TrainItem(np.atleast_2d(x), s, Path(d).name))
    if check_alignment:
        for d, it in zip(dirs, items):
            lag = alignment_lag(it.target, _alignment_reference(d, target_kind, ref_channel))
            if abs(lag) > 1:
                raise DatasetError(f"{it.name}: target misaligned by {lag} samples")
    return items


def _alignment_reference(example_dir, target_kind: str, ref_channel: int) -> np.ndarray:
    """What a correctly aligned target should line up with.

    Dry targets are compared with the direct path of the desired sources at
    the reference mic. Reverberant images are no good here: in low rooms the
    stacked floor/ceiling reflections outweigh the direct path. DSB targets
    are reverberant themselves and are compared with the images at the
    array centre.
    """
    if target_kind == "dry":
        ex = load_example(example_dir)
        return sum(delay_signal(ex.dry[q - 1], direct_delay(ex, q, ref_channel)) for q in ex.desired_set)
    meta = json.loads((Path(example_dir) / "meta.json").read_text())
    ch = meta["array"]["n_mics"] // 2
    return sum(read_wav(Path(example_dir) / f"image_q{q}.wav")[0][ch] for q in meta["desired_set"])


def _crop(cfg_stft, n: int) -> slice:
    # the first and last half frame see a single window only
    return slice(cfg_stft.shift, n - cfg_stft.shift)


def sequence_loss(model, item: TrainItem):
    """Graph from noisy input to the SNR loss for one sequence."""
    stft = model.stft
    X = analyze(item.input, stft).data
    est = istft_tensor(model.estimate(X), stft)
    sl = _crop(stft, est.shape[0])
    return snr_loss(est[sl], item.target[sl])


def enhance(model, x: np.ndarray) -> np.ndarray:
    """Time-domain estimate for a (M, N) input, zero-padded to N."""
    stft = model.stft
    with ad.no_grad():
        est = istft_tensor(model.estimate(analyze(x, stft).data), stft).data
    out = np.zeros(x.shape[-1])
    out[:est.size] = est[:x.shape[-1]]
    return out


def evaluate_snr(model, items) -> dict:
    """Mean output SNR and mean unprocessed reference-channel SNR (dB)."""
    out, inp = [], []
    ref = getattr(model.config, "ref_channel", 0)
    for it in items:
        est = enhance(model, it.input)
        n = model.stft.signal_length(model.stft.n_frames(it.input.shape[-1]))
        sl = _crop(model.stft, n)
        out.append(-snr_loss(est[sl], it.target[sl]))
        inp.append(-snr_loss(it.input[ref][sl], it.target[sl]))
    return {"output_snr_db": float(np.mean(out)), "input_snr_db": float(np.mean(inp))}


def train(cfg: TrainConfig, items: list[TrainItem] | None = None, val_items: list[TrainItem] | None = None):
    """Train a fresh filter; returns (path of last checkpoint, TrainLog).

    Writes ``config.json``, ``log.jsonl`` (one object per step),
    ``epochs.jsonl`` and ``checkpoint_ep<k>`` into ``cfg.out``.
    """
    t0 = time.perf_counter()
    if items is None:
        items = load_items(cfg.dataset, cfg.target_kind, cfg.check_alignment)
    if val_items is None:
        val_items = items[:min(4, len(items))]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_info = {}
    if cfg.dataset:
        try:
            manifest_info = {"dataset_scenario": load_manifest(cfg.dataset).get("scenario")}
        except DatasetError:
            pass
    (out / "config.json").write_text(json.dumps({**asdict(cfg), **manifest_info}, indent=1, sort_keys=True))

    model = build_model(cfg.model_kind, cfg.preset, seed=cfg.seed)
    opt = ad.Adam(model.params, lr=cfg.lr, clip_norm=cfg.clip_norm)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    step = 0
    ckpt = None
    with open(out / "log.jsonl", "w") as steplog, open(out / "epochs.jsonl", "w") as eplog, \
            ad.scan_precision(cfg.scan_dtype):
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(items))
            for start in range(0, len(order), cfg.batch_size):
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
                ts = time.perf_counter()
                opt.zero_grad()
                batch = [items[i] for i in order[start:start + cfg.batch_size]]
                total = 0.0
                for it in batch:
                    loss = sequence_loss(model, it)
                    if not np.isfinite(loss.data):
                        raise TrainingDiverged(f"non-finite loss at step {step} on {it.name} "
                                               f"(last grad norm {opt.last_grad_norm:.3g})")
                    ad.backward(loss, np.full((), 1.0 / len(batch)))
                    total += float(loss.data) / len(batch)
                opt.step()
                step += 1
                log.losses.append(total)
                steplog.write(json.dumps({"step": step, "epoch": epoch, "loss": total, "lr": cfg.lr,
                                          "grad_norm": opt.last_grad_norm,
                                          "wall_ms": round((time.perf_counter() - ts) * 1000, 2)}) + "\n")
            last = epoch == cfg.epochs or (cfg.max_steps is not None and step >= cfg.max_steps)
            val = None
            if val_items and (last or (cfg.val_every > 0 and epoch % cfg.val_every == 0)):
                val = evaluate_snr(model, val_items)["output_snr_db"]
                log.val_snr_db.append(val)
            ckpt = out / f"checkpoint_ep{epoch}"
            meta = {**model.manifest(), "target_kind": cfg.target_kind, "scenario": cfg.scenario,
                    "epoch": epoch, "step": step, "seed": cfg.seed, "preset": cfg.preset}
            ad.save_checkpoint(ckpt, model.params, meta)
            eplog.write(json.dumps({"epoch": epoch, "step": step, "val_snr_db": val,
                                    "wall_s": round(time.perf_counter() - t0, 2)}) + "\n")
            eplog.flush()
            steplog.flush()
            logger.info("epoch %d step %d loss %.2f val SNR %s dB", epoch, step, total, val)
            if last:
                break
    log.wall_s = time.perf_counter() - t0
    return ckpt, log


def latest_checkpoint(run_dir) -> Path:
    ckpts = sorted(Path(run_dir).glob("checkpoint_ep*"), key=lambda p: int(p.name[len("checkpoint_ep"):]))
    if not ckpts:
        raise DatasetError(f"no checkpoints in {run_dir}")
    return ckpts[-1]
