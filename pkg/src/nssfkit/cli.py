"""Command line entry point: simulate, train, probe, featmap, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import NssfError

log = logging.getLogger("nssfkit")

DEFAULTS = {
    "simulate": {"scenario": None, "count": 10, "seed": 0, "out": "data", "name": None, "corpus": None,
                 "synthetic": False, "synthetic_speakers": 8, "noise_snr": 30.0, "workers": 1},
    "train": {"model": "jnf", "target": "dsb", "dataset": None, "preset": "tiny", "seed": 0, "out": None,
              "epochs": 10, "lr": 1e-3, "batch_size": 1, "max_steps": None, "clip_norm": 5.0, "val_every": 1},
    "probe": {"run": None, "dataset": None, "stages": None, "trials": 5, "seed": 0, "out": None,
              "exclude_unresolved": False, "claim_mode": "source", "dump_features": None, "workers": None},
    "featmap": {"run": None, "example": None, "stage": None, "out": None, "signal": "target"},
    "report": {"probe_csvs": None, "out": None},
}
REQUIRED = {
    "simulate": ("scenario",),
    "train": ("dataset", "out"),
    "probe": ("run", "dataset", "out"),
    "featmap": ("run", "example", "stage", "out"),
    "report": ("probe_csvs", "out"),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nssfkit", description="Neural spatial filter probing toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        s = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        s.add_argument("--config", help="JSON file with option values (flags take precedence)")
        return s

    s = cmd("simulate", "render a dataset of multichannel sequences")
    s.add_argument("--scenario")
    s.add_argument("--count", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="dataset root directory")
    s.add_argument("--name", help="dataset directory name (default: scenario)")
    s.add_argument("--corpus", help="directory of 16 kHz mono WAV utterances")
    s.add_argument("--synthetic", action="store_true", help="use the synthetic speech-like corpus")
    s.add_argument("--synthetic-speakers", type=int)
    s.add_argument("--noise-snr", type=float)
    s.add_argument("--workers", type=int)

    s = cmd("train", "train a filter and write checkpoints")
    s.add_argument("--model", choices=["jnf", "cospa"])
    s.add_argument("--target", choices=["dry", "dsb"])
    s.add_argument("--dataset")
    s.add_argument("--preset", choices=["tiny", "full"])
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="run directory")
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--clip-norm", type=float)
    s.add_argument("--val-every", type=int)

    s = cmd("probe", "cluster hidden features and score source grouping")
    s.add_argument("--run", help="run directory or checkpoint file")
    s.add_argument("--dataset")
    s.add_argument("--stages", help="comma separated, default: all stages of the model")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="CSV file")
    s.add_argument("--exclude-unresolved", action="store_true")
    s.add_argument("--claim-mode", choices=["source", "cluster"])
    s.add_argument("--dump-features", help="directory for per-sequence feature dumps")
    s.add_argument("--workers", type=int)

    s = cmd("featmap", "export a feature map and waveform plot for one example")
    s.add_argument("--run")
    s.add_argument("--example", help="example directory")
    s.add_argument("--stage")
    s.add_argument("--out", help="output directory")
    s.add_argument("--signal", choices=["target", "input"])

    s = cmd("report", "render probe CSVs as a markdown table")
    s.add_argument("--probe-csvs", nargs="*")
    s.add_argument("--out", help="markdown file")
    return p


def resolve(command: str, flags: dict) -> dict:
    """flags > JSON config file > defaults."""
    cfg = dict(DEFAULTS[command])
    path = flags.pop("config", None)
    if path:
        loaded = json.loads(Path(path).read_text())
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(loaded)
    cfg.update(flags)
    return cfg


def _echo(cfg: dict, directory: Path, command: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{command}_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True, default=str))


def _run_checkpoint(run) -> Path:
    from .training import latest_checkpoint
    run = Path(run)
    return run if run.is_file() else latest_checkpoint(run)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict) -> int:
    from .corpus import load_wav_dir, synthetic_pool
    from .scene_sim import DatasetSpec, generate_dataset, load_manifest

    if cfg["corpus"]:
        pool = load_wav_dir(cfg["corpus"])
    else:
        pool = synthetic_pool(n_speakers=cfg["synthetic_speakers"], seed=cfg["seed"])
    spec = DatasetSpec(cfg["scenario"], cfg["count"], cfg["seed"], cfg["noise_snr"])
    root = generate_dataset(spec, pool, cfg["out"], name=cfg["name"], workers=cfg["workers"])
    _echo(cfg, root, "simulate")
    m = load_manifest(root)
    t60 = [e["t60"] for e in m["examples"]]
    print(f"{root}: {m['count']} x {m['scenario']} sequences, seed {m['seed']}, "
          f"T60 {min(t60):.2f}-{max(t60):.2f} s, {len(pool.speakers)} speakers")
    return 0


def cmd_train(cfg: dict) -> int:
    from .beamform import write_targets
    from .training import TrainConfig, train

    written = write_targets(cfg["dataset"], cfg["target"])
    if written:
        print(f"built {written} {cfg['target']} targets in {cfg['dataset']}")
    tc = TrainConfig(model_kind=cfg["model"], target_kind=cfg["target"], dataset=str(cfg["dataset"]),
                     epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr=cfg["lr"], seed=cfg["seed"],
                     preset=cfg["preset"], clip_norm=cfg["clip_norm"], max_steps=cfg["max_steps"],
                     out=str(cfg["out"]), val_every=cfg["val_every"])
    from .scene_sim import load_manifest
    tc.scenario = load_manifest(cfg["dataset"]).get("scenario")
    _echo(cfg, Path(cfg["out"]), "train")
    ckpt, tlog = train(tc)
    print(f"{ckpt}: {len(tlog.losses)} steps, final loss {tlog.losses[-1]:.2f} dB, "
          f"validation SNR {tlog.val_snr_db[-1]:.2f} dB, {tlog.wall_s:.1f} s")
    return 0


def cmd_probe(cfg: dict) -> int:
    from .models import load_model
    from .autodiff import load_checkpoint
    from .probe import extract_features, probe_dataset, write_feature_dump, write_report_csv
    from .scene_sim import example_dirs, load_example

    ckpt = _run_checkpoint(cfg["run"])
    model = load_model(ckpt)
    _, manifest = load_checkpoint(ckpt)
    stages = cfg["stages"].split(",") if cfg["stages"] else list(model.stages)
    rows = []
    for stage in stages:
        r = probe_dataset(model, cfg["dataset"], stage.strip(), trials=cfg["trials"], rng_seed=cfg["seed"],
                          exclude_unresolved=cfg["exclude_unresolved"], claim_mode=cfg["claim_mode"],
                          workers=cfg["workers"], target=manifest.get("target_kind", ""))
        r.scenario = manifest.get("scenario") or r.scenario
        rows.append(r)
        print(f"{model.kind} {r.target} {stage}: grouping {r.grouping_mean:.1f} %, "
              f"unresolved {r.unresolved_mean:.1f} +- {r.unresolved_std:.1f} %")
    out = write_report_csv(cfg["out"], rows)
    _echo(cfg, out.parent, out.stem + "_probe")
    if any(r.alt_unresolved_mean != r.unresolved_mean for r in rows):
        alt = [dict(r.csv_row(), unresolved_mean=r.alt_unresolved_mean, unresolved_std=r.alt_unresolved_std)
               for r in rows]
        other = "cluster" if cfg["claim_mode"] == "source" else "source"
        write_report_csv(out.with_name(f"{out.stem}.{other}_claims.csv"), alt)
    if cfg["dump_features"]:
        dump = Path(cfg["dump_features"])
        for d in example_dirs(cfg["dataset"]):
            ex = load_example(d)
            for stage in stages:
                write_feature_dump(dump / f"{Path(d).name}_{stage}.f32", extract_features(model, ex, stage))
    return 0


def feature_map(model, example, stage: str) -> tuple[np.ndarray, np.ndarray]:
    """Normalised (units x frames) map and raw frame labels of one example."""
    from .probe import extract_features, normalize_features

    fm = normalize_features(extract_features(model, example, stage))
    return fm.rows.T, fm.labels


def cmd_featmap(cfg: dict) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .beamform import make_target, target_path
    from .autodiff import load_checkpoint
    from .corpus import read_wav
    from .models import load_model
    from .scene_sim import load_example

    ckpt = _run_checkpoint(cfg["run"])
    model = load_model(ckpt)
    _, manifest = load_checkpoint(ckpt)
    ex = load_example(cfg["example"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    stage = cfg["stage"]
    fmap, labels = feature_map(model, ex, stage)
    lo, hi = float(fmap.min()), float(fmap.max())
    plt.imsave(out / f"featmap_{stage}.png", fmap, cmap="viridis", vmin=lo, vmax=hi if hi > lo else lo + 1,
               origin="lower")
    np.savetxt(out / f"featmap_{stage}.csv", fmap, delimiter=",", fmt="%.6g")

    kind = manifest.get("target_kind") or "dsb"
    if cfg["signal"] == "input":
        sig = ex.input[0]
    elif target_path(cfg["example"], kind).exists():
        sig = read_wav(target_path(cfg["example"], kind))[0]
    else:
        sig = make_target(ex, kind).samples
    markers = ex.timeline.change_points
    fig, ax = plt.subplots(figsize=(10, 2.5))
    t = np.arange(sig.size) / ex.sample_rate
    ax.plot(t, sig, lw=0.4, color="0.2")
    for m in markers:
        ax.axvline(m, color="red", lw=1.2)
    ax.set_xlim(0, t[-1])
    ax.set_xlabel("time (s)")
    ax.set_title(f"{cfg['signal']} ({kind})" if cfg["signal"] == "target" else "input, reference channel")
    fig.tight_layout()
    fig.savefig(out / "waveform.png", dpi=120)
    plt.close(fig)
    (out / "markers.json").write_text(json.dumps({"change_points_s": markers, "frames": int(fmap.shape[1]),
                                                  "units": int(fmap.shape[0]), "stage": stage,
                                                  "labels": labels.tolist()}, indent=1))
    _echo(cfg, out, "featmap")
    print(f"{out}: {fmap.shape[0]} units x {fmap.shape[1]} frames, {len(markers)} change markers")
    return 0


def _block_label(scenario: str | None, target: str) -> str:
    constrained = bool(scenario) and "-1fix" in scenario
    return f"{'C' if constrained else 'U'} - {target.upper()}"


def render_report(rows: list[dict]) -> str:
    """Markdown table: one row per (model, scenario & target, dataset), two columns per stage."""
    by_model = defaultdict(set)
    for r in rows:
        by_model[r["model"]].add(r["stage"])
    order = {"h0": 0, "h1": 1, "h2": 2, "h_in": 3, "h_out": 4}
    stages = sorted({r["stage"] for r in rows}, key=lambda s: (order.get(s, 9), s))
    cells = {}
    keys = []
    for r in rows:
        key = (r["model"], _block_label(r["scenario"], r["target"]), r["dataset"])
        if key not in cells:
            cells[key] = {}
            keys.append(key)
        cells[key][r["stage"]] = r
    if any(set(cells[k]) != by_model[k[0]] for k in keys):
        warnings.warn("probe CSVs cover different stage sets; rendering the union")

    header = ["Model", "Train", "Test set"]
    for s in stages:
        header += [f"{s} score", f"{s} unres. (%)"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    keys.sort(key=lambda k: (k[0], k[1][0] != "U", k[1], k[2]))
    prev = None
    for k in keys:
        model, block, ds = k
        label = (model.upper(), block) if (model, block) != prev else ("", "")
        prev = (model, block)
        row = [label[0], label[1], ds]
        for s in stages:
            r = cells[k].get(s)
            if r is None:
                row += ["-", "-"]
            else:
                row += [f"{r['grouping_mean']:.1f}", f"{r['unresolved_mean']:.1f} ± {r['unresolved_std']:.1f}"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: dict, parser) -> int:
    from .probe import read_report_csv

    if not cfg["probe_csvs"]:
        parser.error("report needs at least one probe CSV")
    rows = [r for p in cfg["probe_csvs"] for r in read_report_csv(p)]
    text = render_report(rows)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    _echo(cfg, out.parent, out.stem + "_report")
    print(text, end="")
    return 0


def main(argv=None) -> int:
    parser = _parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    verbose = args.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(command, args)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    missing = [k for k in REQUIRED[command] if cfg.get(k) in (None, [])]
    if command == "report" and cfg.get("probe_csvs") in (None, []):
        parser.error("report needs at least one probe CSV")
    if missing:
        parser.error(f"{command} needs --{missing[0].replace('_', '-')}")
    if command == "simulate" and not cfg["corpus"] and not cfg["synthetic"]:
        parser.error("simulate needs --corpus DIR or --synthetic")
    try:
        if command == "simulate":
            return cmd_simulate(cfg)
        if command == "train":
            return cmd_train(cfg)
        if command == "probe":
            return cmd_probe(cfg)
        if command == "featmap":
            return cmd_featmap(cfg)
        return cmd_report(cfg, parser)
    except NssfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
