"""Scaled-down trend study: does spatial information show up where expected?

Trains every (model, target) cell for the unconstrained and the constrained
scenario on a synthetic corpus, probes each run on its three test sets and
checks the directional patterns:

  a) COSPA with DSB targets groups better after the recurrent compandor layer
     than before it, the same-position control stays near chance and the
     one-speaker-two-positions set scores highest;
  b) FT-JNF h2 groups better when trained on the constrained scenario.

Writes ``trend_report.md`` and ``trend_report.json`` into ``--out``. Every
stage is skipped when its output already exists, so an interrupted run can be
resumed. The full study takes a few hours on one CPU.

    python demos/trend_study.py                 # full study
    python demos/trend_study.py --quick         # minutes-long smoke run
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

from nssfkit.beamform import write_targets
from nssfkit.cli import render_report
from nssfkit.corpus import synthetic_pool
from nssfkit.probe import probe_dataset, read_report_csv, write_report_csv
from nssfkit.scene_sim import DatasetSpec, generate_dataset
from nssfkit.training import TrainConfig, latest_checkpoint, train

log = logging.getLogger("trend_study")

SCENARIOS = {"U": "2spk2pos", "C": "2spk2pos-1fix"}
TEST_KINDS = ("2spk2pos", "2spk1pos", "1spk2pos")
CELLS = [(m, t) for m in ("cospa", "jnf") for t in ("dsb", "dry")]
MARGIN = 5.0


def test_sets(block: str):
    suffix = "-1fix" if block == "C" else ""
    return [k + suffix for k in TEST_KINDS]


def build_data(root: Path, args) -> None:
    # separate synthetic speakers for training and testing
    train_pool = synthetic_pool(n_speakers=args.train_speakers, seed=100)
    test_pool = synthetic_pool(n_speakers=args.test_speakers, seed=200)
    for i, (block, scenario) in enumerate(SCENARIOS.items()):
        jobs = [(f"{scenario}-train", scenario, args.train_count, train_pool, 1000 + i)]
        jobs += [(name, name, args.test_count, test_pool, 2000 + 10 * i + j)
                 for j, name in enumerate(test_sets(block))]
        for name, scen, count, pool, seed in jobs:
            if (root / name / "manifest.json").exists():
                continue
            t0 = time.perf_counter()
            generate_dataset(DatasetSpec(scen, count, seed=seed), pool, root, name=name, workers=args.workers)
            log.info("simulated %s (%d) in %.0f s", name, count, time.perf_counter() - t0)
        for target in ("dsb", "dry"):
            write_targets(root / f"{scenario}-train", target)


def run_cells(data: Path, runs: Path, args) -> dict:
    done = {}
    for block, scenario in SCENARIOS.items():
        for model, target in CELLS:
            out = runs / f"{model}_{block}_{target}"
            final = out / f"checkpoint_ep{args.epochs}"
            if not final.exists():
                t0 = time.perf_counter()
                cfg = TrainConfig(model_kind=model, target_kind=target, dataset=str(data / f"{scenario}-train"),
                                  epochs=args.epochs, seed=args.seed, out=str(out), scenario=scenario,
                                  val_every=args.epochs)
                _, tlog = train(cfg)
                log.info("trained %s in %.0f s, final loss %.2f dB", out.name, time.perf_counter() - t0,
                         tlog.losses[-1])
            done[(model, block, target)] = latest_checkpoint(out)
    return done


def probe_cells(data: Path, runs: dict, probes: Path, args) -> list[dict]:
    rows = []
    for (model, block, target), ckpt in runs.items():
        csv_path = probes / f"{model}_{block}_{target}.csv"
        if not csv_path.exists():
            reports = []
            for name in test_sets(block):
                for stage in ("h_in", "h_out") if model == "cospa" else ("h0", "h1", "h2"):
                    r = probe_dataset(ckpt, data / name, stage, trials=args.trials, target=target)
                    r.scenario = SCENARIOS[block]
                    reports.append(r)
                    log.info("%s %s %s %s: %.1f %%", model, block, target, name, r.grouping_mean)
            write_report_csv(csv_path, reports)
        rows += read_report_csv(csv_path)
    return rows


def score(rows, model, block, target, dataset, stage) -> float:
    for r in rows:
        if (r["model"], r["target"], r["dataset"], r["stage"]) == (model, target, dataset, stage) \
                and ("-1fix" in r["scenario"]) == (block == "C"):
            return r["grouping_mean"]
    raise KeyError((model, block, target, dataset, stage))


def check_trends(rows) -> list[dict]:
    def s(*key):
        return score(rows, *key)

    checks = []
    h_in, h_out = s("cospa", "U", "dsb", "2spk2pos", "h_in"), s("cospa", "U", "dsb", "2spk2pos", "h_out")
    checks.append({"name": "COSPA-DSB h_out > h_in (2spk2pos)", "met": h_out >= h_in + MARGIN,
                   "detail": f"{h_out:.1f} vs {h_in:.1f}"})
    same_pos = s("cospa", "U", "dsb", "2spk1pos", "h_out")
    checks.append({"name": "COSPA-DSB 2spk1pos near chance", "met": same_pos <= 65.0,
                   "detail": f"h_out {same_pos:.1f}"})
    one_spk = s("cospa", "U", "dsb", "1spk2pos", "h_out")
    two = s("cospa", "U", "dsb", "2spk2pos", "h_out")
    checks.append({"name": "COSPA-DSB 1spk2pos highest", "met": one_spk >= two and one_spk >= same_pos + MARGIN,
                   "detail": f"1spk2pos {one_spk:.1f}, 2spk2pos {two:.1f}, 2spk1pos {same_pos:.1f}"})
    for target in ("dsb", "dry"):
        u = s("jnf", "U", target, "2spk2pos", "h2")
        c = s("jnf", "C", target, "2spk2pos-1fix", "h2")
        checks.append({"name": f"FT-JNF {target.upper()} h2 constrained > unconstrained",
                       "met": c >= u + MARGIN, "detail": f"C {c:.1f} vs U {u:.1f}"})
    return checks


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default=str(Path(__file__).parent / "output"))
    p.add_argument("--work", default=None, help="datasets and runs (default: <out>/trend)")
    p.add_argument("--train-count", type=int, default=200)
    p.add_argument("--test-count", type=int, default=50)
    p.add_argument("--train-speakers", type=int, default=16)
    p.add_argument("--test-speakers", type=int, default=8)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="tiny smoke configuration")
    args = p.parse_args(argv)
    if args.quick:
        args.train_count, args.test_count, args.epochs, args.trials = 4, 3, 1, 1
        args.train_speakers, args.test_speakers = 4, 3
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    work = Path(args.work) if args.work else out / ("trend_quick" if args.quick else "trend")
    t0 = time.perf_counter()
    build_data(work / "data", args)
    runs = run_cells(work / "data", work / "runs", args)
    rows = probe_cells(work / "data", runs, work / "probes", args)
    checks = check_trends(rows)

    stem = "trend_report_quick" if args.quick else "trend_report"
    lines = [f"# Trend study ({'quick' if args.quick else 'full'})", "",
             f"{args.train_count} training sequences per scenario, {args.test_count} per test set, "
             f"{args.epochs} epochs, {args.trials} probe trials, tiny presets.", "",
             render_report(rows), "## Directional checks", ""]
    lines += [f"- [{'met' if c['met'] else 'NOT met'}] {c['name']}: {c['detail']}" for c in checks]
    (out / f"{stem}.md").write_text("\n".join(lines) + "\n")
    (out / f"{stem}.json").write_text(json.dumps({
        "settings": {k: v for k, v in vars(args).items() if k not in ("out", "work")},
        "checks": checks, "rows": rows, "wall_s": round(time.perf_counter() - t0, 1)}, indent=1))
    print("\n".join(lines))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
