import json
import shutil
from pathlib import Path

import matplotlib.image as mpimg
import pytest

from nssfkit.beamform import target_path
from nssfkit.cli import main, render_report, resolve
from nssfkit.probe import read_report_csv
from nssfkit.scene_sim import example_dirs, load_manifest


def test_simulate_needs_corpus(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--scenario", "2spk2pos", "--out", str(tmp_path)])
    assert e.value.code == 2
    assert "--synthetic" in capsys.readouterr().err


def test_simulate_counts_and_rerun(tmp_path, capsys):
    args = ["simulate", "--scenario", "2spk1pos-1fix", "--count", "3", "--seed", "2", "--synthetic",
            "--synthetic-speakers", "3", "--out", str(tmp_path)]
    assert main(args) == 0
    root = tmp_path / "2spk1pos-1fix"
    m = load_manifest(root)
    assert m["count"] == 3 and len(example_dirs(root)) == 3
    for e in m["examples"]:
        assert e["doas"] == [90.0, 90.0]
    first = (root / "manifest.json").read_bytes()
    assert main(args) == 0
    assert (root / "manifest.json").read_bytes() == first
    assert json.loads((root / "simulate_config.json").read_text())["count"] == 3
    assert "3 x 2spk1pos-1fix" in capsys.readouterr().out


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"count": 7, "seed": 4}))
    r = resolve("simulate", {"config": str(cfg), "seed": 9})
    assert r["count"] == 7 and r["seed"] == 9 and r["noise_snr"] == 30.0
    cfg.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError):
        resolve("simulate", {"config": str(cfg)})


@pytest.fixture(scope="module")
def fresh_dataset(tmp_path_factory, dataset):
    root = tmp_path_factory.mktemp("cli") / "ds"
    shutil.copytree(dataset, root)
    for d in example_dirs(root):
        target_path(d, "dsb").unlink()
    return root


@pytest.fixture(scope="module")
def cospa_run(tmp_path_factory, fresh_dataset):
    out = tmp_path_factory.mktemp("runs") / "cospa"
    code = main(["train", "--model", "cospa", "--target", "dsb", "--dataset", str(fresh_dataset),
                 "--out", str(out), "--epochs", "1", "--max-steps", "2"])
    assert code == 0
    return out


def test_train_builds_missing_targets(cospa_run, fresh_dataset):
    assert all(target_path(d, "dsb").exists() for d in example_dirs(fresh_dataset))
    assert (cospa_run / "checkpoint_ep1").exists()
    assert (cospa_run / "log.jsonl").read_text().count("\n") == 2
    assert json.loads((cospa_run / "train_config.json").read_text())["model"] == "cospa"


def test_train_twice_identical(tmp_path, fresh_dataset, cospa_run):
    out = tmp_path / "again"
    main(["train", "--model", "cospa", "--target", "dsb", "--dataset", str(fresh_dataset),
          "--out", str(out), "--epochs", "1", "--max-steps", "2"])
    assert (out / "checkpoint_ep1").read_bytes() == (cospa_run / "checkpoint_ep1").read_bytes()


def test_probe_wrong_stage(tmp_path, cospa_run, fresh_dataset, capsys):
    code = main(["probe", "--run", str(cospa_run), "--dataset", str(fresh_dataset), "--stages", "h2",
                 "--out", str(tmp_path / "p.csv")])
    assert code == 1
    assert "StageError" in capsys.readouterr().err


def test_probe_rows_per_stage(tmp_path, cospa_run, fresh_dataset):
    out = tmp_path / "p.csv"
    assert main(["probe", "--run", str(cospa_run), "--dataset", str(fresh_dataset), "--trials", "2",
                 "--out", str(out), "--dump-features", str(tmp_path / "dump")]) == 0
    rows = read_report_csv(out)
    assert [r["stage"] for r in rows] == ["h_in", "h_out"]
    assert all(r["trials"] == 2 and r["target"] == "dsb" for r in rows)
    assert len(list((tmp_path / "dump").glob("*.f32"))) == 8
    assert resolve("probe", {})["trials"] == 5


@pytest.fixture(scope="module")
def jnf_run(tmp_path_factory, dataset):
    out = tmp_path_factory.mktemp("runs") / "jnf"
    assert main(["train", "--model", "jnf", "--target", "dry", "--dataset", str(dataset),
                 "--out", str(out), "--epochs", "1", "--max-steps", "1"]) == 0
    return out


def test_probe_jnf_stages(tmp_path, jnf_run, dataset):
    out = tmp_path / "j.csv"
    assert main(["probe", "--run", str(jnf_run), "--dataset", str(dataset), "--stages", "h1,h2",
                 "--trials", "1", "--out", str(out)]) == 0
    assert [r["stage"] for r in read_report_csv(out)] == ["h1", "h2"]


@pytest.mark.parametrize("stage", ["h0", "h1"])
def test_featmap(tmp_path, jnf_run, dataset, stage):
    ex = example_dirs(dataset)[0]
    out = tmp_path / stage
    assert main(["featmap", "--run", str(jnf_run), "--example", str(ex), "--stage", stage,
                 "--out", str(out)]) == 0
    img = mpimg.imread(out / f"featmap_{stage}.png")
    markers = json.loads((out / "markers.json").read_text())
    T = markers["frames"]
    assert T == (112000 - 128) // 64 + 1
    assert img.shape[1] == T and img.shape[0] == markers["units"]
    meta = json.loads((Path(ex) / "meta.json").read_text())
    boundaries = [seg[1] for seg in meta["segments"][:-1]]
    assert markers["change_points_s"] == boundaries
    assert (out / "waveform.png").exists() and (out / f"featmap_{stage}.csv").exists()


def _row(model, target, scenario, dataset, stage, g, um, us):
    return {"model": model, "target": target, "scenario": scenario, "dataset": dataset, "stage": stage,
            "grouping_mean": g, "unresolved_mean": um, "unresolved_std": us, "trials": 5}


def test_report_blocks_and_rounding(tmp_path):
    text = render_report([
        _row("jnf", "dsb", "2spk2pos", "2spk2pos", "h2", 79.34, 10.0, 2.04),
        _row("jnf", "dsb", "2spk2pos-1fix", "2spk2pos-1fix", "h2", 88.36, 0.0, 0.0),
    ])
    assert "| JNF | U - DSB | 2spk2pos | 79.3 | 10.0 ± 2.0 |" in text
    assert "| JNF | C - DSB | 2spk2pos-1fix | 88.4 | 0.0 ± 0.0 |" in text
    assert text.index("U - DSB") < text.index("C - DSB")


def test_report_union_warning():
    with pytest.warns(UserWarning):
        text = render_report([_row("cospa", "dsb", "2spk2pos", "a", "h_in", 60, 0, 0),
                              _row("cospa", "dsb", "2spk2pos", "b", "h_out", 70, 0, 0)])
    assert "| - | - |" in text


def test_report_cli(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["report", "--probe-csvs", "--out", str(tmp_path / "r.md")])
    csv_path = tmp_path / "p.csv"
    from nssfkit.probe import write_report_csv
    write_report_csv(csv_path, [_row("cospa", "dsb", "2spk2pos", "2spk2pos", "h_out", 92.94, 1, 0.5)])
    assert main(["report", "--probe-csvs", str(csv_path), "--out", str(tmp_path / "r.md")]) == 0
    assert "92.9" in (tmp_path / "r.md").read_text()
