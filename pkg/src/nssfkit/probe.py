"""Clustering probe: do hidden features group time frames by active source?

Per sequence the frame-wise features of one stage are normalised, clustered
into k = 3 groups (two sources plus a pause cluster) and scored against the
known activity labels. Scores near 50 % mean no source-wise grouping, 100 %
means perfect grouping.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSequence, ShapeError, StageError
from .spectral import SILENCE, analyze, frame_energy, frame_labels

STAGES = {"jnf": ("h0", "h1", "h2"), "cospa": ("h_in", "h_out")}
STD_FLOOR = 1e-8
N_CLUSTERS = 3
CLAIM_MODES = ("source", "cluster")
CSV_COLUMNS = ("model", "target", "scenario", "dataset", "stage",
               "grouping_mean", "unresolved_mean", "unresolved_std", "trials")


@dataclass
class FeatureMatrix:
    rows: np.ndarray    # (T, dim)
    stage: str
    labels: np.ndarray  # (T,) source ids, 0 for silence

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2 or self.rows.shape[0] != self.labels.size:
            raise ShapeError(f"{self.rows.shape} rows do not match {self.labels.size} labels")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("feature rows must be finite")

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]


@dataclass
class ClusterResult:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list = field(default_factory=list)
    n_iter: int = 0


@dataclass
class SequenceProbeOutcome:
    grouping_score: float
    unresolved: bool
    pause_cluster: int | None
    claims: dict = field(default_factory=dict)


@dataclass
class ProbeReport:
    model: str
    target: str
    scenario: str
    dataset: str
    stage: str
    grouping_mean: float
    unresolved_mean: float
    unresolved_std: float
    trials: int
    n_sequences: int = 0
    alt_unresolved_mean: float | None = None  # other claim mode
    alt_unresolved_std: float | None = None

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


# --------------------------------------------------------------------------
# features


def _load(model):
    if isinstance(model, (str, Path)):
        from .models import load_model
        return load_model(model)
    return model


def sequence_labels(example, cfg) -> np.ndarray:
    """Frame labels from the timeline, silenced where the dry sources are quiet."""
    return frame_labels(example.timeline, cfg, frame_energy(example.dry, cfg), example.sample_rate)


def extract_features(model, example, stage: str) -> FeatureMatrix:
    """Frame-wise features of ``stage`` for one example (model or checkpoint path)."""
    model = _load(model)
    if stage not in model.stages:
        raise StageError(f"stage {stage!r} does not exist for {model.kind} (use one of {model.stages})")
    X = analyze(example.input, model.stft, example.sample_rate)
    rows = model.features(X)[stage]
    return FeatureMatrix(rows, stage, sequence_labels(example, model.stft))


def normalize_features(fm):
    """Per-dimension standardisation over the sequence; accepts a FeatureMatrix or array."""
    rows = fm.rows if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=np.float64)
    if rows.shape[0] < 2:
        raise ValueError("normalisation needs at least two frames")
    std = rows.std(axis=0)
    out = (rows - rows.mean(axis=0)) / np.where(std < STD_FLOOR, STD_FLOOR, std)
    if isinstance(fm, FeatureMatrix):
        return FeatureMatrix(out, fm.stage, fm.labels)
    return out


# --------------------------------------------------------------------------
# k-means


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(x: np.ndarray, k: int, rng) -> np.ndarray:
    T = x.shape[0]
    idx = [int(rng.integers(T))]
    d2 = _sq_dist(x, x[idx])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # remaining points coincide with chosen centres
            rest = np.setdiff1d(np.arange(T), idx)
            nxt = int(rng.choice(rest)) if rest.size else int(rng.integers(T))
        else:
            nxt = int(rng.choice(T, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dist(x, x[[nxt]])[:, 0])
    return x[idx].copy()


def kmeans(fm, k: int, rng, max_iter: int = 200, tol: float = 1e-6) -> ClusterResult:
    """Lloyd iterations from a k-means++ start.

    An empty cluster is moved onto the point farthest from its current
    centroid. ``history`` holds the inertia after every assignment step.
    """
    x = fm.rows if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=np.float64)
    T = x.shape[0]
    if T < k:
        raise ValueError(f"k-means needs at least k={k} frames, got {T}")
    rng = np.random.default_rng(rng)
    c = kmeans_pp_init(x, k, rng)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dist(x, c)
        assign = np.argmin(d, axis=1)
        best = d[np.arange(T), assign]
        for j in range(k):
            if not np.any(assign == j):
                far = int(np.argmax(best))
                assign[far] = j
                best[far] = 0.0
        history.append(float(best.sum()))
        new = np.stack([x[assign == j].mean(axis=0) for j in range(k)])
        shift = float(np.max(np.sqrt(((new - c) ** 2).sum(axis=1))))
        c = new
        if shift < tol:
            break
    d = _sq_dist(x, c)
    assign_final = np.argmin(d, axis=1)
    # keep the last assignment unless the centroids moved enough to change it
    if np.any(np.bincount(assign_final, minlength=k) == 0):
        assign_final = assign
    inertia = float(d[np.arange(T), assign_final].sum())
    return ClusterResult(assign_final, c, inertia, history, n_iter)


# --------------------------------------------------------------------------
# scoring


def _argmax_set(v: np.ndarray) -> frozenset:
    return frozenset(np.flatnonzero(v == v.max()).tolist())


def _score_with_pause(counts: np.ndarray, pause: int, claim_mode: str) -> tuple[float, bool, dict]:
    k = counts.shape[0]
    others = [c for c in range(k) if c != pause]
    sub = counts[others][:, 1:]  # (2, sources)
    denom = sub.sum()
    if denom == 0:
        score = 50.0
    else:
        score = max(sub[0, 0] + sub[1, 1], sub[1, 0] + sub[0, 1]) / denom * 100.0
    if claim_mode == "source":
        claims = {s + 1: frozenset(others[i] for i in _argmax_set(sub[:, s])) for s in range(sub.shape[1])}
        unresolved = bool(claims[1] & claims[2])
    else:
        owners = {others[i]: frozenset(int(s) + 1 for s in _argmax_set(sub[i])) for i in range(2)}
        feasible = any(1 in owners[a] and 2 in owners[b] for a, b in itertools.permutations(others, 2))
        unresolved = not feasible
        claims = owners
    return float(score), unresolved, claims


def score_sequence(assignment, labels, k: int = N_CLUSTERS, claim_mode: str = "source") -> SequenceProbeOutcome:
    """Grouping score and unresolved flag of one clustered sequence.

    The pause cluster collects the most silence frames. Without silence
    frames it is the least populated cluster. Tied candidates are all tried
    and the best score kept, so the result does not depend on cluster
    numbering.
    """
    if claim_mode not in CLAIM_MODES:
        raise ValueError(f"claim_mode must be one of {CLAIM_MODES}")
    if k != N_CLUSTERS:
        raise ValueError("scoring is defined for two sources plus one pause cluster (k = 3)")
    assignment = np.asarray(assignment, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if assignment.shape != labels.shape:
        raise ShapeError("assignment and labels differ in length")
    if np.any((labels != SILENCE) & (labels != 1) & (labels != 2)):
        raise ValueError("labels must be 0 (silence), 1 or 2")
    for s in (1, 2):
        if not np.any(labels == s):
            raise DegenerateSequence(f"source {s} has no speech frames")
    counts = np.zeros((k, 3), dtype=np.int64)
    np.add.at(counts, (assignment, labels), 1)
    silence = counts[:, SILENCE]
    if silence.sum() > 0:
        candidates = sorted(_argmax_set(silence))
    else:
        size = counts.sum(axis=1)
        candidates = sorted(_argmax_set(-size))
    results = [(_score_with_pause(counts, p, claim_mode), p) for p in candidates]
    best = max(r[0][0] for r in results)
    top = [r for r in results if r[0][0] == best]
    resolved = [r for r in top if not r[0][1]]
    (score, unresolved, claims), pause = (resolved or top)[0]
    return SequenceProbeOutcome(score, unresolved, pause, claims)


# --------------------------------------------------------------------------
# datasets


def trial_rng(seed: int, sequence: int, trial: int):
    return np.random.default_rng([seed, sequence, trial])


def _workers(workers) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("NSSF_PROBE_THREADS", "1")))


def probe_matrices(fms, trials: int = 5, seed: int = 0, k: int = N_CLUSTERS, workers=None,
                   max_iter: int = 200):
    """Cluster and score every (sequence, trial); returns outcome grids per claim mode.

    The result maps claim mode to a list (sequences) of lists (trials) of
    :class:`SequenceProbeOutcome`.
    """
    normed = [normalize_features(fm) for fm in fms]

    def one(item):
        i, t = item
        cr = kmeans(normed[i], k, trial_rng(seed, i, t), max_iter=max_iter)
        return {m: score_sequence(cr.assignment, normed[i].labels, k, m) for m in CLAIM_MODES}

    items = [(i, t) for i in range(len(normed)) for t in range(trials)]
    n = _workers(workers)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            flat = list(ex.map(one, items))
    else:
        flat = [one(it) for it in items]
    return {m: [[flat[i * trials + t][m] for t in range(trials)] for i in range(len(normed))]
            for m in CLAIM_MODES}


def summarize(grid, exclude_unresolved: bool = False) -> tuple[float, float, float]:
    """(grouping mean, unresolved % mean over trials, unresolved % std over trials)."""
    scores = [o.grouping_score for seq in grid for o in seq if not (exclude_unresolved and o.unresolved)]
    grouping = float(np.mean(scores)) if scores else float("nan")
    n_trials = len(grid[0]) if grid else 0
    per_trial = [100.0 * np.mean([seq[t].unresolved for seq in grid]) for t in range(n_trials)]
    return grouping, float(np.mean(per_trial)), float(np.std(per_trial))


def probe_dataset(model, dataset, stage: str, trials: int = 5, rng_seed: int = 0,
                  exclude_unresolved: bool = False, claim_mode: str = "source", workers=None,
                  target: str = "", model_name: str | None = None) -> ProbeReport:
    """Probe every sequence of ``dataset`` at ``stage``; one report row."""
    from .scene_sim import example_dirs, load_example, load_manifest

    model = _load(model)
    if stage not in model.stages:
        raise StageError(f"stage {stage!r} does not exist for {model.kind} (use one of {model.stages})")
    manifest = load_manifest(dataset)
    fms = [extract_features(model, load_example(d), stage) for d in example_dirs(dataset)]
    grids = probe_matrices(fms, trials, rng_seed, workers=workers)
    other = "cluster" if claim_mode == "source" else "source"
    g, um, us = summarize(grids[claim_mode], exclude_unresolved)
    _, am, ast = summarize(grids[other], exclude_unresolved)
    return ProbeReport(model_name or model.kind, target, manifest.get("scenario", ""), Path(dataset).name,
                       stage, g, um, us, trials, len(fms), am, ast)


def write_report_csv(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS))
        w.writeheader()
        for r in rows:
            w.writerow(r.csv_row() if isinstance(r, ProbeReport) else {k: r[k] for k in CSV_COLUMNS})
    return path


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("grouping_mean", "unresolved_mean", "unresolved_std"):
            r[key] = float(r[key])
        r["trials"] = int(r["trials"])
    return rows


# --------------------------------------------------------------------------
# feature dump

DUMP_MAGIC = b"NSSFFEAT"
_HEADER = struct.Struct("<8s8sII")


def write_feature_dump(path, fm: FeatureMatrix, extra: dict | None = None) -> tuple[Path, Path]:
    """Binary rows (little-endian float32) plus a JSON sidecar with labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, fm.stage.encode("ascii").ljust(8, b"\0"), fm.n_frames, fm.dim))
        fh.write(fm.rows.astype("<f4").tobytes())
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps({"stage": fm.stage, "frames": fm.n_frames, "dim": fm.dim,
                                "labels": fm.labels.tolist(), **(extra or {})}))
    return path, side


def read_feature_dump(path) -> FeatureMatrix:
    path = Path(path)
    raw = path.read_bytes()
    magic, stage, T, dim = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError(f"{path} is not a feature dump")
    rows = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=T * dim).reshape(T, dim)
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return FeatureMatrix(rows.astype(np.float64), stage.rstrip(b"\0").decode("ascii"), np.array(side["labels"]))


def report_dict(r: ProbeReport) -> dict:
    return asdict(r)
