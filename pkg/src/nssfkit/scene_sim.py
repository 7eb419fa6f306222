"""Two-speaker scene simulation for a three-microphone linear array.

Rooms are drawn from the ranges of the simulation setup (4-8 m x 4-8 m x
1-4 m, T60 0.2-0.5 s), propagation uses the image-source method and
each rendered sequence keeps its dry sources, per-source microphone images
and the ground-truth activity timeline.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .corpus import SAMPLE_RATE, UtterancePool, loop_concat, read_wav, write_wav
from .errors import DatasetError, GeometryError, NoUtterances

SPEED_OF_SOUND = 343.0
SEQUENCE_S = 7.0
N_MICS = 3
MIC_SPACING = 0.04
MIN_SEPARATION_DEG = 15.0
TARGET_DOA_DEG = 90.0
WALL_MARGIN = 0.2
MIN_SOURCE_DISTANCE = 0.3
SOURCE_RMS = 0.1
SINC_TAPS = 16

SCENARIO_KINDS = ("2spk2pos", "2spk1pos", "1spk2pos")
DATASET_COUNTS = {"train": 3000, "2spk2pos": 180, "control": 50}


# --------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class RoomSpec:
    length: float
    width: float
    height: float
    t60: float

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    @property
    def surface(self) -> float:
        return 2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > margin) and np.all(p < self.dims - margin))


@dataclass(frozen=True)
class ArrayGeometry:
    center: tuple
    axis: tuple = (1.0, 0.0, 0.0)
    spacing: float = MIC_SPACING
    n_mics: int = N_MICS

    @property
    def offsets(self) -> np.ndarray:
        """Signed mic offsets along the axis, relative to the array centre."""
        return (np.arange(self.n_mics) - (self.n_mics - 1) / 2.0) * self.spacing

    @property
    def mic_positions(self) -> np.ndarray:
        return np.asarray(self.center)[None, :] + self.offsets[:, None] * np.asarray(self.axis)[None, :]


@dataclass(frozen=True)
class SourcePlacement:
    position: tuple
    doa_deg: float


@dataclass(frozen=True)
class ActivityTimeline:
    """Segments ``(start_s, end_s, source)``; source 0 denotes silence."""

    segments: tuple
    duration: float = SEQUENCE_S

    def __post_init__(self):
        segs = tuple((float(a), float(b), int(q)) for a, b, q in self.segments)
        if not segs or segs[0][0] != 0.0 or abs(segs[-1][1] - self.duration) > 1e-12:
            raise ValueError("timeline must start at 0 and end at its duration")
        for (a, b, _), (c, _, _) in zip(segs, segs[1:]):
            if b != c:
                raise ValueError("timeline segments must tile the sequence")
        if any(b <= a for a, b, _ in segs):
            raise ValueError("timeline segments must have positive length")
        object.__setattr__(self, "segments", segs)

    def source_at(self, t: float) -> int:
        for a, b, q in self.segments:
            if a <= t < b:
                return q
        return self.segments[-1][2] if t >= self.segments[-1][1] else self.segments[0][2]

    @property
    def change_points(self) -> list[float]:
        return [b for _, b, _ in self.segments[:-1]]

    def segments_of(self, q: int) -> list[tuple[float, float]]:
        return [(a, b) for a, b, s in self.segments if s == q]


@dataclass
class SceneGeometry:
    room: RoomSpec
    array: ArrayGeometry
    sources: list


@dataclass
class SceneExample:
    input: np.ndarray                # (M, N)
    images: np.ndarray               # (Q, M, N)
    dry: np.ndarray                  # (Q, N)
    timeline: ActivityTimeline
    geometry: SceneGeometry
    desired_set: tuple
    speaker_ids: tuple
    sample_rate: int = SAMPLE_RATE
    meta: dict = field(default_factory=dict)
    noise: np.ndarray | None = None  # (M, N), only kept in memory

    @property
    def doas(self) -> list[float]:
        return [s.doa_deg for s in self.geometry.sources]


def doa_of(position, array: ArrayGeometry) -> float:
    """Angle in degrees between the array axis and the centre-to-source vector."""
    v = np.asarray(position, dtype=float) - np.asarray(array.center, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise GeometryError("source coincides with the array centre")
    axis = np.asarray(array.axis, dtype=float)
    cos = np.dot(v, axis) / (norm * np.linalg.norm(axis))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def sample_room(rng) -> RoomSpec:
    return RoomSpec(
        length=float(rng.uniform(4.0, 8.0)),
        width=float(rng.uniform(4.0, 8.0)),
        height=float(rng.uniform(1.0, 4.0)),
        t60=float(rng.uniform(0.2, 0.5)),
    )


def place_array(room: RoomSpec, rng) -> ArrayGeometry:
    # central 50 % of the footprint, axis along the room length
    x = rng.uniform(0.25, 0.75) * room.length
    y = rng.uniform(0.25, 0.75) * room.width
    z = rng.uniform(0.5, max(0.5, room.height - 0.5))
    return ArrayGeometry(center=(float(x), float(y), float(z)))


def _ray_extent(origin: np.ndarray, direction: np.ndarray, room: RoomSpec, margin: float) -> float:
    lo = np.full(3, margin)
    hi = room.dims - margin
    t = np.inf
    for k in range(3):
        if direction[k] > 1e-12:
            t = min(t, (hi[k] - origin[k]) / direction[k])
        elif direction[k] < -1e-12:
            t = min(t, (lo[k] - origin[k]) / direction[k])
    return float(t)


def place_source(room: RoomSpec, array: ArrayGeometry, doa_deg: float, rng,
                 max_distance: float = 3.0) -> SourcePlacement:
    """Place a source in the array plane at the given DOA."""
    theta = math.radians(doa_deg)
    side = 1.0 if rng.random() < 0.5 else -1.0
    center = np.asarray(array.center, dtype=float)
    axis = np.asarray(array.axis, dtype=float)
    normal = np.array([-axis[1], axis[0], 0.0])
    direction = math.cos(theta) * axis + side * math.sin(theta) * normal
    reach = _ray_extent(center, direction, room, WALL_MARGIN)
    lo = max(0.5, MIN_SOURCE_DISTANCE)
    if reach < lo:
        raise GeometryError(f"no room for a source at {doa_deg:.1f} deg")
    r = rng.uniform(lo, min(reach, max_distance))
    pos = center + r * direction
    return SourcePlacement(tuple(float(v) for v in pos), float(doa_deg))


def sample_doa_pair(rng, min_sep: float = MIN_SEPARATION_DEG) -> tuple[float, float]:
    while True:
        a, b = rng.uniform(0.0, 180.0, size=2)
        if abs(a - b) >= min_sep:
            return float(a), float(b)


def sample_interferer_doa(rng, target: float = TARGET_DOA_DEG, min_sep: float = MIN_SEPARATION_DEG) -> float:
    """Uniform over [0, 180] minus the exclusion zone around ``target``."""
    lo, hi = max(0.0, target - min_sep), min(180.0, target + min_sep)
    u = rng.uniform(0.0, 180.0 - (hi - lo))
    return float(u if u <= lo else u + (hi - lo))


def unconstrained_timeline(rng) -> ActivityTimeline:
    t1 = rng.uniform(1.0, 3.0)
    t2 = rng.uniform(5.0, 6.0)
    return ActivityTimeline(((0.0, t1, 1), (t1, t2, 2), (t2, SEQUENCE_S, 1)))


def constrained_timeline(rng) -> ActivityTimeline:
    """Target (source 2) active for 3-5 s, interferer (source 1) on the rest."""
    length = rng.uniform(3.0, 5.0)
    start = rng.uniform(0.0, SEQUENCE_S - length)
    segs = []
    if start > 0:
        segs.append((0.0, start, 1))
    segs.append((start, start + length, 2))
    if start + length < SEQUENCE_S:
        segs.append((start + length, SEQUENCE_S, 1))
    return ActivityTimeline(tuple(segs))


# --------------------------------------------------------------------------
# room impulse responses


def sabine_absorption(room: RoomSpec, t60: float | None = None) -> float:
    t60 = room.t60 if t60 is None else t60
    if t60 <= 0:
        return 1.0
    return min(1.0, 0.161 * room.volume / (t60 * room.surface))


def sabine_reflection(room: RoomSpec, t60: float | None = None) -> float:
    """Uniform pressure reflection coefficient for all six walls."""
    return math.sqrt(max(0.0, 1.0 - sabine_absorption(room, t60)))


def _sinc_kernel(delays: np.ndarray):
    """16-tap Hann-windowed sinc; returns (start index, taps) per delay."""
    base = np.floor(delays).astype(np.int64) - (SINC_TAPS // 2 - 1)
    k = base[:, None] + np.arange(SINC_TAPS)[None, :]
    u = k - delays[:, None]
    taps = np.sinc(u) * 0.5 * (1.0 + np.cos(np.pi * u / (SINC_TAPS / 2)))
    return k, taps


def _accumulate(out: np.ndarray, delays: np.ndarray, gains: np.ndarray) -> None:
    idx, taps = _sinc_kernel(delays)
    w = taps * gains[:, None]
    ok = (idx >= 0) & (idx < out.size)
    out += np.bincount(idx[ok], weights=w[ok], minlength=out.size)


def rir_length(room: RoomSpec, source, mics, fs: int = SAMPLE_RATE, t60: float | None = None) -> int:
    t60 = room.t60 if t60 is None else t60
    mics = np.atleast_2d(mics)
    direct = np.max(np.linalg.norm(mics - np.asarray(source)[None], axis=1)) / SPEED_OF_SOUND * fs
    return int(max(math.ceil(t60 * fs), math.ceil(direct) + SINC_TAPS))


def simulate_rirs(room: RoomSpec, source, mics, fs: int = SAMPLE_RATE, t60: float | None = None,
                  n_samples: int | None = None, c: float = SPEED_OF_SOUND) -> np.ndarray:
    """Image-source impulse responses from ``source`` to each row of ``mics``.

    Every image contributes ``beta**n_reflections / distance`` at a
    fractional delay. ``t60`` overrides the room's value; ``t60=0`` gives
    the direct path only. Output is (n_mics, n_samples) and is truncated at
    T60 unless ``n_samples`` says otherwise.
    """
    source = np.asarray(source, dtype=float)
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    if not room.contains(source):
        raise GeometryError(f"source {source.tolist()} outside the room")
    for m in mics:
        if not room.contains(m):
            raise GeometryError(f"microphone {m.tolist()} outside the room")
    t60 = room.t60 if t60 is None else t60
    if n_samples is None:
        n_samples = rir_length(room, source, mics, fs, t60)
    out = np.zeros((mics.shape[0], n_samples))

    if t60 <= 0:
        for i, m in enumerate(mics):
            r = np.linalg.norm(source - m)
            _accumulate(out[i], np.array([r / c * fs]), np.array([1.0 / r]))
        return out

    beta = sabine_reflection(room, t60)
    dims = room.dims
    max_dist = n_samples / fs * c + np.linalg.norm(dims)
    orders = [int(math.ceil(max_dist / (2.0 * L))) + 1 for L in dims]
    ny_ = np.arange(-orders[1], orders[1] + 1)
    nz_ = np.arange(-orders[2], orders[2] + 1)
    parity = [(px, py, pz) for px in (0, 1) for py in (0, 1) for pz in (0, 1)]
    gy, gz = np.meshgrid(ny_, nz_, indexing="ij")
    gy = gy.ravel()
    gz = gz.ravel()

    for i, m in enumerate(mics):
        for nx in range(-orders[0], orders[0] + 1):
            for px, py, pz in parity:
                ix = (1 - 2 * px) * source[0] + 2 * nx * dims[0]
                iy = (1 - 2 * py) * source[1] + 2 * gy * dims[1]
                iz = (1 - 2 * pz) * source[2] + 2 * gz * dims[2]
                dist = np.sqrt((ix - m[0]) ** 2 + (iy - m[1]) ** 2 + (iz - m[2]) ** 2)
                delay = dist / c * fs
                keep = delay < n_samples + SINC_TAPS
                if not np.any(keep):
                    continue
                n_refl = (abs(nx - px) + abs(nx)) + (np.abs(gy - py) + np.abs(gy)) + (np.abs(gz - pz) + np.abs(gz))
                gain = beta ** n_refl[keep] / dist[keep]
                _accumulate(out[i], delay[keep], gain)
    return out


def simulate_rir(room: RoomSpec, source, mic, fs: int = SAMPLE_RATE, t60: float | None = None,
                 n_samples: int | None = None) -> np.ndarray:
    return simulate_rirs(room, source, np.asarray(mic)[None], fs=fs, t60=t60, n_samples=n_samples)[0]


# --------------------------------------------------------------------------
# rendering


def render_sequence(geometry: SceneGeometry, timeline: ActivityTimeline, dry: np.ndarray,
                    noise_snr_db: float | None, rng, rirs=None, desired_set=(1, 2),
                    speaker_ids=("", ""), sample_rate: int = SAMPLE_RATE, meta=None) -> SceneExample:
    """Propagate ``dry`` (Q, N) sources and add white sensor noise.

    ``rirs`` is an optional list of (M, L) arrays per source that replaces
    the simulated responses. ``noise_snr_db`` of ``None`` or ``inf`` yields
    a noise-free mixture.
    """
    dry = np.atleast_2d(np.asarray(dry, dtype=float))
    Q, N = dry.shape
    mics = geometry.array.mic_positions
    if rirs is None:
        rirs = [simulate_rirs(geometry.room, s.position, mics, fs=sample_rate) for s in geometry.sources]
    images = np.stack([fftconvolve(dry[q][None, :], np.atleast_2d(rirs[q]), axes=-1)[:, :N] for q in range(Q)])
    clean = images.sum(axis=0)
    noise = np.zeros_like(clean)
    if noise_snr_db is not None and np.isfinite(noise_snr_db):
        raw = rng.standard_normal(clean.shape)
        for m in range(clean.shape[0]):
            p_clean = np.sum(clean[m] ** 2)
            noise[m] = raw[m] * math.sqrt(p_clean / (10.0 ** (noise_snr_db / 10.0) * np.sum(raw[m] ** 2)))
    meta = dict(meta or {})
    meta["noise_snr_db"] = None if noise_snr_db is None or not np.isfinite(noise_snr_db) else float(noise_snr_db)
    return SceneExample(
        input=clean + noise, images=images, dry=dry, timeline=timeline, geometry=geometry,
        desired_set=tuple(desired_set), speaker_ids=tuple(speaker_ids), sample_rate=sample_rate,
        meta=meta, noise=noise,
    )


def _dry_sources(pool: UtterancePool, speaker_ids, timeline: ActivityTimeline, rng,
                 fs: int = SAMPLE_RATE, source_rms: float = SOURCE_RMS) -> np.ndarray:
    """Fill each source's active segments from its speaker's utterances.

    Sources sharing a speaker draw consecutive portions of one stream, so
    the same utterance material is never reused across the two positions.
    """
    N = int(round(timeline.duration * fs))
    dry = np.zeros((len(speaker_ids), N))
    spans = []
    for q in range(1, len(speaker_ids) + 1):
        for a, b in timeline.segments_of(q):
            spans.append((int(round(a * fs)), int(round(b * fs)), q))
    spans.sort()
    streams = {}
    for spk in dict.fromkeys(speaker_ids):
        utts = pool.by_speaker(spk)
        if not utts:
            raise NoUtterances(f"speaker {spk!r} has no utterances")
        order = rng.permutation(len(utts))
        need = sum(b - a for a, b, q in spans if speaker_ids[q - 1] == spk)
        streams[spk] = [loop_concat([utts[i] for i in order], need, sample_rate=fs), 0]
    for a, b, q in spans:
        stream = streams[speaker_ids[q - 1]]
        dry[q - 1, a:b] = stream[0][stream[1]:stream[1] + (b - a)]
        stream[1] += b - a
    for q in range(dry.shape[0]):
        active = np.zeros(N, dtype=bool)
        for a, b in timeline.segments_of(q + 1):
            active[int(round(a * fs)):int(round(b * fs))] = True
        rms = np.sqrt(np.mean(dry[q, active] ** 2)) if active.any() else 0.0
        if rms > 0:
            dry[q] *= source_rms / rms
    return dry


def parse_scenario(name: str) -> tuple[str, bool]:
    """``'2spk1pos-1fix'`` -> (``'2spk1pos'``, True)."""
    base = name.replace("-train", "")
    constrained = base.endswith("-1fix")
    kind = base[:-5] if constrained else base
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario {name!r}")
    return kind, constrained


def _pick_speakers(pool: UtterancePool, rng, n_distinct: int, speakers=None):
    available = pool.speakers
    if speakers is not None:
        return tuple(speakers)
    if len(available) < n_distinct:
        raise NoUtterances(f"need {n_distinct} speakers, pool has {len(available)}")
    picks = rng.choice(len(available), size=n_distinct, replace=False)
    return tuple(available[i] for i in picks)


def build_scene(scenario: str, pool: UtterancePool, rng, speakers=None,
                noise_snr_db: float | None = 30.0, sample_rate: int = SAMPLE_RATE) -> SceneExample:
    """Sample and render one sequence of the named scenario."""
    kind, constrained = parse_scenario(scenario)
    if len(pool.speakers) < 2:
        raise NoUtterances("scenario generation needs at least two speakers")
    if kind == "1spk2pos":
        spk = _pick_speakers(pool, rng, 1, None if speakers is None else speakers[:1])
        speaker_ids = (spk[0], spk[0])
    else:
        speaker_ids = _pick_speakers(pool, rng, 2, speakers)
    if speaker_ids[0] == speaker_ids[1] and kind != "1spk2pos":
        raise ValueError("two-speaker scenarios need distinct speakers")

    room = sample_room(rng)
    array = place_array(room, rng)
    if constrained:
        timeline = constrained_timeline(rng)
        target = TARGET_DOA_DEG
        interferer = target if kind == "2spk1pos" else sample_interferer_doa(rng)
        doas = (interferer, target)
        desired = (2,)
    else:
        timeline = unconstrained_timeline(rng)
        if kind == "2spk1pos":
            d = float(rng.uniform(0.0, 180.0))
            doas = (d, d)
        else:
            doas = sample_doa_pair(rng)
        desired = (1, 2)
    first = place_source(room, array, doas[0], rng)
    second = first if kind == "2spk1pos" else place_source(room, array, doas[1], rng)
    geometry = SceneGeometry(room, array, [first, second])
    dry = _dry_sources(pool, speaker_ids, timeline, rng, fs=sample_rate)
    meta = {"scenario": scenario, "source_rms": SOURCE_RMS}
    return render_sequence(geometry, timeline, dry, noise_snr_db, rng, desired_set=desired,
                           speaker_ids=speaker_ids, sample_rate=sample_rate, meta=meta)


def build_unconstrained_scene(pool, rng, **kw) -> SceneExample:
    return build_scene("2spk2pos", pool, rng, **kw)


def build_constrained_scene(pool, rng, **kw) -> SceneExample:
    return build_scene("2spk2pos-1fix", pool, rng, **kw)


def build_control_scene(kind: str, constrained: bool, pool, rng, **kw) -> SceneExample:
    if kind not in ("2spk1pos", "1spk2pos"):
        raise ValueError(f"control kind must be 2spk1pos or 1spk2pos, got {kind!r}")
    return build_scene(kind + ("-1fix" if constrained else ""), pool, rng, **kw)


# --------------------------------------------------------------------------
# dataset files


@dataclass(frozen=True)
class DatasetSpec:
    scenario: str
    count: int
    seed: int = 0
    noise_snr_db: float | None = 30.0


def round_robin_speakers(speakers: list[str], idx: int, kind: str) -> tuple:
    S = len(speakers)
    first = speakers[idx % S]
    if kind == "1spk2pos":
        return (first,)
    second = speakers[(idx + 1 + (idx // S) % (S - 1)) % S]
    return first, second


def example_meta(ex: SceneExample, index: int, seed: int) -> dict:
    g = ex.geometry
    return {
        "index": index,
        "seed": seed,
        "scenario": ex.meta.get("scenario"),
        "sample_rate": ex.sample_rate,
        "duration_s": ex.timeline.duration,
        "noise_snr_db": ex.meta.get("noise_snr_db"),
        "source_rms": ex.meta.get("source_rms", SOURCE_RMS),
        "speaker_ids": list(ex.speaker_ids),
        "desired_set": list(ex.desired_set),
        "doas": [s.doa_deg for s in g.sources],
        "source_positions": [list(s.position) for s in g.sources],
        "segments": [list(s) for s in ex.timeline.segments],
        "room": {"length": g.room.length, "width": g.room.width, "height": g.room.height},
        "t60": g.room.t60,
        "array": {"center": list(g.array.center), "axis": list(g.array.axis),
                  "spacing": g.array.spacing, "n_mics": g.array.n_mics},
    }


def _write_example(out_dir: Path, ex: SceneExample, meta: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_wav(out_dir / "input.wav", ex.input, ex.sample_rate)
    for q in range(ex.images.shape[0]):
        write_wav(out_dir / f"image_q{q + 1}.wav", ex.images[q], ex.sample_rate)
        write_wav(out_dir / f"dry_q{q + 1}.wav", ex.dry[q], ex.sample_rate)
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def example_rng(seed: int, index: int):
    return np.random.default_rng([seed, index])


def generate_dataset(spec: DatasetSpec, pool: UtterancePool, root, name: str | None = None,
                     workers: int = 1) -> Path:
    """Render ``spec.count`` sequences to ``<root>/<name>/ex_<idx>/``.

    Each example draws from its own generator seeded by (seed, index), so
    output does not depend on ``workers``.
    """
    name = name or spec.scenario
    kind, _ = parse_scenario(spec.scenario)
    out = Path(root) / name
    out.mkdir(parents=True, exist_ok=True)
    speakers = pool.speakers
    if len(speakers) < 2:
        raise NoUtterances("dataset generation needs at least two speakers")

    def one(idx):
        rng = example_rng(spec.seed, idx)
        ex = build_scene(spec.scenario, pool, rng, speakers=round_robin_speakers(speakers, idx, kind),
                         noise_snr_db=spec.noise_snr_db)
        meta = example_meta(ex, idx, spec.seed)
        ex_dir = f"ex_{idx:04d}"
        _write_example(out / ex_dir, ex, meta)
        return {"dir": ex_dir, "doas": meta["doas"], "segments": meta["segments"],
                "speaker_ids": meta["speaker_ids"], "t60": meta["t60"]}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            entries = list(pool_exec.map(one, range(spec.count)))
    else:
        entries = [one(i) for i in range(spec.count)]
    manifest = {
        "name": name, "scenario": spec.scenario, "count": spec.count, "seed": spec.seed,
        "noise_snr_db": spec.noise_snr_db, "sample_rate": SAMPLE_RATE, "source_rms": SOURCE_RMS,
        "examples": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DatasetError(f"no manifest.json in {root}")
    return json.loads(path.read_text())


def example_dirs(root) -> list[Path]:
    return [Path(root) / e["dir"] for e in load_manifest(root)["examples"]]


def load_example(path) -> SceneExample:
    """Read an example directory written by :func:`generate_dataset`."""
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
        x, fs = read_wav(path / "input.wav")
        Q = len(meta["doas"])
        images = np.stack([read_wav(path / f"image_q{q + 1}.wav")[0] for q in range(Q)])
        dry = np.stack([read_wav(path / f"dry_q{q + 1}.wav")[0] for q in range(Q)])
    except FileNotFoundError as exc:
        raise DatasetError(f"incomplete example {path}: {exc.filename}") from exc
    a = meta["array"]
    array = ArrayGeometry(tuple(a["center"]), tuple(a["axis"]), a["spacing"], a["n_mics"])
    r = meta["room"]
    room = RoomSpec(r["length"], r["width"], r["height"], meta["t60"])
    sources = [SourcePlacement(tuple(p), d) for p, d in zip(meta["source_positions"], meta["doas"])]
    return SceneExample(
        input=np.atleast_2d(x), images=images, dry=dry,
        timeline=ActivityTimeline(tuple(tuple(s) for s in meta["segments"]), meta["duration_s"]),
        geometry=SceneGeometry(room, array, sources), desired_set=tuple(meta["desired_set"]),
        speaker_ids=tuple(meta["speaker_ids"]), sample_rate=fs, meta=meta,
    )
