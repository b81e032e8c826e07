"""Domain types, trial file I/O and run configuration."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

DEFAULT_CHANNELS = (
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
    "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
)

# (idle_head_s, task_s, idle_tail_s) per workload type
TRIAL_TIMING = {1: (5.0, 40.0, 5.0), 2: (5.0, 100.0, 5.0), 3: (5.0, 160.0, 5.0)}

CLASSES = (1, 2, 3)

AMPLITUDE_WARN_UV = 500.0


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class ChannelLayout:
    names: tuple[str, ...] = DEFAULT_CHANNELS

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise DataError("channel layout is empty")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate channel labels: {dupes}")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class TrialMeta:
    subject_id: str
    trial_index: int
    model_type: int
    idle_head_s: float
    task_s: float
    idle_tail_s: float

    def __post_init__(self):
        if self.model_type not in CLASSES:
            raise DataError(f"model_type must be one of {CLASSES}, got {self.model_type!r}")
        for name in ("idle_head_s", "task_s", "idle_tail_s"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be non-negative")

    @classmethod
    def for_type(cls, subject_id: str, trial_index: int, model_type: int) -> "TrialMeta":
        """Trial metadata with the standard idle/task/idle durations for ``model_type``."""
        if model_type not in TRIAL_TIMING:
            raise DataError(f"model_type must be one of {CLASSES}, got {model_type!r}")
        head, task, tail = TRIAL_TIMING[model_type]
        return cls(subject_id, trial_index, model_type, head, task, tail)

    @property
    def total_s(self) -> float:
        return self.idle_head_s + self.task_s + self.idle_tail_s


@dataclass(frozen=True, eq=False)
class Recording:
    """Continuous multichannel EEG, ``samples`` is (n_samples, n_channels) in microvolts."""

    layout: ChannelLayout
    fs: int
    samples: np.ndarray
    meta: TrialMeta

    def __post_init__(self):
        if isinstance(self.fs, bool) or int(self.fs) != self.fs or self.fs <= 0:
            raise DataError(f"fs must be a positive integer, got {self.fs!r}")
        object.__setattr__(self, "fs", int(self.fs))
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != len(self.layout):
            raise DataError(
                f"samples shape {samples.shape} does not match {len(self.layout)} channels"
            )
        if not np.all(np.isfinite(samples)):
            row, col = np.argwhere(~np.isfinite(samples))[0]
            raise DataError(
                f"non-finite sample at index {row}, channel {self.layout.names[col]}"
            )
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def with_samples(self, samples: np.ndarray) -> "Recording":
        return replace(self, samples=samples)


@dataclass(frozen=True, eq=False)
class Epoch:
    samples: np.ndarray  # (n_samples, n_channels)
    label: int
    origin: tuple[str, int, int]  # (subject_id, trial_index, epoch_index)


# --------------------------------------------------------------------------
# trial files

def manifest_dict(rec: Recording) -> dict[str, Any]:
    m = rec.meta
    return {
        "subject_id": m.subject_id,
        "trial_index": m.trial_index,
        "model_type": m.model_type,
        "fs": rec.fs,
        "idle_head_s": m.idle_head_s,
        "task_s": m.task_s,
        "idle_tail_s": m.idle_tail_s,
        "channels": list(rec.layout.names),
    }


def save_recording(rec: Recording, csv_path, manifest_path=None) -> tuple[Path, Path]:
    """Write ``rec`` as a CSV trial file plus its JSON manifest.

    Values are written with 17 significant digits so that loading the file
    back reproduces every sample bit for bit.
    """
    csv_path = Path(csv_path)
    manifest_path = Path(manifest_path) if manifest_path else csv_path.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(rec.layout.names) + "\n")
        np.savetxt(fh, rec.samples, fmt="%.17g", delimiter=",")
    manifest_path.write_text(json.dumps(manifest_dict(rec), indent=2) + "\n")
    return csv_path, manifest_path


def _read_manifest(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    missing = [k for k in ("subject_id", "trial_index", "model_type", "fs") if k not in data]
    if missing:
        raise DataError(f"{path}: manifest missing keys {missing}")
    fs = data["fs"]
    if not isinstance(fs, (int, float)) or isinstance(fs, bool) or fs <= 0 or int(fs) != fs:
        raise DataError(f"{path}: fs must be a positive integer, got {fs!r}")
    return data


def _locate_bad_cell(path: Path, header: list[str]) -> str:
    """Scan a CSV that numpy refused and describe the first offending cell."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                return f"{path}: line {line_no}: expected {len(header)} values, got {len(row)}"
            for name, cell in zip(header, row):
                try:
                    float(cell)
                except ValueError:
                    return f"{path}: line {line_no}, column {name}: non-numeric value {cell!r}"
    return f"{path}: unparseable CSV"


def load_recording(path, manifest=None) -> Recording:
    """Load one trial CSV and its JSON manifest.

    The manifest supplies ``fs`` and the trial metadata. If it lists
    ``channels``, columns are reordered to that layout; otherwise the CSV
    header order is used. Every error message names the file and, where it
    applies, the line and column.
    """
    path = Path(path)
    manifest = Path(manifest) if manifest else path.with_suffix(".json")
    meta = _read_manifest(manifest)
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
    except FileNotFoundError:
        raise DataError(f"{path}: CSV not found") from None
    if not header:
        raise DataError(f"{path}: line 1: missing header row")
    header = [h.strip() for h in header]
    seen = set()
    for col, name in enumerate(header, start=1):
        if name in seen:
            raise DataError(f"{path}: line 1, column {col}: duplicate channel {name!r}")
        seen.add(name)

    channels = list(meta.get("channels") or header)
    for name in channels:
        if name not in seen:
            raise DataError(f"{path}: line 1: missing channel column {name!r}")

    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except ValueError:
        raise DataError(_locate_bad_cell(path, header)) from None
    if data.size == 0:
        data = np.zeros((0, len(header)))
    if data.shape[1] != len(header):
        raise DataError(_locate_bad_cell(path, header))
    bad = ~np.isfinite(data)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataError(
            f"{path}: line {row + 2}, column {header[col]}: non-finite value {data[row, col]!r}"
        )

    order = [header.index(name) for name in channels]
    model_type = meta["model_type"]
    try:
        timing = TRIAL_TIMING.get(model_type, (0.0, 0.0, 0.0))
        trial = TrialMeta(
            subject_id=str(meta["subject_id"]),
            trial_index=int(meta["trial_index"]),
            model_type=model_type,
            idle_head_s=float(meta.get("idle_head_s", timing[0])),
            task_s=float(meta.get("task_s", timing[1])),
            idle_tail_s=float(meta.get("idle_tail_s", timing[2])),
        )
    except DataError as exc:
        raise DataError(f"{manifest}: {exc}") from None
    return Recording(ChannelLayout(tuple(channels)), int(meta["fs"]), data[:, order], trial)


def find_trials(dataset_dir) -> list[tuple[Path, Path]]:
    """(csv, manifest) pairs in a dataset directory, sorted by file name."""
    root = Path(dataset_dir)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    pairs = []
    for csv_path in sorted(root.glob("*.csv")):
        manifest = csv_path.with_suffix(".json")
        if not manifest.exists():
            raise DataError(f"{csv_path}: no manifest {manifest.name}")
        pairs.append((csv_path, manifest))
    if not pairs:
        raise DataError(f"{root}: no trial CSV files")
    return pairs


def validate_recording(rec: Recording) -> list[str]:
    """Soft checks on a loaded recording; returns human-readable warnings."""
    warnings = []
    expected = int(round(rec.meta.total_s * rec.fs))
    if rec.n_samples < expected:
        warnings.append(
            f"short recording: {rec.n_samples} samples, metadata implies {expected}"
        )
    if rec.n_samples:
        flat = np.ptp(rec.samples, axis=0) == 0
        for ch in np.flatnonzero(flat):
            warnings.append(f"flat channel: {rec.layout.names[ch]}")
        over = np.abs(rec.samples) > AMPLITUDE_WARN_UV
        for ch in np.flatnonzero(over.any(axis=0)):
            idx = int(np.argmax(over[:, ch]))
            warnings.append(
                f"amplitude above {AMPLITUDE_WARN_UV:g} uV: channel {rec.layout.names[ch]}"
                f" at sample {idx} ({idx / rec.fs:.3f} s)"
            )
    return warnings


# --------------------------------------------------------------------------
# run configuration

DEFAULT_BANDS = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the pipeline; serialises to and from JSON."""

    bandpass: tuple[float, float] = (0.5, 45.0)
    amp_limit: float = 100.0
    wavelet_threshold: bool = False
    band_edges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BANDS))
    wavelet_levels: int = 4
    ar_order: int = 6
    epoch_s: float = 1.0
    per_channel_mode: bool = False
    split_fraction: float = 0.2
    seed: int = 0
    # selection
    n_trees: int = 200
    max_features: int | None = None  # None -> sqrt(n_features)
    gbt_rounds: int = 100
    gbt_depth: int = 3
    gbt_learning_rate: float = 0.1
    redundancy_cutoff: float = 0.85
    top_n: int = 10
    selected_k: int = 14
    sweep_counts: tuple[int, ...] | None = None
    # learners: family -> hyperparameter overrides
    learners: dict[str, dict[str, Any]] = field(default_factory=dict)
    timing_repeats: int = 15

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise DataError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        lo, hi = self.bandpass
        if not 0 < lo < hi:
            raise DataError(f"bandpass edges must satisfy 0 < lo < hi, got {self.bandpass}")
        for band, (b_lo, b_hi) in self.band_edges.items():
            if not b_lo < b_hi:
                raise DataError(f"band {band!r}: lo must be below hi, got {(b_lo, b_hi)}")
        if self.epoch_s <= 0:
            raise DataError("epoch_s must be positive")
        if self.selected_k < 1 or self.top_n < 1:
            raise DataError("selected_k and top_n must be >= 1")
        if self.amp_limit <= 0:
            raise DataError("amp_limit must be positive")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["bandpass"] = list(self.bandpass)
        d["band_edges"] = {k: list(v) for k, v in self.band_edges.items()}
        if self.sweep_counts is not None:
            d["sweep_counts"] = list(self.sweep_counts)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "bandpass" in data:
            data["bandpass"] = tuple(float(v) for v in data["bandpass"])
        if "band_edges" in data:
            data["band_edges"] = {k: (float(v[0]), float(v[1])) for k, v in data["band_edges"].items()}
        if data.get("sweep_counts") is not None:
            data["sweep_counts"] = tuple(int(v) for v in data["sweep_counts"])
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_json(Path(path).read_text())
        except FileNotFoundError:
            raise DataError(f"{path}: config not found") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)
