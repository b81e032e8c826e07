"""Synthetic EEG trials with workload-dependent band power and optional artifacts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import (
    CLASSES, DEFAULT_BANDS, DEFAULT_CHANNELS, ChannelLayout, DataError, Recording,
    TrialMeta, save_recording,
)

# theta rises and alpha falls with workload type
DEFAULT_AMPLITUDES = {
    1: {"delta": 8.0, "theta": 5.0, "alpha": 10.0, "beta": 3.0},
    2: {"delta": 8.0, "theta": 6.5, "alpha": 8.5, "beta": 3.0},
    3: {"delta": 8.0, "theta": 8.0, "alpha": 7.0, "beta": 3.0},
}

FRONTAL = ("AF3", "AF4", "F7", "F8", "F3", "F4", "Fp1", "Fp2", "Fz")


@dataclass(frozen=True)
class SynthSpec:
    n_subjects: int = 8
    trials_per_type: int = 1
    fs: int = 128
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    band_amplitudes: dict[int, dict[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_AMPLITUDES.items()}
    )
    band_edges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BANDS))
    noise_amplitude: float = 6.0  # RMS of the 1/f background, uV
    modulation: float = 0.3  # depth of slow (0.05-0.2 Hz) band-amplitude modulation
    subject_jitter: float = 0.25  # per-subject gain drawn from 1 +/- jitter
    artifact_rate: float = 0.02  # events per second
    seed: int = 0

    def __post_init__(self):
        missing = set(CLASSES) - set(self.band_amplitudes)
        if missing:
            raise DataError(f"band_amplitudes missing classes {sorted(missing)}")
        for cls, bands in self.band_amplitudes.items():
            if any(a < 0 for a in bands.values()):
                raise DataError(f"class {cls}: amplitudes must be >= 0")
            unknown = set(bands) - set(self.band_edges)
            if unknown:
                raise DataError(f"class {cls}: unknown bands {sorted(unknown)}")
        if self.noise_amplitude < 0 or self.artifact_rate < 0:
            raise DataError("noise_amplitude and artifact_rate must be >= 0")
        if not 0 <= self.modulation < 1:
            raise DataError("modulation must be in [0, 1)")
        if self.n_subjects < 1 or self.trials_per_type < 1:
            raise DataError("n_subjects and trials_per_type must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "band_amplitudes" in d:
            d["band_amplitudes"] = {int(k): dict(v) for k, v in d["band_amplitudes"].items()}
        if "band_edges" in d:
            d["band_edges"] = {k: tuple(v) for k, v in d["band_edges"].items()}
        if "channels" in d:
            d["channels"] = tuple(d["channels"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataError(f"invalid synth spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "SynthSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise DataError(f"{path}: synth spec not found") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band_amplitudes"] = {str(k): v for k, v in self.band_amplitudes.items()}
        d["band_edges"] = {k: list(v) for k, v in self.band_edges.items()}
        d["channels"] = list(self.channels)
        return d


def subject_id(subject: int) -> str:
    return f"S{subject + 1:02d}"


def pink_noise(rng: np.random.Generator, n: int, n_channels: int, fs: float) -> np.ndarray:
    """Unit-RMS noise with power falling as 1/f, shape (n, n_channels)."""
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spectrum = rng.normal(size=(len(freqs), n_channels)) + 1j * rng.normal(size=(len(freqs), n_channels))
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    x = np.fft.irfft(spectrum * scale[:, None], n=n, axis=0)
    rms = np.sqrt(np.mean(x**2, axis=0))
    return x / np.where(rms > 0, rms, 1.0)


def generate_trial(spec: SynthSpec, subject: int, model_type: int, trial_index: int = 0) -> Recording:
    """One trial: band-limited sinusoids per channel plus 1/f background.

    Each band contributes one sinusoid per channel at a random frequency
    inside the band (10% margin from the edges) with random phase, its
    amplitude slowly modulated by ``1 + modulation * sin(...)``. The
    result is fully determined by ``spec.seed``, subject, type and trial.
    """
    if model_type not in CLASSES:
        raise DataError(f"model_type must be one of {CLASSES}")
    meta = TrialMeta.for_type(subject_id(subject), trial_index, model_type)
    rng = np.random.default_rng([spec.seed, subject, model_type, trial_index])
    gain_rng = np.random.default_rng([spec.seed, subject, 10_000])
    gain = 1.0 + gain_rng.uniform(-spec.subject_jitter, spec.subject_jitter)

    n = int(round(meta.total_s * spec.fs))
    n_ch = len(spec.channels)
    t = np.arange(n) / spec.fs
    x = np.zeros((n, n_ch))
    for band, amp in spec.band_amplitudes[model_type].items():
        lo, hi = spec.band_edges[band]
        margin = 0.1 * (hi - lo)
        freqs = rng.uniform(lo + margin, hi - margin, n_ch)
        phases = rng.uniform(0, 2 * np.pi, n_ch)
        envelope = 1.0 + spec.modulation * np.sin(
            2 * np.pi * rng.uniform(0.05, 0.2, n_ch)[None, :] * t[:, None]
            + rng.uniform(0, 2 * np.pi, n_ch)[None, :]
        )
        x += amp * envelope * np.sin(2 * np.pi * freqs[None, :] * t[:, None] + phases[None, :])
    if spec.noise_amplitude > 0:
        x += spec.noise_amplitude * pink_noise(rng, n, n_ch, spec.fs)
    rec = Recording(ChannelLayout(tuple(spec.channels)), spec.fs, gain * x, meta)
    if spec.artifact_rate > 0:
        art_seed = int(np.random.default_rng([spec.seed, subject, model_type, trial_index, 1]).integers(2**31))
        rec, _ = inject_artifacts(rec, spec.artifact_rate, art_seed)
    return rec


class ArtifactEvent(NamedTuple):
    kind: str  # "blink" | "burst"
    channel: str
    start: int
    stop: int


def _channels(layout: ChannelLayout, wanted) -> list[int]:
    idx = [i for i, n in enumerate(layout.names) if wanted(n)]
    return idx or list(range(len(layout)))


def inject_artifacts(rec: Recording, rate: float, seed: int = 0) -> tuple[Recording, list[ArtifactEvent]]:
    """Add blink transients to frontal and muscle bursts to temporal channels.

    Event count is Poisson with mean ``rate * duration``; onsets are
    uniform. Blinks are 300 ms raised-cosine bumps of 300-500 uV; bursts
    are 20-60 Hz sinusoids of 30-80 uV under a 200-500 ms Hann envelope.
    Returns the new recording and every affected (channel, sample span).
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    rng = np.random.default_rng(seed)
    n_events = rng.poisson(rate * rec.duration_s)
    if n_events == 0:
        return rec, []
    x = np.array(rec.samples)
    frontal = _channels(rec.layout, lambda n: n in FRONTAL)
    temporal = _channels(rec.layout, lambda n: n.startswith("T"))
    events = []
    for _ in range(n_events):
        if rng.random() < 0.5:
            width = int(round(0.3 * rec.fs))
            if width > rec.n_samples:
                continue
            start = int(rng.integers(0, rec.n_samples - width + 1))
            shape = rng.uniform(300, 500) * np.hanning(width)
            for ch in frontal:
                x[start:start + width, ch] += shape
                events.append(ArtifactEvent("blink", rec.layout.names[ch], start, start + width))
        else:
            width = int(round(rng.uniform(0.2, 0.5) * rec.fs))
            if width > rec.n_samples:
                continue
            start = int(rng.integers(0, rec.n_samples - width + 1))
            freq = rng.uniform(20, min(60, 0.45 * rec.fs))
            tt = np.arange(width) / rec.fs
            burst = rng.uniform(30, 80) * np.hanning(width) * np.sin(2 * np.pi * freq * tt)
            for ch in temporal:
                x[start:start + width, ch] += burst
                events.append(ArtifactEvent("burst", rec.layout.names[ch], start, start + width))
    return rec.with_samples(x), events


def generate_dataset(spec: SynthSpec, out_dir) -> list[Path]:
    """Write every trial of every subject as CSV + JSON manifest; returns the CSV paths.

    Trial order within a subject is shuffled, so trial indices do not
    reveal the workload type.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for subject in range(spec.n_subjects):
        types = np.repeat(np.array(CLASSES), spec.trials_per_type)
        order = np.random.default_rng([spec.seed, subject, 20_000]).permutation(types)
        for trial_index, model_type in enumerate(order):
            rec = generate_trial(spec, subject, int(model_type), trial_index)
            csv_path = out / f"{rec.meta.subject_id}_trial{trial_index:02d}.csv"
            save_recording(rec, csv_path)
            paths.append(csv_path)
    return paths
