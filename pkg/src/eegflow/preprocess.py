"""Bandpass filtering, artifact suppression and epoch segmentation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
from scipy import signal

from .core import DataError, Epoch, Recording
from .wavelet import dwt, idwt

MAD_TO_SIGMA = 0.6745


class CleaningAction(NamedTuple):
    channel: str
    start: int  # first sample, inclusive
    stop: int  # last sample, exclusive
    action: str


@dataclass(frozen=True, eq=False)
class CleanRecording(Recording):
    log: tuple[CleaningAction, ...] = ()

    def log_json(self) -> str:
        return json.dumps([a._asdict() for a in self.log], indent=2)


def bandpass(rec: Recording, lo: float = 0.5, hi: float = 45.0, order: int = 4) -> Recording:
    """Zero-phase Butterworth bandpass (forward-backward, second-order sections)."""
    if not 0 < lo < hi < rec.fs / 2:
        raise ValueError(f"invalid band edges ({lo}, {hi}) for fs={rec.fs}: need 0 < lo < hi < fs/2")
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=rec.fs, output="sos")
    return rec.with_samples(signal.sosfiltfilt(sos, rec.samples, axis=0))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """[start, stop) spans of consecutive True values."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def universal_threshold(finest_detail: np.ndarray, n: int) -> float:
    sigma = np.median(np.abs(finest_detail)) / MAD_TO_SIGMA
    return float(sigma * np.sqrt(2.0 * np.log(n)))


def suppress_artifacts(
    rec: Recording,
    amp_limit: float = 100.0,
    wavelet_threshold: bool = False,
    levels: int = 4,
) -> CleanRecording:
    """Clip excursions beyond ``amp_limit`` and optionally wavelet-denoise.

    Denoising soft-thresholds every detail level with the universal
    threshold estimated from the finest level. The reconstruction is then
    capped at the channel's pre-denoising peak, so the output peak never
    exceeds the input peak.
    """
    if amp_limit <= 0:
        raise ValueError("amp_limit must be positive")
    names = rec.layout.names
    x = np.array(rec.samples)
    log: list[CleaningAction] = []

    over = np.abs(x) > amp_limit
    for ch in np.flatnonzero(over.any(axis=0)):
        for start, stop in _runs(over[:, ch]):
            log.append(CleaningAction(names[ch], int(start), int(stop), "clip"))
    np.clip(x, -amp_limit, amp_limit, out=x)

    if wavelet_threshold and rec.n_samples >= 8:
        peak = np.abs(x).max(axis=0)
        approx, details = dwt(x.T, levels)
        shrunk = []
        for ch in range(x.shape[1]):
            thr = universal_threshold(details[0][ch], rec.n_samples)
            shrunk.append([np.sign(d[ch]) * np.maximum(np.abs(d[ch]) - thr, 0.0) for d in details])
        new_details = [np.stack([s[lvl] for s in shrunk]) for lvl in range(levels)]
        y = idwt(approx, new_details, rec.n_samples).T
        for ch in range(x.shape[1]):
            log.append(CleaningAction(names[ch], 0, rec.n_samples, "wavelet_shrink"))
            overshoot = np.abs(y[:, ch]) > peak[ch]
            for start, stop in _runs(overshoot):
                log.append(CleaningAction(names[ch], int(start), int(stop), "cap_overshoot"))
            np.clip(y[:, ch], -peak[ch], peak[ch], out=y[:, ch])
        x = y

    return CleanRecording(rec.layout, rec.fs, x, rec.meta, tuple(log))


@dataclass(frozen=True, eq=False)
class EpochSet:
    epochs: tuple[Epoch, ...]
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        shapes = {e.samples.shape for e in self.epochs}
        if len(shapes) > 1:
            raise DataError(f"epochs differ in shape: {sorted(shapes)}")

    def __len__(self):
        return len(self.epochs)

    @property
    def data(self) -> np.ndarray:
        """Stacked samples, (n_epochs, n_samples, n_channels)."""
        if not self.epochs:
            return np.zeros((0, 0, 0))
        return np.stack([e.samples for e in self.epochs])

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.epochs], dtype=int)

    @property
    def origins(self) -> list[tuple[str, int, int]]:
        return [e.origin for e in self.epochs]

    def __add__(self, other: "EpochSet") -> "EpochSet":
        return EpochSet(self.epochs + other.epochs, self.config or other.config)

    def save(self, path) -> None:
        origins = self.origins
        np.savez_compressed(
            path,
            data=self.data,
            labels=self.labels,
            subject=np.array([o[0] for o in origins], dtype=str),
            trial=np.array([o[1] for o in origins], dtype=int),
            index=np.array([o[2] for o in origins], dtype=int),
            config=json.dumps(self.config),
        )


def segment(rec: Recording, epoch_s: float = 1.0) -> EpochSet:
    """Cut the task period into consecutive, non-overlapping epochs.

    Idle periods before and after the task are excluded and a partial
    trailing window is dropped. Every epoch carries the trial's workload
    type as its label.
    """
    meta = rec.meta
    width = int(round(epoch_s * rec.fs))
    if width < 1:
        raise DataError(f"epoch of {epoch_s} s is shorter than one sample")
    start = int(round(meta.idle_head_s * rec.fs))
    stop = min(start + int(round(meta.task_s * rec.fs)), rec.n_samples)
    n_epochs = max(stop - start, 0) // width
    if n_epochs < 1:
        raise DataError(
            f"subject {meta.subject_id} trial {meta.trial_index}: task period holds no full"
            f" {epoch_s} s epoch"
        )
    epochs = tuple(
        Epoch(
            samples=np.array(rec.samples[start + i * width:start + (i + 1) * width]),
            label=meta.model_type,
            origin=(meta.subject_id, meta.trial_index, i),
        )
        for i in range(n_epochs)
    )
    config = {"epoch_s": epoch_s, "fs": rec.fs, "channels": list(rec.layout.names)}
    return EpochSet(epochs, config)
