"""Per-epoch EEG features: statistical, derivative, interval, Hjorth,
spectral, wavelet and autoregressive families.

Every extractor works along the last axis of its input, so one call
handles a single channel, an epoch's channels, or a whole stack of epochs.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import DEFAULT_BANDS, DataError, Epoch, RunConfig
from .wavelet import dwt

EPS = 1e-12
BAND_ORDER = ("delta", "theta", "alpha", "beta")


@dataclass(frozen=True)
class FeatureConfig:
    fs: int = 128
    epoch_s: float = 1.0
    band_edges: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BANDS))
    wavelet_levels: int = 4
    ar_order: int = 6

    @property
    def n_samples(self) -> int:
        return int(round(self.fs * self.epoch_s))

    @classmethod
    def from_run(cls, cfg: RunConfig, fs: int) -> "FeatureConfig":
        return cls(fs, cfg.epoch_s, dict(cfg.band_edges), cfg.wavelet_levels, cfg.ar_order)


def _check(x, cfg: FeatureConfig | None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if cfg is not None and x.shape[-1] != cfg.n_samples:
        raise ValueError(
            f"epoch length {x.shape[-1]} does not match fs*epoch_s = {cfg.n_samples}"
        )
    if x.shape[-1] < 3:
        raise ValueError("epoch needs at least 3 samples")
    return x


def _safe_div(num, den):
    den = np.asarray(den, dtype=float)
    ok = den != 0
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


# --------------------------------------------------------------------------
# statistical

def extract_statistical(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    """mean, median, std, skewness, excess kurtosis, min, max (biased moments)."""
    x = _check(x, cfg)
    mean = x.mean(axis=-1)
    dev = x - mean[..., None]
    m2 = np.mean(dev**2, axis=-1)
    m3 = np.mean(dev**3, axis=-1)
    m4 = np.mean(dev**4, axis=-1)
    skew = _safe_div(m3, m2**1.5)
    kurt = np.where(m2 > 0, _safe_div(m4, m2**2) - 3.0, 0.0)
    return np.stack(
        [mean, np.median(x, axis=-1), np.sqrt(m2), skew, kurt, x.min(axis=-1), x.max(axis=-1)],
        axis=-1,
    )


def extract_derivative(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    """max and mean of |first difference| and |second difference|."""
    x = _check(x, cfg)
    d1 = np.abs(np.diff(x, axis=-1))
    d2 = np.abs(np.diff(x, n=2, axis=-1))
    return np.stack([d1.max(-1), d1.mean(-1), d2.max(-1), d2.mean(-1)], axis=-1)


# --------------------------------------------------------------------------
# interval / period

def vertex_mask(x) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of local maxima and minima over interior samples.

    A vertex is a strict sign change of the first difference, so plateaus
    never count. Masks have length ``n - 2`` and index sample ``i + 1``.
    """
    s = np.sign(np.diff(x, axis=-1))
    maxima = (s[..., :-1] > 0) & (s[..., 1:] < 0)
    minima = (s[..., :-1] < 0) & (s[..., 1:] > 0)
    return maxima, minima


def _grouped_mean_var(values, groups, n_groups):
    count = np.bincount(groups, minlength=n_groups).astype(float)
    total = np.bincount(groups, weights=values, minlength=n_groups)
    mean = _safe_div(total, count)
    sq = np.bincount(groups, weights=(values - mean[groups]) ** 2, minlength=n_groups)
    return mean, _safe_div(sq, count)


def extract_interval(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Vertex-to-vertex and crossing statistics.

    Columns: v2v amplitude mean/var, v2v slope mean/var, v2v time mean,
    n local minima, n local maxima, zero crossings, amplitude range,
    coefficient of variation, line length. Vertex times are in seconds and
    slopes in units per second.
    """
    x = _check(x, cfg)
    fs = cfg.fs if cfg is not None else 1.0
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    n_rows = flat.shape[0]

    maxima, minima = vertex_mask(flat)
    rows, pos = np.nonzero(maxima | minima)
    pos = pos + 1
    same = rows[1:] == rows[:-1]
    pair_rows = rows[1:][same]
    amp = (flat[rows[1:], pos[1:]] - flat[rows[:-1], pos[:-1]])[same]
    dt = (pos[1:] - pos[:-1])[same] / fs
    amp_mean, amp_var = _grouped_mean_var(np.abs(amp), pair_rows, n_rows)
    slope_mean, slope_var = _grouped_mean_var(amp / dt, pair_rows, n_rows)
    time_mean, _ = _grouped_mean_var(dt, pair_rows, n_rows)

    mean = flat.mean(-1)
    out = np.stack(
        [
            amp_mean,
            amp_var,
            slope_mean,
            slope_var,
            time_mean,
            minima.sum(-1).astype(float),
            maxima.sum(-1).astype(float),
            np.sum(flat[:, :-1] * flat[:, 1:] < 0, axis=-1).astype(float),
            flat.max(-1) - flat.min(-1),
            flat.std(-1) / (np.abs(mean) + EPS),
            np.abs(np.diff(flat, axis=-1)).sum(-1),
        ],
        axis=-1,
    )
    return out.reshape(lead + (out.shape[-1],))


# --------------------------------------------------------------------------
# Hjorth

def _mobility(var_signal, var_deriv):
    return np.sqrt(_safe_div(var_deriv, var_signal))


def extract_hjorth(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    """activity = var(x), mobility, complexity; zero for flat signals."""
    x = _check(x, cfg)
    d1 = np.diff(x, axis=-1)
    d2 = np.diff(x, n=2, axis=-1)
    v0, v1, v2 = x.var(-1), d1.var(-1), d2.var(-1)
    mob = _mobility(v0, v1)
    comp = _safe_div(_mobility(v1, v2), mob)
    return np.stack([v0, mob, comp], axis=-1)


# --------------------------------------------------------------------------
# spectral

def periodogram(x, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided rectangular-window periodogram.

    Bin spacing is ``fs / n``. Interior bins are doubled so the powers sum
    to the mean square of ``x``; a unit sine on a bin centre reads 0.5.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("periodogram needs at least 2 samples")
    power = np.abs(np.fft.rfft(x, axis=-1)) ** 2 / n**2
    if n % 2 == 0:
        power[..., 1:-1] *= 2
    else:
        power[..., 1:] *= 2
    return np.fft.rfftfreq(n, d=1.0 / fs), power


def _band_mask(freqs, lo, hi):
    return (freqs >= lo) & (freqs < hi)


def extract_spectral(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Per-band max and mean periodogram power, then five band-power ratios.

    Ratios use band mean powers: delta/theta, delta/alpha, theta/alpha,
    beta/alpha and (delta+theta)/(alpha+beta).
    """
    x = _check(x, cfg)
    cfg = cfg or FeatureConfig()
    freqs, power = periodogram(x, cfg.fs)
    cols, means = [], {}
    for band in BAND_ORDER:
        lo, hi = cfg.band_edges[band]
        sel = power[..., _band_mask(freqs, lo, hi)]
        if sel.shape[-1] == 0:
            mx = mn = np.zeros(x.shape[:-1])
        else:
            mx, mn = sel.max(-1), sel.mean(-1)
        cols += [mx, mn]
        means[band] = mn
    d, t, a, b = (means[k] for k in BAND_ORDER)
    cols += [
        d / (t + EPS),
        d / (a + EPS),
        t / (a + EPS),
        b / (a + EPS),
        (d + t) / (a + b + EPS),
    ]
    return np.stack(cols, axis=-1)


# --------------------------------------------------------------------------
# wavelet

def _coef_stats(c):
    energy = np.sum(c**2, axis=-1)
    p = c**2 / np.where(energy > 0, energy, 1.0)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return [c.mean(-1), c.std(-1), energy, -plogp.sum(-1)]


def extract_wavelet(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    """Approximation and pooled detail coefficients: mean, std, energy, entropy."""
    x = _check(x, cfg)
    levels = cfg.wavelet_levels if cfg is not None else 4
    approx, details = dwt(x, levels)
    return np.stack(_coef_stats(approx) + _coef_stats(np.concatenate(details, axis=-1)), axis=-1)


# --------------------------------------------------------------------------
# autoregressive

def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Biased autocorrelation of the mean-removed signal, lags 0..max_lag."""
    x = np.asarray(x, dtype=float)
    xc = x - x.mean(-1, keepdims=True)
    n = x.shape[-1]
    return np.stack([np.sum(xc[..., : n - k] * xc[..., k:], -1) / n for k in range(max_lag + 1)], -1)


def levinson_durbin(r, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Solve the Yule-Walker equations for every row of ``r``.

    Returns coefficients ``a`` with ``x[n] ~ sum_k a[k-1] x[n-k]`` and the
    final prediction-error variance. Rows with zero power give zeros.
    """
    r = np.asarray(r, dtype=float)
    a = np.zeros(r.shape[:-1] + (order,))
    err = r[..., 0].copy()
    for i in range(order):
        acc = r[..., i + 1] - np.sum(a[..., :i] * r[..., i:0:-1], axis=-1)
        k = _safe_div(acc, err)
        prev = a[..., :i].copy()
        a[..., :i] = prev - k[..., None] * prev[..., ::-1]
        a[..., i] = k
        err = err * (1.0 - k**2)
    return a, err


def extract_ar(x, cfg: FeatureConfig | None = None) -> np.ndarray:
    x = _check(x, cfg)
    order = cfg.ar_order if cfg is not None else 6
    a, _ = levinson_durbin(autocorrelation(x, order), order)
    return a


# --------------------------------------------------------------------------
# registry

class FeatureDescriptor(NamedTuple):
    name: str
    family: str
    extractor: str


FAMILIES: dict[str, Callable] = {
    "statistical": extract_statistical,
    "derivative": extract_derivative,
    "interval": extract_interval,
    "hjorth": extract_hjorth,
    "spectral": extract_spectral,
    "wavelet": extract_wavelet,
    "ar": extract_ar,
}


def _family_names(cfg: FeatureConfig) -> dict[str, list[str]]:
    spectral = []
    for band in BAND_ORDER:
        spectral += [f"fft_{band}_max_power", f"fft_{band}_mean_power"]
    spectral += [
        "ratio_delta_theta", "ratio_delta_alpha", "ratio_theta_alpha",
        "ratio_beta_alpha", "ratio_slow_fast",
    ]
    return {
        "statistical": ["mean", "median", "std", "skewness", "kurtosis", "min", "max"],
        "derivative": ["diff1_max", "diff1_mean", "diff2_max", "diff2_mean"],
        "interval": [
            "v2v_amplitude_mean", "v2v_amplitude_var", "v2v_slope_mean", "v2v_slope_var",
            "v2v_time_mean", "n_local_minima", "n_local_maxima", "zero_crossings",
            "amplitude_range", "coeff_variation", "line_length",
        ],
        "hjorth": ["hjorth_activity", "hjorth_mobility", "hjorth_complexity"],
        "spectral": spectral,
        "wavelet": [
            "wavelet_approx_mean", "wavelet_approx_std", "wavelet_approx_energy",
            "wavelet_approx_entropy", "wavelet_detail_mean", "wavelet_detail_std",
            "wavelet_detail_energy", "wavelet_detail_entropy",
        ],
        "ar": [f"ar_{k}" for k in range(1, cfg.ar_order + 1)],
    }


def build_registry(cfg: FeatureConfig | None = None) -> tuple[FeatureDescriptor, ...]:
    """Ordered feature descriptors; 52 entries with the default configuration."""
    cfg = cfg or FeatureConfig()
    return tuple(
        FeatureDescriptor(name, family, FAMILIES[family].__name__)
        for family, names in _family_names(cfg).items()
        for name in names
    )


DEFAULT_REGISTRY = build_registry()


def extract_channels(x, cfg: FeatureConfig, registry: Sequence[FeatureDescriptor] | None = None) -> np.ndarray:
    """Registry-ordered features for signals ``x[..., n_samples]``."""
    registry = registry or build_registry(cfg)
    names = _family_names(cfg)
    needed = []
    for d in registry:
        if d.family not in needed:
            needed.append(d.family)
    columns = {}
    for family in needed:
        values = FAMILIES[family](x, cfg)
        for j, name in enumerate(names[family]):
            columns[name] = values[..., j]
    try:
        return np.stack([columns[d.name] for d in registry], axis=-1)
    except KeyError as exc:
        raise DataError(f"unknown feature {exc.args[0]!r} in registry") from None


def feature_names(registry, channels: Sequence[str] | None = None) -> list[str]:
    names = [d.name for d in registry]
    if channels is None:
        return names
    return [f"{ch}_{n}" for ch in channels for n in names]


def epoch_features(samples, cfg: FeatureConfig, registry=None, per_channel: bool = False) -> np.ndarray:
    """Features for epochs shaped (..., n_samples, n_channels).

    Aggregate mode averages each feature over channels; per-channel mode
    concatenates channel blocks in layout order.
    """
    samples = np.asarray(samples, dtype=float)
    per_ch = extract_channels(np.swapaxes(samples, -1, -2), cfg, registry)
    if per_channel:
        return per_ch.reshape(per_ch.shape[:-2] + (-1,))
    return per_ch.mean(axis=-2)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    label: int
    origin: tuple[str, int, int]


def extract_all(epoch: Epoch, registry=None, cfg: FeatureConfig | None = None, per_channel: bool = False) -> FeatureVector:
    cfg = cfg or FeatureConfig()
    values = epoch_features(epoch.samples, cfg, registry, per_channel)
    return FeatureVector(values, epoch.label, epoch.origin)


# --------------------------------------------------------------------------
# feature matrix

@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows of features with their names, labels and epoch origins."""

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    origins: tuple[tuple[str, int, int], ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.names))
        y = np.asarray(self.y, dtype=int).reshape(-1)
        names = tuple(self.names)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise DataError(f"matrix shape {X.shape} does not match {len(names)} names")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if len(set(names)) != len(names):
            raise DataError("feature names are not unique")
        if self.origins is not None and len(self.origins) != X.shape[0]:
            raise DataError("origins not aligned to rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def rows(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        origins = None if self.origins is None else tuple(self.origins[i] for i in np.arange(len(self))[index])
        return FeatureMatrix(self.X[index], self.y[index], self.names, origins)

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        missing = [n for n in names if n not in self.names]
        if missing:
            raise DataError(f"features not in matrix: {missing}")
        cols = [self.names.index(n) for n in names]
        return FeatureMatrix(self.X[:, cols], self.y, tuple(names), self.origins)

    def with_values(self, X) -> "FeatureMatrix":
        return FeatureMatrix(X, self.y, self.names, self.origins)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.names + ("label",)) + "\n")
        if len(self):
            np.savetxt(buf, np.column_stack([self.X, self.y]), fmt=["%.17g"] * self.n_features + ["%d"], delimiter=",")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        try:
            with open(path, newline="") as fh:
                header = next(csv.reader(fh))
        except (FileNotFoundError, StopIteration):
            raise DataError(f"{path}: unreadable feature file") from None
        if not header or header[-1] != "label":
            raise DataError(f"{path}: last column must be 'label'")
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        if data.size == 0:
            data = np.zeros((0, len(header)))
        return cls(data[:, :-1], data[:, -1].astype(int), tuple(header[:-1]))

    def to_json(self) -> str:
        return json.dumps(
            {
                "names": list(self.names),
                "X": self.X.tolist(),
                "y": self.y.tolist(),
                "origins": None if self.origins is None else [list(o) for o in self.origins],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureMatrix":
        d = json.loads(text)
        origins = None if d.get("origins") is None else tuple(tuple(o) for o in d["origins"])
        X = np.array(d["X"], dtype=float).reshape(-1, len(d["names"]))
        return cls(X, np.array(d["y"], dtype=int), tuple(d["names"]), origins)


def extract_matrix(epochs, cfg: FeatureConfig, registry=None, per_channel: bool = False,
                   channels: Sequence[str] | None = None, batch: int = 512) -> FeatureMatrix:
    """FeatureMatrix for an EpochSet (or any sequence of Epoch)."""
    registry = registry or build_registry(cfg)
    epochs = list(getattr(epochs, "epochs", epochs))
    n_feat = len(registry) * (len(channels) if per_channel and channels else 1)
    blocks = []
    for i in range(0, len(epochs), batch):
        stack = np.stack([e.samples for e in epochs[i:i + batch]])
        blocks.append(epoch_features(stack, cfg, registry, per_channel))
    X = np.concatenate(blocks) if blocks else np.zeros((0, n_feat))
    if per_channel:
        if channels is None:
            n_ch = X.shape[1] // len(registry) if len(X) else 0
            channels = [f"ch{c}" for c in range(n_ch)]
        names = feature_names(registry, channels)
    else:
        names = feature_names(registry)
    return FeatureMatrix(
        X, [e.label for e in epochs], tuple(names), tuple(tuple(e.origin) for e in epochs)
    )


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Transformer from raw epochs (n_epochs, n_samples, n_channels) to features."""

    def __init__(self, fs=128, epoch_s=1.0, band_edges=None, wavelet_levels=4, ar_order=6,
                 per_channel=False):
        self.fs = fs
        self.epoch_s = epoch_s
        self.band_edges = band_edges
        self.wavelet_levels = wavelet_levels
        self.ar_order = ar_order
        self.per_channel = per_channel

    def _config(self) -> FeatureConfig:
        return FeatureConfig(self.fs, self.epoch_s, dict(self.band_edges or DEFAULT_BANDS),
                             self.wavelet_levels, self.ar_order)

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 3:
            raise ValueError("expected epochs shaped (n_epochs, n_samples, n_channels)")
        cfg = self._config()
        self.registry_ = build_registry(cfg)
        self.n_channels_ = X.shape[2]
        names = [d.name for d in self.registry_]
        if self.per_channel:
            names = feature_names(self.registry_, [f"ch{c}" for c in range(self.n_channels_)])
        self.feature_names_out_ = np.array(names, dtype=object)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[2] != getattr(self, "n_channels_", X.shape[2]):
            raise ValueError("epochs do not match the fitted channel count")
        return epoch_features(X, self._config(), None, self.per_channel)

    def get_feature_names_out(self, input_features=None):
        return self.feature_names_out_
