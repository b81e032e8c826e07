"""Periodised Daubechies-4 (8-tap) discrete wavelet transform.

Operates along the last axis so a whole batch of epochs/channels is
transformed at once.
"""
from __future__ import annotations

import numpy as np

# db4 scaling filter, sum = sqrt(2), sum of squares = 1
DB4 = np.array([
    0.2303778133088965,
    0.7148465705529157,
    0.6308807679298589,
    -0.027983769416859858,
    -0.18703481171909309,
    0.030841381835560764,
    0.0328830116668852,
    -0.010597401785069032,
])
# quadrature mirror: g[j] = (-1)^j h[L-1-j]
DB4_HIGH = DB4[::-1] * np.array([1.0, -1.0] * (len(DB4) // 2))

FILTER_LENGTH = len(DB4)


def _taps(n: int) -> np.ndarray:
    k = np.arange(n // 2)[:, None]
    j = np.arange(FILTER_LENGTH)[None, :]
    return (2 * k + j) % n


def _analysis_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    windows = x[..., _taps(x.shape[-1])]
    return windows @ DB4, windows @ DB4_HIGH


def _synthesis_step(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    n = 2 * approx.shape[-1]
    out = np.zeros(approx.shape[:-1] + (n,))
    taps = _taps(n)
    for j in range(FILTER_LENGTH):
        # within one tap offset the target indices are distinct, so += is safe
        out[..., taps[:, j]] += DB4[j] * approx + DB4_HIGH[j] * detail
    return out


def padded_length(n: int, levels: int) -> int:
    block = 2 ** levels
    return -(-n // block) * block


def dwt(x, levels: int = 4) -> tuple[np.ndarray, list[np.ndarray]]:
    """Multilevel orthogonal DWT along the last axis.

    Returns ``(approx, details)`` where ``details[0]`` is the finest level.
    Signals whose length is not a multiple of ``2**levels`` are extended by
    symmetric padding at the end; :func:`idwt` needs the original length to
    trim it again.
    """
    x = np.asarray(x, dtype=float)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    n = x.shape[-1]
    if n < FILTER_LENGTH:
        raise ValueError(f"signal length {n} shorter than filter length {FILTER_LENGTH}")
    target = padded_length(n, levels)
    if target != n:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, target - n)]
        x = np.pad(x, pad, mode="symmetric")
    details = []
    approx = x
    for _ in range(levels):
        approx, d = _analysis_step(approx)
        details.append(d)
    return approx, details


def idwt(approx, details, length: int | None = None) -> np.ndarray:
    """Inverse of :func:`dwt`; ``length`` trims any padding."""
    x = np.asarray(approx, dtype=float)
    for d in reversed(details):
        x = _synthesis_step(x, np.asarray(d, dtype=float))
    if length is not None:
        x = x[..., :length]
    return x
