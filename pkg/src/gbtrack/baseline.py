"""Global-maximum and constrained-maximum GB trackers."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import GprVolume, GroundBounceSurface


@dataclass
class ConstrainedMaxConfig:
    """Search half-width ``W = clip(alpha_cm * STD(history), w_min, w_max)``."""

    w_max: float = 20.0
    alpha_cm: float = 3.0
    w_min: float = 2.0

    def __post_init__(self):
        if self.w_min < 1:
            raise ValueError("w_min must be >= 1")
        if self.w_max < self.w_min:
            raise ValueError("w_max must be >= w_min")
        if self.alpha_cm <= 0:
            raise ValueError("alpha_cm must be > 0")


def global_max_indices(v: GprVolume) -> np.ndarray:
    """Per-cell argmax over depth as an int array ``(n_channels, n_scans)``.

    ``np.argmax`` returns the first maximum, so ties go to the shallowest sample.
    """
    return np.argmax(v.raw, axis=2).T


def track_global_max(v: GprVolume) -> GroundBounceSurface:
    return GroundBounceSurface(global_max_indices(v).astype(np.float64), v.n_depth)


def window_half_width(history_std: float, cfg: ConstrainedMaxConfig) -> int:
    w = cfg.alpha_cm * history_std
    return int(np.floor(min(max(w, cfg.w_min), cfg.w_max)))


@numba.njit(cache=True)
def _constrained_channel(raw, ch, alpha, w_min, w_max, out):
    nsc, _, nd = raw.shape
    prev = int(np.argmax(raw[0, ch]))
    out[0] = prev
    # Welford running mean / M2
    n, mean, m2 = 1, float(prev), 0.0
    for dt in range(1, nsc):
        w = int(np.floor(min(max(alpha * np.sqrt(m2 / n), w_min), w_max)))
        lo, hi = max(prev - w, 0), min(prev + w + 1, nd)
        prev = lo + int(np.argmax(raw[dt, ch, lo:hi]))
        out[dt] = prev
        n += 1
        delta = prev - mean
        mean += delta / n
        m2 += delta * (prev - mean)


def track_constrained_max(v: GprVolume, cfg: ConstrainedMaxConfig | None = None) -> GroundBounceSurface:
    """Sequential local-maximum tracker, one pass per channel.

    Scan 0 takes the global maximum.  Every later scan searches
    ``[prev - W, prev + W]`` (clamped to the depth axis) where ``W`` is
    :func:`window_half_width` of the population STD of all estimates so far
    on that channel.
    """
    cfg = cfg or ConstrainedMaxConfig()
    nd, nch, nsc = v.shape
    out = np.empty((nch, nsc))
    for ch in range(nch):
        _constrained_channel(v.raw, ch, float(cfg.alpha_cm), float(cfg.w_min), float(cfg.w_max), out[ch])
    return GroundBounceSurface(out, nd)
