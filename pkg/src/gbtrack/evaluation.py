"""Tracker evaluation: error statistics against truth, a GB-aware energy
prescreener, and ROC curves with an AUC over a low false-alarm-rate window.

Areas are in m^2.  With the default cell geometry (5 cm down-track by 5 cm
cross-track) one cell covers :data:`CELL_AREA_M2`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter

from .core import GprVolume, GroundBounceSurface

CELL_AREA_M2 = 0.05 * 0.05
FAR_WINDOW = 0.02


@dataclass(frozen=True)
class TrackError:
    bias: float
    variance: float
    rmse: float
    n_cells: int

    def to_dict(self) -> dict:
        return {"bias": self.bias, "variance": self.variance, "rmse": self.rmse,
                "n_cells": self.n_cells}


def bias_variance(est: GroundBounceSurface, truth: GroundBounceSurface,
                  start_scan: int = 0) -> TrackError:
    """Signed error statistics of ``est - truth`` over scans ``start_scan:``.

    The variance is the population variance (divides by the cell count).
    """
    a, b = np.asarray(_gb(est)), np.asarray(_gb(truth))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: estimate {a.shape} vs truth {b.shape}")
    if not 0 <= start_scan < a.shape[1]:
        raise ValueError(f"start_scan {start_scan} outside [0, {a.shape[1]})")
    e = (a[:, start_scan:] - b[:, start_scan:]).ravel()
    bias = float(e.mean())
    var = float(np.mean((e - bias) ** 2))
    rmse = float(np.sqrt(np.mean(e**2)))
    return TrackError(bias, var, rmse, e.size)


def _gb(s):
    return s.gb if isinstance(s, GroundBounceSurface) else s


@dataclass(frozen=True)
class Alarm:
    """A prescreener hit at 0-based ``(ch, dt)``."""

    ch: int
    dt: int
    score: float


@dataclass
class PrescreenConfig:
    """Energy prescreener settings.

    The score of a cell is the RMS over the ``depth_window`` samples below the
    tracked GB, with the first ``guard`` of them zeroed to remove the GB
    return itself.  Local maxima of the score map (over a ``neighbourhood``
    square of cells) above the ``percentile``-th score are reported.

    With ``noise_window > 0`` each score is divided by the RMS of the last
    ``noise_window`` samples of the same A-scan (a noise-floor reference that
    should lie below any target), so broadband disturbances such as an
    interference streak cancel while energy confined below the GB stands out.
    """

    depth_window: int = 60
    guard: int = 12
    percentile: float = 90.0
    neighbourhood: int = 3
    noise_window: int = 32
    noise_floor: float = 1e-6

    def __post_init__(self):
        if self.depth_window < 1:
            raise ValueError("depth_window must be >= 1")
        if not 0 <= self.guard < self.depth_window:
            raise ValueError("guard must be in [0, depth_window)")
        if not 0 <= self.percentile <= 100:
            raise ValueError("percentile must be in [0, 100]")
        if self.noise_window < 0:
            raise ValueError("noise_window must be >= 0")
        if self.neighbourhood < 1:
            raise ValueError("neighbourhood must be >= 1")


def score_map(v: GprVolume, gb: GroundBounceSurface, cfg: PrescreenConfig | None = None) -> np.ndarray:
    """Per-cell prescreener score, shape ``(n_channels, n_scans)``."""
    cfg = cfg or PrescreenConfig()
    g = np.rint(_gb(gb)).astype(np.int64)
    if g.shape != (v.n_channels, v.n_scans):
        raise ValueError(f"surface {g.shape} does not match volume ({v.n_channels}, {v.n_scans})")
    raw = v.raw
    nd = v.n_depth
    g = g.T  # (nsc, nch) to match raw
    si, ci = np.indices(g.shape)
    acc = np.zeros(g.shape)
    for j in range(cfg.guard + 1, cfg.depth_window + 1):
        rows = g + j
        ok = rows < nd
        vals = raw[si[ok], ci[ok], rows[ok]].astype(np.float64)
        acc[ok] += vals * vals
    score = np.sqrt(acc / cfg.depth_window).T
    if cfg.noise_window > 0:
        tail = raw[:, :, -cfg.noise_window:].astype(np.float64)
        floor = np.sqrt(np.mean(tail * tail, axis=2)).T
        score = score / np.maximum(floor, cfg.noise_floor)
    return score


def prescreen(v: GprVolume, gb: GroundBounceSurface, cfg: PrescreenConfig | None = None) -> list[Alarm]:
    """Alarms sorted by descending score."""
    cfg = cfg or PrescreenConfig()
    score = score_map(v, gb, cfg)
    thresh = np.percentile(score, cfg.percentile)
    peak = maximum_filter(score, size=cfg.neighbourhood, mode="nearest") == score
    ch, dt = np.nonzero(peak & (score > thresh))
    order = np.argsort(-score[ch, dt], kind="stable")
    return [Alarm(int(ch[i]), int(dt[i]), float(score[ch[i], dt[i]])) for i in order]


@dataclass
class RocCurve:
    """PD against false alarms per m^2, one point per distinct alarm score.

    ``auc_window`` integrates PD over FAR in ``[0, far_max]`` with the
    trapezoidal rule; the curve starts at ``(0, 0)`` when its first point has
    FAR > 0 and is extended flat past its last point.
    """

    points: np.ndarray  # (n, 2): far, pd
    auc_window: float
    thresholds: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_mines: int = 0
    n_false_alarms: int = 0
    degenerate: bool = False
    far_max: float = FAR_WINDOW

    @property
    def far(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def pd(self) -> np.ndarray:
        return self.points[:, 1]


def roc(alarms: list[Alarm], truth_mines, halo: int = 5, area_m2: float = 1.0,
        far_max: float = FAR_WINDOW) -> RocCurve:
    """Score alarms against mine locations.

    Alarms are taken in descending score order.  An alarm within ``halo``
    cells (Chebyshev distance) of a not-yet-detected mine detects the nearest
    such mine.  An alarm that is only near already-detected mines is neither
    a detection nor a false alarm; every other alarm is a false alarm.
    """
    if area_m2 <= 0:
        raise ValueError("area_m2 must be > 0")
    if halo < 0:
        raise ValueError("halo must be >= 0")
    mines = np.asarray([(int(m[0]), int(m[1])) for m in truth_mines], dtype=np.int64).reshape(-1, 2)
    n_mines = len(mines)
    ordered = sorted(alarms, key=lambda a: -a.score)
    detected = np.zeros(n_mines, bool)
    n_det = n_fa = 0
    far, pd, thr = [], [], []
    for i, a in enumerate(ordered):
        if n_mines:
            d = np.maximum(np.abs(mines[:, 0] - a.ch), np.abs(mines[:, 1] - a.dt))
            near = d <= halo
            free = near & ~detected
            if free.any():
                k = np.flatnonzero(free)[np.argmin(d[free])]
                detected[k] = True
                n_det += 1
            elif not near.any():
                n_fa += 1
        else:
            n_fa += 1
        last_of_group = i + 1 == len(ordered) or ordered[i + 1].score != a.score
        if last_of_group:
            far.append(n_fa / area_m2)
            pd.append(n_det / n_mines if n_mines else 0.0)
            thr.append(a.score)
    pts = np.column_stack([far, pd]) if far else np.empty((0, 2))
    auc = windowed_auc(pts, far_max) if n_mines else 0.0
    return RocCurve(pts, auc, np.asarray(thr), n_mines, n_fa, degenerate=n_mines == 0, far_max=far_max)


def windowed_auc(points: np.ndarray, far_max: float = FAR_WINDOW) -> float:
    """Trapezoidal area under ``pd(far)`` on ``[0, far_max]``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    far, pd = pts[:, 0], pts[:, 1]
    if far[0] > 0:
        far, pd = np.r_[0.0, far], np.r_[0.0, pd]
    if far[-1] < far_max:
        far, pd = np.r_[far, far_max], np.r_[pd, pd[-1]]
    else:
        k = int(np.searchsorted(far, far_max, side="right"))
        # interpolate at far_max; coinciding FARs (vertical steps) take the last PD
        if far[k - 1] == far_max:
            far, pd = far[:k], pd[:k]
        else:
            p = np.interp(far_max, far[k - 1:k + 1], pd[k - 1:k + 1])
            far, pd = np.r_[far[:k], far_max], np.r_[pd[:k], p]
    return float(np.clip(np.trapezoid(pd, far), 0.0, far_max))
