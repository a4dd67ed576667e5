"""Kalman-filter GB tracker.

One filter per channel.  The state of the filter for channel ``ch`` is

    [GB_ch, GB_ch-1, GB_ch+1, GB'_ch, GB'_ch-1, GB'_ch+1]

(positions in samples, derivatives in samples/scan) and its measurement is
the global-maximum track at the same three channels.  Edge channels reuse
themselves as the missing neighbour.

:func:`kf_predict` and :func:`kf_update` accept a single state (``x`` of
shape ``(6,)``) or a batch (``(n, 6)``); :func:`track_kalman` runs all
channels as one batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baseline import global_max_indices
from .core import GprVolume, GroundBounceSurface

F = np.zeros((6, 6))
F[:3, :] = 1.0 / 3.0
F[3:, 3:] = np.eye(3)

H = np.hstack([np.eye(3), np.zeros((3, 3))])

SINGULAR_JITTER = 1e-9


@dataclass
class KfConfig:
    q_scale: float = 0.01
    r_base: float = 1.0
    r_smooth_window: int = 5
    p0_scale: float = 25.0

    def __post_init__(self):
        if self.q_scale < 0:
            raise ValueError("q_scale must be >= 0")
        if self.r_base <= 0:
            raise ValueError("r_base must be > 0")
        if self.r_smooth_window < 1:
            raise ValueError("r_smooth_window must be >= 1")

    @property
    def Q(self) -> np.ndarray:
        return self.q_scale * np.eye(6)


@dataclass
class KfState:
    x: np.ndarray
    P: np.ndarray
    diagnostics: dict = field(default_factory=lambda: {"singular_innovations": 0})

    def positions(self) -> np.ndarray:
        return self.x[..., :3]


def initial_state(z0: np.ndarray, cfg: KfConfig) -> KfState:
    """Positions from the first measurement(s), zero derivatives, ``P0 = p0_scale * I``."""
    z0 = np.asarray(z0, dtype=np.float64)
    x = np.concatenate([z0, np.zeros_like(z0)], axis=-1)
    P = np.broadcast_to(cfg.p0_scale * np.eye(6), x.shape[:-1] + (6, 6)).copy()
    return KfState(x, P)


def kf_predict(s: KfState, cfg: KfConfig) -> KfState:
    x = s.x @ F.T
    P = F @ s.P @ F.T + cfg.Q
    return KfState(x, P, dict(s.diagnostics))


def kf_update(s: KfState, z: np.ndarray, r_k: np.ndarray) -> KfState:
    """Textbook update with measurement ``z`` (``(..., 3)``) and covariance ``r_k`` (``(..., 3, 3)``)."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement must be finite")
    diag = dict(s.diagnostics)
    innov = z - s.x @ H.T
    PHt = s.P @ H.T
    S = H @ PHt + r_k
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    try:
        S_inv = np.linalg.inv(S)
        bad = ~np.all(np.isfinite(S_inv), axis=(-2, -1))
    except np.linalg.LinAlgError:
        bad = np.ones(S.shape[:-2], bool)
        S_inv = None
    if np.any(bad):
        S = S + SINGULAR_JITTER * np.eye(3)
        S_inv = np.linalg.inv(S)
        diag["singular_innovations"] = diag.get("singular_innovations", 0) + int(np.sum(bad))
    K = PHt @ S_inv
    x = s.x + (K @ innov[..., None])[..., 0]
    # Joseph form keeps P symmetric PSD over long runs
    I_KH = np.eye(6) - K @ H
    P = I_KH @ s.P @ np.swapaxes(I_KH, -1, -2) + K @ r_k @ np.swapaxes(K, -1, -2)
    P = 0.5 * (P + np.swapaxes(P, -1, -2))
    return KfState(x, P, diag)


def neighbour_index(n_channels: int) -> np.ndarray:
    """``(n_channels, 3)`` channel indices ``[ch, ch-1, ch+1]`` with edges clamped."""
    ch = np.arange(n_channels)
    return np.stack([ch, np.maximum(ch - 1, 0), np.minimum(ch + 1, n_channels - 1)], axis=1)


def cross_channel_var(gb_max_scan: np.ndarray) -> np.ndarray:
    """Population variance of the GB_max values over each channel's three-channel neighbourhood."""
    nb = np.asarray(gb_max_scan, dtype=np.float64)[neighbour_index(len(gb_max_scan))]
    return nb.var(axis=1)


def adapt_obs_noise(gb_max_window: np.ndarray, cfg: KfConfig) -> np.ndarray:
    """Adaptive observation covariance per channel.

    ``gb_max_window`` is ``(n_scans_recent, n_channels)``: the GB_max values of
    the most recent scans, newest last.  The cross-channel variance of each
    scan is averaged over the last ``r_smooth_window`` scans and floored at
    ``r_base``.  Returns ``(n_channels, 3, 3)`` diagonal matrices.
    """
    w = np.atleast_2d(np.asarray(gb_max_window, dtype=np.float64))
    if len(w) < 1:
        raise ValueError("need at least one scan of history")
    recent = w[-cfg.r_smooth_window:]
    var = np.mean([cross_channel_var(row) for row in recent], axis=0)
    r = np.maximum(var, cfg.r_base)
    return r[:, None, None] * np.eye(3)


def track_kalman(v: GprVolume, cfg: KfConfig | None = None, return_state: bool = False):
    """Run one KF per channel over the global-maximum track.

    Returns the fractional GB_ch posterior mean for every cell (scan 0 is the
    initial state, i.e. the global maximum).
    """
    cfg = cfg or KfConfig()
    if v.n_channels < 1:
        raise ValueError("volume has no channels")
    gbm = global_max_indices(v).astype(np.float64)  # (nch, nsc)
    return _run(gbm, cfg, v.n_depth, return_state)


def track_kalman_measurements(gb_max: np.ndarray, cfg: KfConfig | None = None,
                              n_depth: int | None = None, return_state: bool = False):
    """Same as :func:`track_kalman` but from a given ``(n_channels, n_scans)`` GB_max track."""
    return _run(np.asarray(gb_max, dtype=np.float64), cfg or KfConfig(), n_depth, return_state)


def _run(gbm: np.ndarray, cfg: KfConfig, n_depth, return_state):
    nch, nsc = gbm.shape
    nb = neighbour_index(nch)
    Z = gbm[nb]  # (nch, 3, nsc)
    cvar = np.var(Z, axis=1)  # (nch, nsc)
    # trailing moving average of cross-channel variance
    csum = np.cumsum(np.pad(cvar, ((0, 0), (1, 0))), axis=1)
    idx = np.arange(nsc)
    lo = np.maximum(idx + 1 - cfg.r_smooth_window, 0)
    rvar = (csum[:, idx + 1] - csum[:, lo]) / (idx + 1 - lo)
    rvar = np.maximum(rvar, cfg.r_base)

    state = initial_state(Z[:, :, 0], cfg)
    out = np.empty((nch, nsc))
    out[:, 0] = state.x[:, 0]
    eye3 = np.eye(3)
    for dt in range(1, nsc):
        state = kf_predict(state, cfg)
        state = kf_update(state, Z[:, :, dt], rvar[:, dt, None, None] * eye3)
        out[:, dt] = state.x[:, 0]
    if n_depth is not None:
        np.clip(out, 0, n_depth - 1, out=out)
    surf = GroundBounceSurface(out, n_depth)
    return (surf, state) if return_state else surf
