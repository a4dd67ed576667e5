"""Named simulator scenarios and the multi-lane ROC stress suite.

These are the fixed configurations used by the acceptance tests and the
demos; each is a pure function of its seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baseline import ConstrainedMaxConfig, track_constrained_max, track_global_max
from .core import GprVolume, GroundBounceSurface
from .evaluation import CELL_AREA_M2, Alarm, PrescreenConfig, RocCurve, prescreen, roc
from .kalman import KfConfig, track_kalman
from .pf import PfConfig, run_pf
from .simulator import Interference, Mine, SimConfig, SnowLayer, simulate, snow_over_fraction

TRACKERS = ("gm", "cm", "kf", "pf")

# Smallest sigma_v the PF will estimate; scenarios that want the simulated
# surface to match the PF motion model use it as surface_sigma.
MATCHED_SIGMA = 0.5


def run_tracker(name: str, v: GprVolume, cfg=None) -> tuple[GroundBounceSurface, dict]:
    """Dispatch to a tracker by short name; returns ``(surface, diagnostics)``."""
    if name == "gm":
        return track_global_max(v), {}
    if name == "cm":
        return track_constrained_max(v, cfg or ConstrainedMaxConfig()), {}
    if name == "kf":
        surf, state = track_kalman(v, cfg or KfConfig(), return_state=True)
        return surf, dict(state.diagnostics)
    if name == "pf":
        res = run_pf(v, cfg or PfConfig())
        return res.surface, res.diagnostics
    raise ValueError(f"unknown tracker {name!r}; choose from {', '.join(TRACKERS)}")


def noiseless(seed: int = 0, **overrides) -> SimConfig:
    """Reference-size clean volume (415 x 24 x 500) with a matched surface."""
    kw = dict(seed=seed, surface_sigma=MATCHED_SIGMA)
    kw.update(overrides)
    return SimConfig(**kw)


def snow(seed: int = 0, amplitude_ratio: float = 1.5, fraction: float = 0.3,
         amplitude_jitter: float = 0.4, noise_sigma: float = 0.05, **overrides) -> SimConfig:
    """Snow over ``fraction`` of the scans, starting after the PF training window.

    The per-cell jitter on the snow amplitude makes the global maximum
    alternate between the snow and ground interfaces.
    """
    kw = dict(seed=seed, surface_sigma=MATCHED_SIGMA, noise_sigma=noise_sigma)
    kw.update(overrides)
    cfg = SimConfig(**kw)
    cfg.snow = [snow_over_fraction(cfg.n_scans, fraction, amplitude_ratio=amplitude_ratio,
                                   amplitude_jitter=amplitude_jitter)]
    return cfg


def outlier(seed: int = 0, ch: int = 12, dt: int = 300, jump: int = 50,
            channels: tuple[int, int] | None = None, noise_sigma: float = 0.05,
            **overrides) -> SimConfig:
    """A single-scan reflector ``jump`` samples above the ground, twice as
    strong, so the global maximum jumps by ``jump`` at scan ``dt``.

    By default only channel ``ch`` is hit; ``channels`` widens it.
    """
    kw = dict(seed=seed, surface_sigma=MATCHED_SIGMA, noise_sigma=noise_sigma)
    kw.update(overrides)
    cfg = SimConfig(**kw)
    cfg.snow = [SnowLayer(jump, 2.0, (dt, dt + 1), 0.0, channels or (ch, ch + 1))]
    return cfg


@dataclass
class StressSuite:
    """Several independent lanes with snow patches, interference streaks and mines.

    The default (5 lanes of 5000 scans x 24 channels at 5 cm x 5 cm per cell)
    covers 1500 m^2 and holds 40 mines.
    """

    seed: int = 0
    n_lanes: int = 5
    n_scans: int = 5000
    n_channels: int = 24
    n_depth: int = 192
    surface_base: float = 70.0
    surface_sigma: float = MATCHED_SIGMA
    noise_sigma: float = 0.05
    mines_per_lane: int = 8
    mine_amplitude: tuple[float, float] = (0.3, 1.5)
    mine_spacing: int = 40
    snow_patches: int = 2
    snow_length: int = 100
    snow_ratio: float = 0.6
    snow_jitter: float = 0.4
    streaks: int = 3
    streak_length: int = 3
    streak_amplitude: float = 1.5
    lanes: list[SimConfig] = field(default_factory=list, init=False)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 99])
        nsc, nch = self.n_scans, self.n_channels
        for lane in range(self.n_lanes):
            slots = np.arange(100, nsc - 50, self.mine_spacing)
            dts = np.sort(rng.choice(slots, self.mines_per_lane, replace=False))
            mines = [Mine(int(rng.integers(2, nch - 2)), int(d),
                          amplitude=float(rng.uniform(*self.mine_amplitude))) for d in dts]
            snow = [SnowLayer(15, self.snow_ratio, (int(s), int(s) + self.snow_length), self.snow_jitter)
                    for s in rng.integers(100, nsc - self.snow_length, self.snow_patches)]
            itf = [Interference((int(s), int(s) + self.streak_length), self.streak_amplitude)
                   for s in rng.integers(100, nsc - 10, self.streaks)]
            self.lanes.append(SimConfig(
                n_depth=self.n_depth, n_channels=nch, n_scans=nsc, seed=self.seed * 100 + lane,
                surface_sigma=self.surface_sigma, surface_base=self.surface_base,
                noise_sigma=self.noise_sigma, snow=snow, interference=itf, mines=mines))

    @property
    def area_m2(self) -> float:
        return self.n_lanes * self.n_scans * self.n_channels * CELL_AREA_M2

    @property
    def n_mines(self) -> int:
        return sum(len(c.mines) for c in self.lanes)

    def run(self, trackers=TRACKERS, halo: int = 5, prescreen_cfg: PrescreenConfig | None = None,
            pf_cfg: PfConfig | None = None) -> dict[str, RocCurve]:
        """ROC curve per tracker, pooling alarms and mines over all lanes.

        Lanes are laid end to end down-track, so scan indices of lane ``i``
        are offset by ``i * n_scans``.
        """
        pf_cfg = pf_cfg or PfConfig(seed=self.seed)
        alarms = {t: [] for t in trackers}
        mines = []
        for i, cfg in enumerate(self.lanes):
            v, _, _ = simulate(cfg)
            off = i * self.n_scans
            for t in trackers:
                est, _ = run_tracker(t, v, pf_cfg if t == "pf" else None)
                alarms[t] += [Alarm(a.ch, a.dt + off, a.score) for a in prescreen(v, est, prescreen_cfg)]
            mines += [(m.ch, m.dt + off) for m in cfg.mines]
            del v
        return {t: roc(alarms[t], mines, halo, self.area_m2) for t in trackers}
