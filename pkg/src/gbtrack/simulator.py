"""Synthetic GPR volumes with known ground-bounce truth.

Each A-scan is the GB template placed (nearest sample) at the true surface
depth plus white Gaussian noise.  Optional stress phenomena: a snow layer
(a stronger copy of the template above the ground), broadband interference
streaks, and buried mines (hyperbolic template echoes below the ground).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .core import GprVolume, GroundBounceSurface

# Single-cycle GB wavelet, 19 samples, peak (1.0) at the centre, negative
# lobe below it.  Built as g(0, 1.5) - 0.7 g(4, 1.8) with unit-peak
# normalisation and rounded to 4 decimals.
DEFAULT_TEMPLATE = np.array([
    0.0, 0.0, 0.0, 0.0004, 0.0041, 0.0303, 0.1435, 0.4341, 0.8355, 1.0,
    0.6656, 0.0356, -0.4938, -0.7137, -0.6336, -0.401, -0.1855, -0.063, -0.0157,
])


def builtin_template(name: str = "wavelet", n_t: int = 9) -> np.ndarray:
    """Return a built-in template of length ``2*n_t + 1``.

    ``"wavelet"`` is :data:`DEFAULT_TEMPLATE` (zero-padded or cropped about its
    centre); ``"spike"`` is a unit impulse at the centre.
    """
    length = 2 * n_t + 1
    if name == "spike":
        t = np.zeros(length)
        t[n_t] = 1.0
        return t
    if name != "wavelet":
        raise ValueError(f"unknown template {name!r}")
    half = len(DEFAULT_TEMPLATE) // 2
    t = np.zeros(length)
    for j in range(-min(n_t, half), min(n_t, half) + 1):
        t[n_t + j] = DEFAULT_TEMPLATE[half + j]
    return t


@dataclass
class SnowLayer:
    """A stronger template copy ``offset_samples`` above the ground.

    ``amplitude_jitter`` is the log-std of an i.i.d. per-cell multiplicative
    factor on ``amplitude_ratio`` (uneven snow reflectivity); 0 gives a
    uniform layer.
    """

    offset_samples: int = 15
    amplitude_ratio: float = 1.5
    scan_range: tuple[int, int] = (0, 0)  # 0-based, half-open
    amplitude_jitter: float = 0.0
    channels: tuple[int, int] | None = None  # None = all channels


@dataclass
class Interference:
    scan_range: tuple[int, int] = (0, 1)
    amplitude: float = 1.5
    extent: tuple[int, int] | None = None  # channel range, None = all channels


@dataclass
class Mine:
    ch: int
    dt: int
    depth_offset: float = 40.0
    amplitude: float = 0.35
    hyperbola_spread: float = 0.15
    footprint: float = 2.5  # Gaussian taper width in cells


@dataclass
class SimConfig:
    n_depth: int = 415
    n_channels: int = 24
    n_scans: int = 500
    seed: int = 0
    surface_sigma: float = 1.0
    surface_base: float = 120.0
    surface_reversion: float = 200.0
    template: str = "wavelet"
    n_t: int = 9
    noise_sigma: float = 0.0
    snow: list[SnowLayer] = field(default_factory=list)
    interference: list[Interference] = field(default_factory=list)
    mines: list[Mine] = field(default_factory=list)

    def __post_init__(self):
        self.snow = [s if isinstance(s, SnowLayer) else SnowLayer(**s) for s in self.snow]
        self.interference = [i if isinstance(i, Interference) else Interference(**i)
                             for i in self.interference]
        self.mines = [m if isinstance(m, Mine) else Mine(**m) for m in self.mines]
        self.validate()

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.n_depth, self.n_channels, self.n_scans

    def validate(self) -> None:
        if min(self.dims) < 1:
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if self.surface_sigma < 0 or not np.isfinite(self.surface_sigma):
            raise ValueError(f"surface_sigma must be >= 0, got {self.surface_sigma}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_t < 0:
            raise ValueError("n_t must be >= 0")
        lo, hi = self.n_t, self.n_depth - 1 - self.n_t
        spread = 5 * self.surface_sigma
        if self.surface_base - spread < lo or self.surface_base + spread > hi:
            raise ValueError(
                f"surface_base {self.surface_base} +/- 5*sigma leaves [{lo}, {hi}]"
            )
        for s in self.snow:
            if s.amplitude_ratio <= 0:
                raise ValueError("snow amplitude_ratio must be > 0")
            if s.offset_samples < 1:
                raise ValueError("snow offset_samples must be >= 1")
            if s.amplitude_jitter < 0:
                raise ValueError("snow amplitude_jitter must be >= 0")
        for m in self.mines:
            if not (0 <= m.ch < self.n_channels and 0 <= m.dt < self.n_scans):
                raise ValueError(f"mine at ({m.ch}, {m.dt}) outside the volume")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SurfaceResult:
    surface: GroundBounceSurface
    n_clamped: int


def _smooth_channels(profile: np.ndarray) -> np.ndarray:
    """One pass of a 3-tap mean across channels (edge-replicated)."""
    if len(profile) < 3:
        return profile.copy()
    padded = np.concatenate([profile[:1], profile, profile[-1:]])
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def generate_surface(cfg: SimConfig) -> SurfaceResult:
    """Continuous-valued GB surface.

    Down-track, all channels share increments drawn i.i.d. Gaussian(0,
    surface_sigma^2); the walk is pulled back to ``surface_base`` with time
    constant ``surface_reversion`` scans (``0`` disables the pull).  Across
    channels a fixed profile is added: a random walk with increments of
    variance ``3 * surface_sigma^2`` passed once through a 3-tap mean, which
    leaves adjacent-channel differences with variance ``surface_sigma^2``.
    Values leaving ``[n_t, n_depth - 1 - n_t]`` are clamped and counted.
    """
    rng = np.random.default_rng(cfg.seed)
    nch, nsc = cfg.n_channels, cfg.n_scans
    sigma = cfg.surface_sigma

    steps = rng.normal(0.0, sigma, nsc)
    steps[0] = 0.0
    if cfg.surface_reversion > 0:
        phi = 1.0 - 1.0 / cfg.surface_reversion
        walk = lfilter([1.0], [1.0, -phi], steps)
    else:
        walk = np.cumsum(steps)

    profile = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, sigma * np.sqrt(3.0), nch - 1))])
    profile = _smooth_channels(profile)
    profile -= profile.mean()

    gb = cfg.surface_base + profile[:, None] + walk[None, :]
    lo, hi = cfg.n_t, cfg.n_depth - 1 - cfg.n_t
    clamped = (gb < lo) | (gb > hi)
    np.clip(gb, lo, hi, out=gb)
    return SurfaceResult(GroundBounceSurface(gb), int(clamped.sum()))


def _place(data: np.ndarray, template: np.ndarray, centres: np.ndarray,
           scale=1.0, mask: np.ndarray | None = None) -> None:
    """Add ``scale * template`` centred at ``centres[dt, ch]`` into ``data[dt, ch]``.

    ``centres`` and ``scale`` broadcast against ``data.shape[:2]``; samples
    falling outside the depth axis are dropped.
    """
    nd = data.shape[2]
    n_t = len(template) // 2
    centres = np.broadcast_to(centres, data.shape[:2])
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), data.shape[:2])
    keep = np.ones(data.shape[:2], bool) if mask is None else np.broadcast_to(mask, data.shape[:2])
    for j in range(-n_t, n_t + 1):
        if template[n_t + j] == 0.0:
            continue
        rows = centres + j
        ok = keep & (rows >= 0) & (rows < nd)
        si, ci = np.nonzero(ok)
        data[si, ci, rows[si, ci]] += (template[n_t + j] * scale[si, ci]).astype(data.dtype)


def synthesize_volume(cfg: SimConfig, truth: GroundBounceSurface) -> GprVolume:
    """Render the forward model for ``truth`` and add the configured phenomena."""
    nd, nch, nsc = cfg.dims
    if truth.shape != (nch, nsc):
        raise ValueError(f"truth shape {truth.shape} does not match config ({nch}, {nsc})")
    template = builtin_template(cfg.template, cfg.n_t)
    rng = np.random.default_rng([cfg.seed, 1])
    centres = np.rint(truth.gb).astype(np.int64).T  # (nsc, nch)
    data = np.zeros((nsc, nch, nd), dtype=np.float32)

    _place(data, template, centres)

    scans = np.arange(nsc)[:, None]
    chans = np.arange(nch)[None, :]
    for snow in cfg.snow:
        a, b = snow.scan_range
        ch_a, ch_b = snow.channels if snow.channels is not None else (0, nch)
        mask = (scans >= a) & (scans < b) & (chans >= ch_a) & (chans < ch_b)
        amp = snow.amplitude_ratio
        if snow.amplitude_jitter > 0:
            amp = amp * np.exp(snow.amplitude_jitter * rng.standard_normal((nsc, nch)))
        _place(data, template, centres - snow.offset_samples, amp, mask)

    for mine in cfg.mines:
        _add_mine(data, template, centres, mine)

    for itf in cfg.interference:
        a, b = max(itf.scan_range[0], 0), min(itf.scan_range[1], nsc)
        ch_a, ch_b = itf.extent if itf.extent is not None else (0, nch)
        ch_a, ch_b = max(ch_a, 0), min(ch_b, nch)
        if a < b and ch_a < ch_b:
            streak = rng.standard_normal((b - a, ch_b - ch_a, nd), dtype=np.float32)
            data[a:b, ch_a:ch_b, :] += np.float32(itf.amplitude) * streak

    if cfg.noise_sigma > 0:
        chunk = max(1, 2_000_000 // (nch * nd))
        for a in range(0, nsc, chunk):
            block = data[a:a + chunk]
            block += np.float32(cfg.noise_sigma) * rng.standard_normal(block.shape, dtype=np.float32)
    return GprVolume(data)


def _add_mine(data: np.ndarray, template: np.ndarray, centres: np.ndarray, mine: Mine) -> None:
    """Hyperbolic echo: depth grows as ``spread * ddt^2`` away from the apex,
    amplitude tapers as a Gaussian of the cell distance and stops below 10%."""
    nsc, nch, _ = data.shape
    w = mine.footprint
    reach = int(np.ceil(w * np.sqrt(2 * np.log(10.0))))
    for ddt in range(-reach, reach + 1):
        dt = mine.dt + ddt
        if not 0 <= dt < nsc:
            continue
        for dch in range(-reach, reach + 1):
            ch = mine.ch + dch
            if not 0 <= ch < nch:
                continue
            taper = np.exp(-0.5 * (ddt**2 + dch**2) / w**2)
            if taper < 0.1:
                continue
            depth = centres[dt, ch] + mine.depth_offset + mine.hyperbola_spread * ddt**2
            _place(data[dt:dt + 1, ch:ch + 1], template, np.array([[int(np.floor(depth + 0.5))]]),
                   mine.amplitude * taper)


def simulate(cfg: SimConfig) -> tuple[GprVolume, GroundBounceSurface, SurfaceResult]:
    """Generate surface and volume.  Returns ``(volume, rounded_truth, surface_result)``."""
    surf = generate_surface(cfg)
    vol = synthesize_volume(cfg, surf.surface)
    truth = GroundBounceSurface(np.rint(surf.surface.gb), cfg.n_depth)
    return vol, truth, surf


def snow_over_fraction(n_scans: int, fraction: float, offset_samples: int = 15,
                       amplitude_ratio: float = 1.5, start_fraction: float = 0.4,
                       amplitude_jitter: float = 0.0) -> SnowLayer:
    """One contiguous snow patch covering ``fraction`` of the scans."""
    a = int(round(start_fraction * n_scans))
    b = min(n_scans, a + int(round(fraction * n_scans)))
    return SnowLayer(offset_samples, amplitude_ratio, (a, b), amplitude_jitter)
