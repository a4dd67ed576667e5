"""Particle-filter GB tracker with an adaptive template.

The state of each cell is the scalar GB depth.  Per cell, in scan-major /
channel-minor order:

1. prior: propagate the posterior particles of the previous scan (and of the
   previous channel in the same scan, when there is one) through a Gaussian
   random walk, pool them and downsample to ``n_particles``;
2. weight each particle by the Gaussian likelihood of the min-max normalised
   A-scan window around it against the normalised template;
3. MMSE estimate, then snap to the largest sample within one template length;
4. systematic resampling;
5. if the refined estimate agrees with the global maximum, fold the window
   around it into the running-mean template.

The first ``n_train`` scans only output the global maximum; they build the
initial template and calibrate ``sigma_n`` and ``sigma_v``.

The per-cell numerics are numba kernels shared by the public single-step
functions below and by the per-scan loop in :func:`run_pf`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .baseline import global_max_indices
from .core import AScanView, GprVolume, GroundBounceSurface

LOG_TINY = math.log(np.finfo(np.float64).tiny)
SIGMA_N_FLOOR = 1e-6
SIGMA_V_CLIP = (0.5, 3.0)


@dataclass
class PfConfig:
    n_particles: int = 50
    n_t: int = 9
    sigma_v: float | None = None  # None: estimate from the training scans
    sigma_n: float | None = None  # None: calibrate on the training scans
    n_train: int = 20
    agree_tol: float = 2.0
    s_target: float = -0.3
    w_target: float = 0.2
    seed: int = 0
    refine: bool = True
    adapt_template: bool = True
    recalibrate_sigma_n: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_t < 1:
            raise ValueError("n_t must be >= 1")
        if self.n_train < 1:
            raise ValueError("n_train must be >= 1")
        if self.agree_tol < 0:
            raise ValueError("agree_tol must be >= 0")
        if self.s_target >= 0:
            raise ValueError("s_target must be negative")
        for name in ("sigma_v", "sigma_n"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ParticleSet:
    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.states.shape != self.weights.shape or self.states.ndim != 1:
            raise ValueError("states and weights must be 1D arrays of equal length")

    def __len__(self):
        return len(self.states)

    @classmethod
    def uniform(cls, states) -> "ParticleSet":
        states = np.asarray(states, dtype=np.float64)
        return cls(states, np.full(len(states), 1.0 / len(states)))


@dataclass
class GbTemplate:
    t: np.ndarray
    alpha_conf: float = 0.0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        if self.t.ndim != 1 or len(self.t) % 2 == 0:
            raise ValueError("template length must be odd")
        if self.alpha_conf < 0:
            raise ValueError("alpha_conf must be >= 0")

    @property
    def n_t(self) -> int:
        return len(self.t) // 2

    def normalized(self) -> np.ndarray:
        return _minmax(self.t)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _minmax(a):
    lo = a.min()
    hi = a.max()
    out = np.zeros(a.shape[0])
    if hi > lo:
        for i in range(a.shape[0]):
            out[i] = (a[i] - lo) / (hi - lo)
    return out


@numba.njit(cache=True)
def _clamp(i, n):
    return 0 if i < 0 else (n - 1 if i >= n else i)


@numba.njit(cache=True)
def _window(z, centre, n_t):
    """Samples ``centre - n_t .. centre + n_t`` with edge extension."""
    nd = z.shape[0]
    out = np.empty(2 * n_t + 1)
    for j in range(2 * n_t + 1):
        out[j] = z[_clamp(centre - n_t + j, nd)]
    return out


@numba.njit(cache=True)
def _residual(z, centre, tpl_norm):
    """Squared distance between the normalised window at ``centre`` and the
    normalised template.  A flat window normalises to zeros."""
    n_t = tpl_norm.shape[0] // 2
    nd = z.shape[0]
    lo = np.inf
    hi = -np.inf
    for j in range(-n_t, n_t + 1):
        v = z[_clamp(centre + j, nd)]
        if v < lo:
            lo = v
        if v > hi:
            hi = v
    span = hi - lo
    r = 0.0
    for j in range(-n_t, n_t + 1):
        if span > 0:
            w = (z[_clamp(centre + j, nd)] - lo) / span
        else:
            w = 0.0
        d = w - tpl_norm[j + n_t]
        r += d * d
    return r


@numba.njit(cache=True)
def _round_index(x, nd):
    return _clamp(int(math.floor(x + 0.5)), nd)


@numba.njit(cache=True)
def _similarities(z, states, tpl_norm, sigma_n):
    """``s_i = -residual(round(x_i)) / (2 sigma_n^2)`` for every particle."""
    nd = z.shape[0]
    n = states.shape[0]
    s = np.empty(n)
    inv = 1.0 / (2.0 * sigma_n * sigma_n)
    for i in range(n):
        s[i] = -_residual(z, _round_index(states[i], nd), tpl_norm) * inv
    return s


@numba.njit(cache=True)
def _reweight(weights, s, sigma_n):
    """Multiply weights by ``exp(s_i) / (sqrt(2 pi) sigma_n)`` and normalise.

    Works in the log domain.  If every product would underflow to zero in
    double precision, returns uniform weights and ``True``.
    """
    n = weights.shape[0]
    log_norm = -math.log(math.sqrt(2.0 * math.pi) * sigma_n)
    logw = np.empty(n)
    best = -np.inf
    for i in range(n):
        if weights[i] > 0:
            logw[i] = math.log(weights[i]) + s[i] + log_norm
        else:
            logw[i] = -np.inf
        if logw[i] > best:
            best = logw[i]
    out = np.empty(n)
    if best < LOG_TINY:
        out[:] = 1.0 / n
        return out, True
    total = 0.0
    for i in range(n):
        out[i] = math.exp(logw[i] - best)
        total += out[i]
    for i in range(n):
        out[i] /= total
    return out, False


@numba.njit(cache=True)
def _systematic(weights, u, n_out):
    """Indices drawn by systematic resampling with offset ``u`` in [0, 1)."""
    n = weights.shape[0]
    idx = np.empty(n_out, np.int64)
    total = weights.sum()
    cum = 0.0
    j = 0
    cum = weights[0] / total
    for k in range(n_out):
        pos = (k + u) / n_out
        while pos > cum and j < n - 1:
            j += 1
            cum += weights[j] / total
        idx[k] = j
    return idx


@numba.njit(cache=True)
def _refine(z, x_hat, n_t):
    nd = z.shape[0]
    c = _round_index(x_hat, nd)
    lo = max(c - n_t, 0)
    hi = min(c + n_t, nd - 1)
    best = lo
    for i in range(lo + 1, hi + 1):
        if z[i] > z[best]:
            best = i
    return best


@numba.njit(cache=True)
def _propagate(states, noise, sigma_v, nd):
    out = np.empty(states.shape[0])
    clamps = 0
    for i in range(states.shape[0]):
        x = states[i] + sigma_v * noise[i]
        if x < 0.0:
            x = 0.0
            clamps += 1
        elif x > nd - 1:
            x = nd - 1.0
            clamps += 1
        out[i] = x
    return out, clamps


@numba.njit(cache=True)
def _pf_scan(raw, dt, prev_states, two_way, noise, u, tpl, alpha, tpl_norm,
             sigma_v, sigma_n, gbm, agree_tol, refine, adapt, out_states, out_mmse,
             out_refined, counters, wstats):
    """Process every channel of scan ``dt``.

    ``prev_states`` (nch, Np) holds the resampled posterior of scan ``dt-1``;
    ``out_states`` receives the resampled posterior of this scan.  ``tpl``,
    ``alpha`` and ``tpl_norm`` are updated in place.  ``counters`` =
    [likelihood underflows, state clamps, template updates]; ``wstats`` =
    [largest posterior weight seen, running sum of per-cell largest weights].
    """
    nch = raw.shape[1]
    nd = raw.shape[2]
    n_p = prev_states.shape[1]
    n_t = tpl.shape[0] // 2
    for ch in range(nch):
        z = raw[dt, ch].astype(np.float64)
        a, c1 = _propagate(prev_states[ch], noise[ch, 0], sigma_v, nd)
        counters[1] += c1
        if two_way and ch > 0:
            b, c2 = _propagate(out_states[ch - 1], noise[ch, 1], sigma_v, nd)
            counters[1] += c2
            pooled = np.concatenate((a, b))
            pw = np.full(2 * n_p, 1.0 / (2 * n_p))
            prior = pooled[_systematic(pw, u[ch, 0], n_p)]
        else:
            prior = a
        w0 = np.full(n_p, 1.0 / n_p)
        s = _similarities(z, prior, tpl_norm, sigma_n)
        w, under = _reweight(w0, s, sigma_n)
        if under:
            counters[0] += 1
        wm = w.max()
        wstats[0] = max(wstats[0], wm)
        wstats[1] += wm
        x_hat = 0.0
        for i in range(n_p):
            x_hat += w[i] * prior[i]
        out_mmse[ch] = x_hat
        if refine:
            r = _refine(z, x_hat, n_t)
        else:
            r = _round_index(x_hat, nd)
        out_refined[ch] = r
        out_states[ch] = prior[_systematic(w, u[ch, 1], n_p)]
        if adapt and abs(r - gbm[ch]) <= agree_tol:
            tc = _window(z, r, n_t)
            a0 = alpha[0]
            for j in range(tpl.shape[0]):
                tpl[j] = (a0 * tpl[j] + tc[j]) / (a0 + 1.0)
            alpha[0] = a0 + 1.0
            tpl_norm[:] = _minmax(tpl)
            counters[2] += 1


# ---------------------------------------------------------------- public steps


def _z(z) -> np.ndarray:
    if isinstance(z, AScanView):
        z = z.z
    return np.ascontiguousarray(z, dtype=np.float64)


def extract_template(z, gb_hat: float, n_t: int) -> np.ndarray:
    """The ``2*n_t + 1`` samples of ``z`` centred at ``round(gb_hat)``, edge-extended."""
    z = _z(z)
    c = int(np.floor(gb_hat + 0.5))
    if c + n_t < 0 or c - n_t > len(z) - 1:
        raise IndexError(f"template window around {gb_hat} lies outside the A-scan")
    return _window(z, c, n_t)


def update_template(tpl: GbTemplate, t_c) -> GbTemplate:
    """Running mean: ``(alpha * t + t_c) / (alpha + 1)``, alpha incremented."""
    t_c = np.asarray(t_c, dtype=np.float64)
    if t_c.shape != tpl.t.shape:
        raise ValueError(f"template length mismatch: {t_c.shape} vs {tpl.t.shape}")
    a = tpl.alpha_conf
    return GbTemplate((a * tpl.t + t_c) / (a + 1.0), a + 1.0)


def similarity(z, x_i: float, tpl: GbTemplate, sigma_n: float) -> float:
    """The exponent ``s_i`` of the likelihood for one particle."""
    return float(_similarities(_z(z), np.array([float(x_i)]), tpl.normalized(), sigma_n)[0])


def likelihood(z, x_i: float, tpl: GbTemplate, sigma_n: float) -> float:
    """Gaussian likelihood ``exp(s_i) / (sqrt(2 pi) sigma_n)``."""
    return math.exp(similarity(z, x_i, tpl, sigma_n)) / (math.sqrt(2 * math.pi) * sigma_n)


def residuals_at(v: GprVolume, cells: np.ndarray, tpl: GbTemplate) -> np.ndarray:
    """Template residual at ``round(gb[ch, dt])`` for each row ``(ch, dt, gb)`` of ``cells``."""
    tn = tpl.normalized()
    out = np.empty(len(cells))
    for k, (ch, dt, gb) in enumerate(cells):
        z = v.raw[int(dt), int(ch)].astype(np.float64)
        out[k] = _residual(z, int(np.floor(gb + 0.5)), tn)
    return out


def calibrate_sigma_n(v: GprVolume, gb_ref: np.ndarray, tpl: GbTemplate,
                      cfg: PfConfig, scans: range | None = None) -> float:
    """Choose ``sigma_n`` so the best "good particle" has ``s = s_target``.

    Good particles sit at ``gb_ref`` (``(n_channels, n_scans)``, normally the
    global maximum) on the scans in ``scans`` (default: the training
    scans).  ``sigma_n = sqrt(min_residual / (2 |s_target|))``.
    """
    scans = scans if scans is not None else range(min(cfg.n_train, v.n_scans))
    cells = np.array([(ch, dt, gb_ref[ch, dt]) for dt in scans for ch in range(v.n_channels)],
                     dtype=np.float64)
    r = residuals_at(v, cells, tpl)
    return _sigma_from_residual(float(r.min()), cfg.s_target)


def _sigma_from_residual(min_residual: float, s_target: float) -> float:
    if min_residual <= 0:
        return SIGMA_N_FLOOR
    return max(math.sqrt(min_residual / (2.0 * abs(s_target))), SIGMA_N_FLOOR)


def propose_two_way(set_prev_scan: ParticleSet, set_prev_ch: ParticleSet | None,
                    sigma_v: float, rng: np.random.Generator,
                    n_depth: int | None = None) -> ParticleSet:
    """Prior for a cell from its previous-scan and previous-channel posteriors.

    Both sets go through the Gaussian random walk; with two neighbours the
    ``2 N_p`` pooled particles are downsampled back to ``N_p`` in proportion
    to their weights.  Output weights are uniform.
    """
    n_p = len(set_prev_scan)
    nd = n_depth if n_depth is not None else np.inf
    a = set_prev_scan.states + sigma_v * rng.standard_normal(n_p)
    if set_prev_ch is None:
        return ParticleSet.uniform(np.clip(a, 0, nd - 1))
    b = set_prev_ch.states + sigma_v * rng.standard_normal(len(set_prev_ch))
    pooled = np.clip(np.concatenate([a, b]), 0, nd - 1)
    pw = np.concatenate([set_prev_scan.weights, set_prev_ch.weights])
    idx = _systematic(pw / pw.sum(), rng.random(), n_p)
    return ParticleSet.uniform(pooled[idx])


def update_weights(prior: ParticleSet, z, tpl: GbTemplate, sigma_n: float,
                   diagnostics: dict | None = None) -> ParticleSet:
    """``w_i <- w_i * p(z | x_i)``, renormalised.  Falls back to uniform weights
    (and bumps ``diagnostics["underflows"]``) when every product underflows."""
    s = _similarities(_z(z), prior.states, tpl.normalized(), sigma_n)
    w, under = _reweight(prior.weights, s, sigma_n)
    if under and diagnostics is not None:
        diagnostics["underflows"] = diagnostics.get("underflows", 0) + 1
    return ParticleSet(prior.states.copy(), w)


def resample(pset: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Systematic resampling; all output weights are exactly ``1/N_p``."""
    idx = _systematic(pset.weights, rng.random(), len(pset))
    return ParticleSet.uniform(pset.states[idx])


def estimate_state(pset: ParticleSet) -> float:
    """MMSE estimate ``sum w_i x_i``, clipped to the particle hull against rounding."""
    x = float(np.dot(pset.weights, pset.states) / pset.weights.sum())
    return min(max(x, float(pset.states.min())), float(pset.states.max()))


def refine_peak(z, x_hat: float, n_t: int) -> int:
    """Index of the largest sample within ``n_t`` of ``round(x_hat)`` (first on ties)."""
    return int(_refine(_z(z), float(x_hat), n_t))


# ---------------------------------------------------------------- tracker


@dataclass
class TrainingResult:
    template: GbTemplate
    sigma_n: float
    sigma_v: float
    particles: np.ndarray  # (n_channels, n_particles), uniform weights
    surface: GroundBounceSurface  # scans 0..n_train-1
    gb_max: np.ndarray


@dataclass
class PfResult:
    surface: GroundBounceSurface
    mmse: GroundBounceSurface
    template: GbTemplate
    sigma_n: float
    sigma_v: float
    n_train: int
    diagnostics: dict = field(default_factory=dict)


def estimate_sigma_v(gb_max: np.ndarray, n_train: int) -> float:
    """Sample STD of the global-maximum first differences over the training
    scans, clipped to ``SIGMA_V_CLIP``."""
    d = np.diff(gb_max[:, :n_train], axis=1)
    s = float(d.std(ddof=1)) if d.size > 1 else 0.0
    return float(np.clip(s, *SIGMA_V_CLIP))


def train(v: GprVolume, cfg: PfConfig, rng: np.random.Generator | None = None,
          gb_max: np.ndarray | None = None, template: GbTemplate | None = None) -> TrainingResult:
    """Training stage on scans ``0 .. n_train-1``.

    Output is the global maximum; the template is the mean of every window
    extracted there (``alpha_conf = n_channels * n_train``); ``sigma_v`` and
    ``sigma_n`` come from :func:`estimate_sigma_v` and
    :func:`calibrate_sigma_n` unless fixed in ``cfg``.  ``template`` overrides
    the learned template.
    """
    if cfg.n_train >= v.n_scans:
        raise ValueError(f"n_train={cfg.n_train} must be smaller than n_scans={v.n_scans}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    gbm = global_max_indices(v) if gb_max is None else np.asarray(gb_max)
    nch, n = v.n_channels, cfg.n_train
    if template is None:
        acc = np.zeros(2 * cfg.n_t + 1)
        for dt in range(n):
            for ch in range(nch):
                acc += _window(v.raw[dt, ch].astype(np.float64), int(gbm[ch, dt]), cfg.n_t)
        template = GbTemplate(acc / (nch * n), float(nch * n))
    sigma_v = cfg.sigma_v if cfg.sigma_v is not None else estimate_sigma_v(gbm, n)
    sigma_n = cfg.sigma_n if cfg.sigma_n is not None else calibrate_sigma_n(v, gbm, template, cfg)
    init = gbm[:, n - 1][:, None] + sigma_v * rng.standard_normal((nch, cfg.n_particles))
    init = np.clip(init, 0, v.n_depth - 1)
    surface = GroundBounceSurface(gbm[:, :n].astype(np.float64), v.n_depth)
    return TrainingResult(template, sigma_n, sigma_v, init, surface, gbm)


def run_pf(v: GprVolume, cfg: PfConfig | None = None, template: GbTemplate | None = None) -> PfResult:
    """Full particle-filter run; deterministic given ``cfg.seed``."""
    cfg = cfg or PfConfig()
    rng = np.random.default_rng(cfg.seed)
    tr = train(v, cfg, rng, template=template)
    nch, nsc, nd = v.n_channels, v.n_scans, v.n_depth
    n_p, n = cfg.n_particles, cfg.n_train
    gbm = tr.gb_max.astype(np.float64)

    tpl = tr.template.t.copy()
    alpha = np.array([tr.template.alpha_conf], dtype=np.float64)
    tpl_norm = _minmax(tpl)
    sigma_n = tr.sigma_n

    refined = np.empty((nch, nsc))
    mmse = np.empty((nch, nsc))
    refined[:, :n] = tr.surface.gb
    mmse[:, :n] = tr.surface.gb
    states = tr.particles.copy()
    nxt = np.empty_like(states)
    counters = np.zeros(3, np.int64)
    wstats = np.zeros(2)
    recalibrations = 0
    raw = v.raw
    for dt in range(n, nsc):
        noise = rng.standard_normal((nch, 2, n_p))
        u = rng.random((nch, 2))
        _pf_scan(raw, dt, states, dt > n, noise, u, tpl, alpha, tpl_norm,
                 tr.sigma_v, sigma_n, gbm[:, dt], cfg.agree_tol, cfg.refine,
                 cfg.adapt_template, nxt, mmse[:, dt], refined[:, dt], counters, wstats)
        states, nxt = nxt, states
        if cfg.recalibrate_sigma_n:
            good = np.nonzero(np.abs(refined[:, dt] - gbm[:, dt]) <= cfg.agree_tol)[0]
            if len(good):
                r = min(_residual(raw[dt, ch].astype(np.float64), int(gbm[ch, dt]), tpl_norm)
                        for ch in good)
                sigma_n = _sigma_from_residual(r, cfg.s_target)
                recalibrations += 1

    diagnostics = {
        "likelihood_underflows": int(counters[0]),
        "state_clamps": int(counters[1]),
        "template_updates": int(counters[2]),
        "template_confidence": float(alpha[0]),
        "sigma_n": float(sigma_n),
        "sigma_n_trained": float(tr.sigma_n),
        "sigma_v": float(tr.sigma_v),
        "sigma_n_recalibrations": recalibrations,
        "max_weight": float(wstats[0]),
        "mean_max_weight": float(wstats[1] / max(nch * (nsc - n), 1)),
    }
    return PfResult(
        surface=GroundBounceSurface(refined, nd),
        mmse=GroundBounceSurface(np.clip(mmse, 0, nd - 1), nd),
        template=GbTemplate(tpl, float(alpha[0])),
        sigma_n=float(sigma_n),
        sigma_v=float(tr.sigma_v),
        n_train=n,
        diagnostics=diagnostics,
    )


def track_pf(v: GprVolume, cfg: PfConfig | None = None) -> GroundBounceSurface:
    return run_pf(v, cfg).surface
