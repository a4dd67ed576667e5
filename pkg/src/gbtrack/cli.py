"""``gbtrack`` command line: simulate, track, eval, roc, version.

Every command that writes files writes them into ``--out DIR`` together with
``manifest.json``.  The manifest's ``config`` block is the fully resolved
configuration, so ``gbtrack CMD --config DIR/manifest.json --out OTHER``
reproduces the outputs byte for byte.

Options resolve in three layers: built-in defaults, then ``--config`` (a JSON
object, or a manifest whose ``config`` key holds one), then explicit flags.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 unreadable or
malformed input / unwritable output, 3 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__
from .baseline import ConstrainedMaxConfig
from .core import FormatError, load_truth, load_volume, save_truth, save_volume
from .evaluation import CELL_AREA_M2, PrescreenConfig, bias_variance, prescreen, roc
from .kalman import KfConfig
from .pf import PfConfig
from .scenarios import TRACKERS, run_tracker
from .simulator import Interference, Mine, SimConfig, simulate, snow_over_fraction

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3

TRACKER_CONFIGS = {"cm": ConstrainedMaxConfig, "kf": KfConfig, "pf": PfConfig}


class UsageError(Exception):
    """Bad flags or configuration; exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    if "config" in obj and "command" in obj:  # a manifest
        obj = obj["config"]
    return dict(obj)


def _explicit(args, names) -> dict:
    """Flags the user actually passed (unset flags default to SUPPRESS)."""
    return {n: getattr(args, n) for n in names if hasattr(args, n)}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, command: str, config: dict, inputs: list, outputs: list, t0: float) -> None:
    manifest = {
        "tool": "gbtrack",
        "version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "seed": config.get("seed"),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
        "duration_s": round(time.perf_counter() - t0, 6),
    }
    _write_json(out / "manifest.json", manifest)
    for p in outputs:
        print(p)


def _dataclass_config(cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown {cls.__name__} option(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _inputs(args, config: dict, key: str, n: int | None = None) -> list[str]:
    given = list(getattr(args, key, None) or [])
    paths = given or list(config.get(key) or [])
    if not paths:
        raise UsageError(f"no {key} given (positional arguments or '{key}' in --config)")
    if n is not None and len(paths) != n:
        raise UsageError(f"expected {n} {key}, got {len(paths)}")
    return [str(Path(p).resolve()) for p in paths]


# ---------------------------------------------------------------- simulate


def _parse_dims(text: str) -> tuple[int, int, int]:
    try:
        nd, nch, nsc = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--dims expects NDEPTHxNCHANNELSxNSCANS, got {text!r}") from None
    return nd, nch, nsc


def _parse_fields(text: str, flag: str, n_min: int, n_max: int) -> list[float]:
    parts = text.split(":")
    if not n_min <= len(parts) <= n_max:
        raise UsageError(f"{flag}: cannot parse {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"{flag}: non-numeric field in {text!r}") from None


def _sim_config(args) -> SimConfig:
    values = {f.name: getattr(SimConfig(), f.name) for f in fields(SimConfig)}
    values.update(_read_config(args.config))
    flags = _explicit(args, ["seed", "surface_sigma", "surface_base", "surface_reversion",
                             "template", "n_t", "noise_sigma"])
    values.update(flags)
    if hasattr(args, "dims"):
        values["n_depth"], values["n_channels"], values["n_scans"] = _parse_dims(args.dims)
    nsc = values["n_scans"]
    if hasattr(args, "snow"):
        pct, ratio = _parse_fields(args.snow, "--snow", 2, 2)
        if not 0 < pct <= 100:
            raise UsageError(f"--snow percentage must be in (0, 100], got {pct:g}")
        values["snow"] = [asdict(snow_over_fraction(
            nsc, pct / 100.0, offset_samples=getattr(args, "snow_offset", 15), amplitude_ratio=ratio,
            start_fraction=getattr(args, "snow_start", 0.4),
            amplitude_jitter=getattr(args, "snow_jitter", 0.0)))]
    elif any(hasattr(args, k) for k in ("snow_offset", "snow_jitter", "snow_start")):
        raise UsageError("--snow-offset/--snow-jitter/--snow-start need --snow PCT:RATIO")
    if hasattr(args, "interference"):
        items = []
        for text in args.interference:
            f = _parse_fields(text, "--interference", 2, 3)
            a, b = int(f[0]), int(f[1])
            if a < 1 or b < a:
                raise UsageError(f"--interference scans must satisfy 1 <= START <= END, got {text!r}")
            items.append(asdict(Interference((a - 1, b), *(f[2:]))))
        values["interference"] = items
    if hasattr(args, "mine"):
        items = []
        for text in args.mine:
            f = _parse_fields(text, "--mine", 2, 3)
            kw = {"amplitude": f[2]} if len(f) == 3 else {}
            items.append(asdict(Mine(int(f[0]) - 1, int(f[1]) - 1, **kw)))
        values["mines"] = items
    cfg = _dataclass_config(SimConfig, values)
    return cfg


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _sim_config(args)
    out = _out_dir(args)
    prefix = args.prefix
    vol, truth, surf = simulate(cfg)
    paths = [out / f"{prefix}.gprv", out / f"{prefix}_truth.csv"]
    save_volume(vol, paths[0])
    save_truth(truth, paths[1])
    if cfg.mines:
        paths.append(out / f"{prefix}_mines.csv")
        save_mines(cfg.mines, paths[-1])
    if surf.n_clamped:
        print(f"warning: {surf.n_clamped} surface cells clamped to the depth range", file=sys.stderr)
    _finish(out, "simulate", cfg.to_dict(), [], paths, t0)
    return EXIT_OK


def save_mines(mines, path) -> None:
    """``ch,dt`` CSV, 1-based."""
    lines = ["ch,dt\n"] + [f"{m.ch + 1},{m.dt + 1}\n" for m in mines]
    Path(path).write_text("".join(lines))


def load_mines(path) -> list[tuple[int, int]]:
    """Read a ``ch,dt`` CSV (1-based) into 0-based ``(ch, dt)`` pairs."""
    rows = Path(path).read_text().splitlines()
    if not rows or [h.strip() for h in rows[0].split(",")[:2]] != ["ch", "dt"]:
        raise FormatError(f"{path}: expected header 'ch,dt'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        try:
            ch, dt = (int(x) for x in row.split(",")[:2])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: cannot parse {row!r}") from None
        out.append((ch - 1, dt - 1))
    return out


# ---------------------------------------------------------------- track

_TRACKER_FLAGS = {
    "cm": ["w_max", "alpha_cm", "w_min"],
    "kf": ["q_scale", "r_base", "r_smooth_window", "p0_scale"],
    "pf": ["n_particles", "n_t", "sigma_v", "sigma_n", "n_train", "agree_tol", "s_target",
           "w_target", "seed", "refine", "adapt_template", "recalibrate_sigma_n"],
}


def _track_config(args) -> dict:
    config = _read_config(args.config)
    tracker = getattr(args, "tracker", None) or config.get("tracker")
    if tracker is None:
        raise UsageError("--tracker is required (or 'tracker' in --config)")
    if tracker not in TRACKERS:
        raise UsageError(f"unknown tracker {tracker!r}; choose from {', '.join(TRACKERS)}")
    params = dict(config.get("params") or {}) if config.get("tracker") == tracker else {}
    for t, names in _TRACKER_FLAGS.items():
        given = _explicit(args, names)
        if t == "pf":
            given.pop("seed", None)
        if given and t != tracker:
            flags = ", ".join("--" + n.replace("_", "-") for n in given)
            raise UsageError(f"{flags} only apply to --tracker {t}")
        params.update(given)
    if tracker == "pf" and hasattr(args, "seed"):
        params["seed"] = args.seed
    if tracker == "gm" and params:
        raise UsageError("the gm tracker takes no parameters")
    cls = TRACKER_CONFIGS.get(tracker)
    params = asdict(_dataclass_config(cls, params)) if cls else {}
    return {"tracker": tracker, "params": params, "volumes": _inputs(args, config, "volumes")}


def _track_one(volume: str, tracker: str, params: dict, out: str) -> list[str]:
    cls = TRACKER_CONFIGS.get(tracker)
    v = load_volume(volume)
    est, diag = run_tracker(tracker, v, cls(**params) if cls else None)
    stem = Path(volume).stem
    csv_path = Path(out) / f"{stem}_{tracker}.csv"
    diag_path = Path(out) / f"{stem}_{tracker}_diagnostics.json"
    save_truth(est, csv_path)
    diag = {"tracker": tracker, "volume": Path(volume).name,
            "dims": {"n_depth": v.n_depth, "n_channels": v.n_channels, "n_scans": v.n_scans},
            **{k: diag[k] for k in sorted(diag)}}
    _write_json(diag_path, diag)
    return [str(csv_path), str(diag_path)]


def cmd_track(args) -> int:
    t0 = time.perf_counter()
    config = _track_config(args)
    out = _out_dir(args)
    vols = config["volumes"]
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if jobs > 1 and len(vols) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(vols))) as ex:
            results = list(ex.map(_track_one, vols, [config["tracker"]] * len(vols),
                                  [config["params"]] * len(vols), [str(out)] * len(vols)))
    else:
        results = [_track_one(p, config["tracker"], config["params"], str(out)) for p in vols]
    outputs = [p for r in results for p in r]
    config["seed"] = config["params"].get("seed")
    _finish(out, "track", config, vols, outputs, t0)
    return EXIT_OK


# ---------------------------------------------------------------- eval / roc


def _surface_pair(estimate: str, truth: str):
    est = load_truth(estimate)
    ref = load_truth(truth)
    if est.shape != ref.shape:
        raise UsageError(f"dimension mismatch: {estimate} is {est.shape}, {truth} is {ref.shape}")
    return est, ref


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    config = _read_config(args.config)
    config.update(_explicit(args, ["start_scan"]))
    config.setdefault("start_scan", 0)
    estimate, truth = (_inputs(args, config, "estimate", 1)[0], _inputs(args, config, "truth", 1)[0])
    config.update(estimate=[estimate], truth=[truth])
    est, ref = _surface_pair(estimate, truth)
    try:
        err = bias_variance(est, ref, config["start_scan"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = json.dumps(err.to_dict(), indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if getattr(args, "out", None):
        out = _out_dir(args)
        path = out / "eval.json"
        path.write_text(text)
        _finish(out, "eval", config, [estimate, truth], [path], t0)
    return EXIT_OK


_ROC_KEYS = ["halo", "area_m2", "depth_window", "guard", "percentile", "neighbourhood",
             "noise_window", "far_max"]


def cmd_roc(args) -> int:
    t0 = time.perf_counter()
    config = _read_config(args.config)
    config.update(_explicit(args, _ROC_KEYS))
    volume = _inputs(args, config, "volume", 1)[0]
    estimate = _inputs(args, config, "estimate", 1)[0]
    mines_path = _inputs(args, config, "mines", 1)[0]
    v = load_volume(volume)
    est = load_truth(estimate)
    if est.shape != (v.n_channels, v.n_scans):
        raise UsageError(f"dimension mismatch: {estimate} is {est.shape}, volume has "
                         f"({v.n_channels}, {v.n_scans})")
    mines = load_mines(mines_path)
    pre = {k: config[k] for k in ("depth_window", "guard", "percentile", "neighbourhood",
                                  "noise_window", "noise_floor") if k in config}
    pcfg = _dataclass_config(PrescreenConfig, pre)
    config.update(asdict(pcfg))
    config.setdefault("halo", 5)
    config.setdefault("area_m2", v.n_channels * v.n_scans * CELL_AREA_M2)
    config.setdefault("far_max", 0.02)
    config.update(volume=[volume], estimate=[estimate], mines=[mines_path])
    try:
        curve = roc(prescreen(v, est, pcfg), mines, int(config["halo"]), float(config["area_m2"]),
                    float(config["far_max"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    stem = Path(estimate).stem
    csv_path, json_path = out / f"{stem}_roc.csv", out / f"{stem}_roc.json"
    rows = ["far,pd,threshold\n"] + [f"{f:.9g},{p:.9g},{t:.9g}\n"
                                     for (f, p), t in zip(curve.points, curve.thresholds)]
    csv_path.write_text("".join(rows))
    _write_json(json_path, {"auc_window": curve.auc_window, "far_max": curve.far_max,
                            "n_mines": curve.n_mines, "n_false_alarms": curve.n_false_alarms,
                            "degenerate": curve.degenerate, "area_m2": float(config["area_m2"]),
                            "halo": int(config["halo"])})
    print(f"auc_window={curve.auc_window:.6g}")
    _finish(out, "roc", config, [volume, estimate, mines_path], [csv_path, json_path], t0)
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"gbtrack {__version__}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = _Parser(prog="gbtrack", description="Ground-bounce tracking for GPR volumes.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic volume with ground truth",
                       argument_default=S)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--prefix", default="volume", help="output file stem (default: volume)")
    s.add_argument("--config", default=None, help="JSON SimConfig or a simulate manifest")
    s.add_argument("--dims", help="NDEPTHxNCHANNELSxNSCANS (default 415x24x500)")
    s.add_argument("--seed", type=int)
    s.add_argument("--surface-sigma", type=float, help="std of down-track GB increments (samples)")
    s.add_argument("--surface-base", type=float, help="mean GB depth (samples)")
    s.add_argument("--surface-reversion", type=float, help="mean-reversion time constant in scans, 0 = none")
    s.add_argument("--template", choices=["wavelet", "spike"])
    s.add_argument("--n-t", type=int, help="template half-length")
    s.add_argument("--noise-sigma", type=float)
    s.add_argument("--snow", metavar="PCT:RATIO", help="snow layer over PCT%% of the scans")
    s.add_argument("--snow-offset", type=int, help="samples above the GB (default 15)")
    s.add_argument("--snow-jitter", type=float, help="log-std of per-cell snow amplitude (default 0)")
    s.add_argument("--snow-start", type=float, help="start of the snow patch as a fraction of the lane (default 0.4)")
    s.add_argument("--interference", action="append", metavar="START:END[:AMP]",
                   help="broadband streak over scans START..END (1-based, inclusive); repeatable")
    s.add_argument("--mine", action="append", metavar="CH:DT[:AMP]",
                   help="buried target under cell CH,DT (1-based); repeatable")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="run a GB tracker on one or more volumes", argument_default=S)
    t.add_argument("volumes", nargs="*", help=".gprv files")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--config", default=None, help="JSON {tracker, params} or a track manifest")
    t.add_argument("--tracker", choices=TRACKERS)
    t.add_argument("--jobs", type=int, default=1, help="volumes processed in parallel")
    g = t.add_argument_group("constrained maximum (cm)")
    g.add_argument("--w-max", type=float)
    g.add_argument("--alpha-cm", type=float)
    g.add_argument("--w-min", type=float)
    g = t.add_argument_group("Kalman filter (kf)")
    g.add_argument("--q-scale", type=float)
    g.add_argument("--r-base", type=float)
    g.add_argument("--r-smooth-window", type=int)
    g.add_argument("--p0-scale", type=float)
    g = t.add_argument_group("particle filter (pf)")
    g.add_argument("--n-particles", type=int)
    g.add_argument("--n-t", type=int)
    g.add_argument("--sigma-v", type=float, help="default: estimated in training")
    g.add_argument("--sigma-n", type=float, help="default: calibrated in training")
    g.add_argument("--n-train", type=int)
    g.add_argument("--agree-tol", type=float)
    g.add_argument("--s-target", type=float)
    g.add_argument("--w-target", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--no-refine", dest="refine", action="store_false")
    g.add_argument("--no-adapt-template", dest="adapt_template", action="store_false")
    g.add_argument("--recalibrate-sigma-n", action="store_true")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="bias/variance of an estimate against truth", argument_default=S)
    e.add_argument("estimate", nargs="?", help="estimate CSV")
    e.add_argument("truth", nargs="?", help="truth CSV")
    e.add_argument("--start-scan", type=int, help="first scan (0-based) to score")
    e.add_argument("--config", default=None)
    e.add_argument("--out", default=None, help="also write eval.json and a manifest here")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("roc", help="prescreen and score against mine locations", argument_default=S)
    r.add_argument("volume", nargs="?", help=".gprv file")
    r.add_argument("estimate", nargs="?", help="GB surface CSV used by the prescreener")
    r.add_argument("mines", nargs="?", help="mine CSV (ch,dt; 1-based)")
    r.add_argument("--out", required=True)
    r.add_argument("--config", default=None)
    r.add_argument("--halo", type=int, help="detection halo in cells (default 5)")
    r.add_argument("--area-m2", type=float, help="default: cells x 0.0025 m^2")
    r.add_argument("--far-max", type=float, help="upper FAR of the AUC window (default 0.02)")
    r.add_argument("--depth-window", type=int)
    r.add_argument("--guard", type=int)
    r.add_argument("--percentile", type=float)
    r.add_argument("--neighbourhood", type=int)
    r.add_argument("--noise-window", type=int)
    r.set_defaults(func=cmd_roc)

    vp = sub.add_parser("version", help="print the version")
    vp.set_defaults(func=cmd_version)
    return p


def _wrap_inputs(args):
    # positional inputs arrive as single strings (nargs="?"); normalise to lists
    for key in ("estimate", "truth", "volume", "mines"):
        if hasattr(args, key):
            val = getattr(args, key)
            setattr(args, key, [] if val is None else [val])


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _wrap_inputs(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gbtrack: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FormatError, OSError) as exc:
        print(f"gbtrack: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"gbtrack: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"gbtrack: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
