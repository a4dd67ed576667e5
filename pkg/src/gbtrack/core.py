"""Domain types and file formats shared by the simulator, trackers and evaluation.

Index conventions
-----------------
Everything is 0-based internally.  Channel/scan numbers in files (the truth
CSV) and in user-facing docs are 1-based; :class:`CellIndex` is the only
place that converts between the two.
"""
from __future__ import annotations

import csv
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GPRV_MAGIC = b"GPRV"
GPRV_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class FormatError(ValueError):
    """Raised when a volume or truth file does not match its format."""


@dataclass(frozen=True)
class GprVolume:
    """A 3D radar volume.

    The samples are held as a C-contiguous float32 array of shape
    ``(n_scans, n_channels, n_depth)`` so that each A-scan is contiguous in
    memory (this is also the on-disk order).  :attr:`samples` exposes the
    same memory indexed ``[depth, channel, scan]``.
    """

    raw: np.ndarray

    def __post_init__(self):
        raw = np.ascontiguousarray(self.raw, dtype=np.float32)
        if raw.ndim != 3:
            raise ValueError(f"volume must be 3D, got shape {raw.shape}")
        if min(raw.shape) < 1:
            raise ValueError(f"volume dimensions must be >= 1, got {raw.shape}")
        if not np.all(np.isfinite(raw)):
            raise ValueError("volume contains non-finite samples")
        raw.setflags(write=False)
        object.__setattr__(self, "raw", raw)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "GprVolume":
        """Build from an array indexed ``[depth, channel, scan]``."""
        return cls(np.transpose(np.asarray(samples), (2, 1, 0)))

    @property
    def n_scans(self) -> int:
        return self.raw.shape[0]

    @property
    def n_channels(self) -> int:
        return self.raw.shape[1]

    @property
    def n_depth(self) -> int:
        return self.raw.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        """``(n_depth, n_channels, n_scans)``."""
        return self.n_depth, self.n_channels, self.n_scans

    @property
    def samples(self) -> np.ndarray:
        return self.raw.transpose(2, 1, 0)

    def ascan(self, ch: int, dt: int) -> np.ndarray:
        """Depth vector at 0-based ``(ch, dt)``."""
        if not (0 <= ch < self.n_channels and 0 <= dt < self.n_scans):
            raise IndexError(f"cell ({ch}, {dt}) outside volume {self.shape}")
        return self.raw[dt, ch]

    def bscan(self, ch: int) -> np.ndarray:
        """Depth x scan image of one channel."""
        return self.raw[:, ch, :].T

    def __eq__(self, other):
        if not isinstance(other, GprVolume):
            return NotImplemented
        return self.raw.shape == other.raw.shape and np.array_equal(self.raw, other.raw)

    __hash__ = None


@dataclass(frozen=True)
class AScanView:
    """One A-scan of a volume, addressed by 0-based channel and scan."""

    volume: GprVolume
    channel: int
    scan: int

    def __post_init__(self):
        v = self.volume
        if not (0 <= self.channel < v.n_channels and 0 <= self.scan < v.n_scans):
            raise IndexError(f"cell ({self.channel}, {self.scan}) outside volume {v.shape}")

    @property
    def z(self) -> np.ndarray:
        return self.volume.raw[self.scan, self.channel]

    def __len__(self):
        return self.volume.n_depth

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.z, dtype=dtype)


@dataclass
class GroundBounceSurface:
    """Ground-bounce depth (in samples) per ``(channel, scan)``.

    Values may be fractional (MMSE output) or integral (peak-refined
    output, rounded truth).
    """

    gb: np.ndarray
    n_depth: int | None = None

    def __post_init__(self):
        gb = np.array(self.gb, dtype=np.float64)
        if gb.ndim != 2 or min(gb.shape) < 1:
            raise ValueError(f"surface must be a non-empty 2D array, got shape {gb.shape}")
        if not np.all(np.isfinite(gb)):
            raise ValueError("surface contains non-finite values")
        if self.n_depth is not None:
            check_surface_range(gb, self.n_depth)
        self.gb = gb

    @property
    def n_channels(self) -> int:
        return self.gb.shape[0]

    @property
    def n_scans(self) -> int:
        return self.gb.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.gb.shape

    def rounded(self) -> "GroundBounceSurface":
        return GroundBounceSurface(np.rint(self.gb), self.n_depth)

    def copy(self) -> "GroundBounceSurface":
        return GroundBounceSurface(self.gb.copy(), self.n_depth)


def check_surface_range(gb: np.ndarray, n_depth: int) -> None:
    bad = np.argwhere((gb < 0) | (gb > n_depth - 1))
    if len(bad):
        ch, dt = bad[0]
        raise FormatError(
            f"GB index {gb[ch, dt]} at ch={ch + 1}, dt={dt + 1} outside [0, {n_depth - 1}]"
        )


@dataclass(frozen=True)
class CellIndex:
    """Converts between 1-based ``(ch, dt)``, the flattened step ``k`` and
    0-based array indices.

    ``k = (dt - 1) * n_channels + ch`` with every quantity 1-based.
    """

    n_channels: int
    n_scans: int = field(default=2**62)

    def flatten(self, ch: int, dt: int) -> int:
        self._check(ch, dt)
        return (dt - 1) * self.n_channels + ch

    def unflatten(self, k: int) -> tuple[int, int]:
        if k < 1:
            raise IndexError(f"step k={k} must be >= 1")
        dt, ch = divmod(k - 1, self.n_channels)
        self._check(ch + 1, dt + 1)
        return ch + 1, dt + 1

    def to_array(self, ch: int, dt: int) -> tuple[int, int]:
        self._check(ch, dt)
        return ch - 1, dt - 1

    def from_array(self, ch0: int, dt0: int) -> tuple[int, int]:
        self._check(ch0 + 1, dt0 + 1)
        return ch0 + 1, dt0 + 1

    def _check(self, ch: int, dt: int) -> None:
        if not (1 <= ch <= self.n_channels and 1 <= dt <= self.n_scans):
            raise IndexError(f"cell (ch={ch}, dt={dt}) out of range")


def _atomic_write(path: Path, write) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_volume(v: GprVolume, path) -> None:
    """Write ``v`` as a GPRV file (temp file + rename, so overwrites are atomic)."""
    if not isinstance(v, GprVolume):
        raise TypeError("save_volume expects a GprVolume")
    if min(v.raw.shape) < 1:
        raise ValueError("refusing to write a volume with an empty dimension")

    def write(fh):
        fh.write(_HEADER.pack(GPRV_MAGIC, GPRV_VERSION, v.n_depth, v.n_channels, v.n_scans))
        fh.write(v.raw.astype("<f4", copy=False).tobytes(order="C"))

    _atomic_write(Path(path), write)


def load_volume(path) -> GprVolume:
    """Read a GPRV file.  Raises :class:`FormatError` naming the offending byte offset."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header at byte offset {len(data)}")
    magic, version, nd, nch, nscan = _HEADER.unpack_from(data, 0)
    if magic != GPRV_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    if version != GPRV_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte offset 4")
    if min(nd, nch, nscan) < 1:
        raise FormatError(f"{path}: zero dimension in header at byte offset 8")
    n = nd * nch * nscan
    expected = _HEADER.size + 4 * n
    if len(data) < expected:
        raise FormatError(
            f"{path}: truncated payload, expected {expected} bytes, file ends at byte offset {len(data)}"
        )
    if len(data) > expected:
        raise FormatError(f"{path}: trailing data at byte offset {expected}")
    raw = np.frombuffer(data, dtype="<f4", count=n, offset=_HEADER.size)
    finite = np.isfinite(raw)
    if not finite.all():
        i = int(np.argmin(finite))
        raise FormatError(f"{path}: non-finite sample at byte offset {_HEADER.size + 4 * i}")
    return GprVolume(raw.astype(np.float32).reshape(nscan, nch, nd))


def save_truth(s: GroundBounceSurface, path) -> None:
    """Write a surface as ``ch,dt,gb`` CSV (1-based indices, 6 decimals)."""
    rows = []
    for dt in range(s.n_scans):
        for ch in range(s.n_channels):
            rows.append(f"{ch + 1},{dt + 1},{s.gb[ch, dt]:.6f}\n")
    payload = ("ch,dt,gb\n" + "".join(rows)).encode()
    _atomic_write(Path(path), lambda fh: fh.write(payload))


def load_truth(path, n_channels: int | None = None, n_scans: int | None = None,
               n_depth: int | None = None) -> GroundBounceSurface:
    """Read a ``ch,dt,gb`` CSV.

    Dimensions are inferred from the largest indices unless given; every
    cell must appear exactly once.  With ``n_depth`` the values are range
    checked.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["ch", "dt", "gb"]:
            raise FormatError(f"{path}: expected header 'ch,dt,gb', got {header!r}")
        cells = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                cells.append((int(row[0]), int(row[1]), float(row[2])))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not cells:
        raise FormatError(f"{path}: no rows")
    arr = np.array(cells, dtype=np.float64)
    chs = arr[:, 0].astype(int)
    dts = arr[:, 1].astype(int)
    nch = n_channels if n_channels is not None else int(chs.max())
    nsc = n_scans if n_scans is not None else int(dts.max())
    if len(cells) != nch * nsc:
        raise FormatError(f"{path}: {len(cells)} rows, expected {nch} x {nsc} = {nch * nsc}")
    if chs.min() < 1 or chs.max() > nch or dts.min() < 1 or dts.max() > nsc:
        raise FormatError(f"{path}: cell index outside {nch} channels x {nsc} scans")
    gb = np.full((nch, nsc), np.nan)
    gb[chs - 1, dts - 1] = arr[:, 2]
    if np.isnan(gb).any():
        raise FormatError(f"{path}: duplicate or missing cells")
    return GroundBounceSurface(gb, n_depth)
