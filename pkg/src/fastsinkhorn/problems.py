"""Test problems: random histograms, Ricker wavelets and grayscale images.

Every generator returns strictly positive :class:`DiscreteMeasure` objects that
the solver accepts as-is.  Random streams come from ``numpy.random.default_rng``
(PCG64) so a seed pins the exact input on every platform.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ParseError, UnsupportedFormatError, ValidationError, ZeroSignalError
from .types import DiscreteMeasure, Grid1D, Grid2D, flatten, validate_measure

RNG_ALGORITHM = "numpy.random.PCG64"

# the random 1D experiments live on [-3, 3]
RANDOM_DOMAIN = (-3.0, 3.0)


@dataclass(frozen=True)
class SignalNormalizationParams:
    delta: float
    L: int

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError(f"delta must be positive, got {self.delta!r}")
        if self.L < 1:
            raise ValidationError(f"L must be a positive count, got {self.L!r}")


def default_random_grid(n: int) -> Grid1D:
    """``x_i = (i-1) * 6/(n-1) - 3``; a single point gets unit spacing."""
    lo, hi = RANDOM_DOMAIN
    return Grid1D(n, (hi - lo) / (n - 1) if n > 1 else 1.0)


def _uniform_histogram(rng, size):
    w = rng.random(size)
    while np.any(w == 0.0):  # probability ~2**-53 per draw
        w[w == 0.0] = rng.random(int(np.count_nonzero(w == 0.0)))
    return w / w.sum()


def random_measure_1d(n: int, seed: int, grid: Grid1D | None = None) -> DiscreteMeasure:
    """``n`` uniform(0, 1) draws divided by their sum."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    grid = grid or default_random_grid(n)
    return DiscreteMeasure(_uniform_histogram(np.random.default_rng(seed), n), grid)


def random_pair_1d(n: int, seed: int, grid: Grid1D | None = None):
    """Two independent random measures drawn from one seeded stream.

    The first equals ``random_measure_1d(n, seed)``.
    """
    grid = grid or default_random_grid(n)
    rng = np.random.default_rng(seed)
    u = _uniform_histogram(rng, n)
    v = _uniform_histogram(rng, n)
    return DiscreteMeasure(u, grid), DiscreteMeasure(v, grid)


def random_measure_2d(n: int, m: int, seed: int, h1: float = 1.0, h2: float = 1.0) -> DiscreteMeasure:
    """Random measure on an ``n x m`` grid; draws fill the flat vector column-major."""
    grid = Grid2D(n, m, h1, h2)
    return DiscreteMeasure(_uniform_histogram(np.random.default_rng(seed), n * m), grid)


def random_pair_2d(n: int, m: int, seed: int, h1: float = 1.0, h2: float = 1.0):
    grid = Grid2D(n, m, h1, h2)
    rng = np.random.default_rng(seed)
    u = _uniform_histogram(rng, n * m)
    v = _uniform_histogram(rng, n * m)
    return DiscreteMeasure(u, grid), DiscreteMeasure(v, grid)


def ricker(t, f0: float = 1.0, A: float = 1.0):
    """Ricker wavelet ``A (1 - 2 pi^2 f0^2 t^2) exp(-pi^2 f0^2 t^2)``."""
    arg = (np.pi * f0 * np.asarray(t, dtype=np.float64)) ** 2
    out = A * (1.0 - 2.0 * arg) * np.exp(-arg)
    return float(out) if out.ndim == 0 else out


def _cell_size(grid) -> float:
    if grid is None:
        return 1.0
    if isinstance(grid, Grid2D):
        return grid.h1 * grid.h2
    return grid.h


def normalize_signal(f, delta: float, grid=None) -> DiscreteMeasure:
    """Square, normalize to unit mass, then lift every entry by a ``delta`` floor.

    The samples are treated as a density on ``grid``: with cell size ``c`` (``h``
    in 1D, ``h1*h2`` in 2D; 1 when no grid is given) and ``L = c * len(f)`` the
    domain size, the density ``(f**2 / ||f**2|| + delta) / (1 + L*delta)`` is
    turned into cell masses, i.e.

        w = (f**2 / sum(f**2) + c*delta) / (1 + len(f)*c*delta)

    which sums to one and is bounded below by ``c*delta / (1 + len(f)*c*delta)``.
    """
    f = np.asarray(f, dtype=np.float64)
    cell = _cell_size(grid)
    params = SignalNormalizationParams(delta, f.size)
    sq = f.ravel() ** 2
    total = sq.sum()
    if not total > 0:
        raise ZeroSignalError("signal is identically zero")
    floor = cell * params.delta
    w = (sq / total + floor) / (1.0 + params.L * floor)
    if grid is None:
        grid = Grid1D(f.size, 1.0)
    return DiscreteMeasure(w, grid)


def ricker_pair(n: int, t_min: float = -4.0, t_max: float = 4.0, shift: float = -1.2032,
                delta: float = 1e-3, f0: float = 1.0, A: float = 1.0):
    """Normalized samples of ``R(t)`` and ``R(t - shift)`` on ``n`` uniform points."""
    if n < 2:
        raise ValidationError(f"need n >= 2 samples, got {n}")
    if not t_min < t_max:
        raise ValidationError(f"empty time interval [{t_min}, {t_max}]")
    t = np.linspace(t_min, t_max, n)
    grid = Grid1D(n, (t_max - t_min) / (n - 1))
    u = normalize_signal(ricker(t, f0, A), delta, grid)
    v = normalize_signal(ricker(t - shift, f0, A), delta, grid)
    return u, v


def image_to_measure(img, delta: float = 1e-7, h1: float = 1.0, h2: float = 1.0) -> DiscreteMeasure:
    """Column-major flatten a single-channel image and normalize it like a signal."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValidationError(f"expected a single-channel 2D image, got shape {img.shape}")
    return normalize_signal(flatten(img), delta, Grid2D(img.shape[0], img.shape[1], h1, h2))


def resize_nearest(img, n: int, m: int) -> np.ndarray:
    """Nearest-neighbour resample: output pixel ``(i, j)`` takes the source pixel
    containing its centre, ``floor((i + 0.5) * H / n)``."""
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape
    rows = np.minimum(((np.arange(n) + 0.5) * H / n).astype(int), H - 1)
    cols = np.minimum(((np.arange(m) + 0.5) * W / m).astype(int), W - 1)
    return img[np.ix_(rows, cols)]


# --------------------------------------------------------------------------
# file ingestion
# --------------------------------------------------------------------------


def _pgm_header(data: bytes):
    """Return (magic, width, height, maxval, offset of the raster)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0].decode("ascii", "replace")
    if magic not in ("P2", "P5"):
        raise UnsupportedFormatError(f"unsupported PGM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ParseError(f"bad PGM header: {exc}") from None
    if width < 1 or height < 1 or not 0 < maxval <= 65535:
        raise ParseError(f"bad PGM dimensions or maxval: {width}x{height}, {maxval}")
    # exactly one whitespace byte separates header and raster
    return magic, width, height, maxval, pos + 1


def _load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, width, height, maxval, offset = _pgm_header(data)
    count = width * height
    if magic == "P2":
        body = data[offset:].decode("ascii", "replace")
        words = [w for line in body.splitlines() for w in line.split("#", 1)[0].split()]
        if len(words) != count:
            raise ParseError(f"expected {count} samples, found {len(words)}")
        try:
            values = np.array([int(w) for w in words], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[offset:offset + count * dtype.itemsize]
        if len(raw) != count * dtype.itemsize:
            raise ParseError("truncated PGM raster")
        values = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if np.any(values > maxval):
        raise ParseError("sample exceeds maxval")
    return values.reshape(height, width)


def _load_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"line {lineno}: {len(rows[-1])} columns, expected {len(rows[0])}")
    if not rows:
        raise ParseError("empty CSV file")
    return np.array(rows, dtype=np.float64)


def load_matrix(path, format: str | None = None) -> np.ndarray:
    """Read a PGM (P2/P5) or CSV matrix; row ``i`` of the result is file row ``i``.

    ``format`` is inferred from the extension when omitted.  Values are returned
    as stored, without rescaling by ``maxval``.
    """
    if format is None:
        ext = os.path.splitext(str(path))[1].lower().lstrip(".")
        format = {"pgm": "pgm", "csv": "csv", "txt": "csv"}.get(ext)
        if format is None:
            raise UnsupportedFormatError(f"cannot infer format of {path!r}")
    format = format.lower()
    if format == "pgm":
        return _load_pgm(path)
    if format == "csv":
        return _load_csv(path)
    raise UnsupportedFormatError(f"unknown format {format!r}")


def load_measure(path, grid=None, format: str | None = None) -> DiscreteMeasure:
    """Load stored weights as a measure without renormalizing them.

    A single row or column is read as a 1D measure; anything else as 2D.
    """
    mat = load_matrix(path, format)
    if grid is None:
        if 1 in mat.shape:
            grid = Grid1D(mat.size, 1.0)
        else:
            grid = Grid2D(mat.shape[0], mat.shape[1], 1.0, 1.0)
    if isinstance(grid, Grid1D):
        return validate_measure(mat.ravel(), grid)
    return validate_measure(mat, grid)
