"""Dataset readers and the synthetic planted-cluster generator.

Supported containers:

* ``fvecs``: per vector an int32 little-endian dimension ``d`` followed by
  ``d`` little-endian float32 values;
* ``idx`` images: big-endian int32 magic ``0x00000803``, then int32 counts
  ``n``, ``rows``, ``cols`` and ``n * rows * cols`` unsigned bytes.  Label
  files (magic ``0x00000801``) are recognised and yield an empty matrix;
* text embeddings: one ``token v1 ... vd`` record per line.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataFormatError, UsageError

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def load_fvecs(path) -> np.ndarray:
    """Read an ``.fvecs`` file into an ``(n, d)`` float32 array.

    An empty file gives a ``(0, 0)`` array.
    """
    raw = Path(path).read_bytes()
    if not raw:
        return np.zeros((0, 0), dtype=np.float32)
    rows = []
    dim = None
    off = 0
    while off < len(raw):
        if off + 4 > len(raw):
            raise DataFormatError("truncated dimension header", off)
        (d,) = struct.unpack_from("<i", raw, off)
        if d <= 0:
            raise DataFormatError(f"non-positive dimension {d}", off)
        if dim is None:
            dim = d
        elif d != dim:
            raise DataFormatError(f"dimension {d} differs from first record's {dim}", off)
        end = off + 4 + 4 * d
        if end > len(raw):
            raise DataFormatError(f"record needs {4 * d} payload bytes, file ends first", off)
        rows.append(np.frombuffer(raw, dtype="<f4", count=d, offset=off + 4))
        off = end
    return np.vstack(rows).astype(np.float32)


def save_fvecs(path, points) -> None:
    points = np.asarray(points, dtype="<f4")
    n, d = points.shape
    buf = bytearray()
    header = struct.pack("<i", d)
    for row in points:
        buf += header
        buf += row.tobytes()
    Path(path).write_bytes(bytes(buf))


def load_idx_images(path) -> np.ndarray:
    """Read an idx image file into an ``(n, rows * cols)`` float64 array of byte values."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataFormatError("file too short for an idx magic number", 0)
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic == IDX_LABELS_MAGIC:
        if len(raw) < 8:
            raise DataFormatError("truncated idx label header", 4)
        (n,) = struct.unpack_from(">i", raw, 4)
        if len(raw) != 8 + n:
            raise DataFormatError(f"label payload should be {n} bytes", 8)
        log.warning("%s is an idx label file; ignoring it", path)
        return np.zeros((0, 0))
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(
            f"bad idx magic 0x{magic:08X}, expected 0x{IDX_IMAGES_MAGIC:08X}", 0)
    if len(raw) < 16:
        raise DataFormatError("truncated idx image header", 4)
    n, rows, cols = struct.unpack_from(">iii", raw, 4)
    if n < 0 or rows < 0 or cols < 0:
        raise DataFormatError("negative idx dimension", 4)
    size = n * rows * cols
    if len(raw) - 16 < size:
        raise DataFormatError(f"payload needs {size} bytes, found {len(raw) - 16}", 16)
    if len(raw) - 16 > size:
        raise DataFormatError("trailing bytes after idx payload", 16 + size)
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=16)
    return data.reshape(n, rows * cols).astype(np.float64)


def load_text_embeddings(path, normalize: bool = True) -> tuple[list[str], np.ndarray]:
    """Read ``token v1 ... vd`` lines; returns the tokens and an ``(n, d)`` array.

    With ``normalize`` every row is scaled to unit length.
    """
    tokens: list[str] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                values = [float(v) for v in parts[1:]]
            except ValueError:
                raise DataFormatError(f"line {lineno}: non-numeric field") from None
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise DataFormatError(f"line {lineno}: no vector after token")
            elif len(values) != dim:
                raise DataFormatError(f"line {lineno}: {len(values)} values, expected {dim}")
            tokens.append(parts[0])
            rows.append(values)
    if not rows:
        return tokens, np.zeros((0, 0))
    X = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(X).all():
        raise DataFormatError("non-finite value in embeddings")
    if normalize:
        norms = np.linalg.norm(X, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise DataFormatError(f"line for token {tokens[zero[0]]!r} is a zero vector")
        X = X / norms[:, None]
    return tokens, X


def load_dataset(path, fmt: str, normalize: bool = True) -> np.ndarray:
    if fmt == "fvecs":
        return load_fvecs(path).astype(np.float64)
    if fmt == "idx":
        return load_idx_images(path)
    if fmt == "text":
        return load_text_embeddings(path, normalize)[1]
    raise UsageError(f"unknown format {fmt!r}")


@dataclass(frozen=True)
class SynthSpec:
    n: int
    dim: int
    clusters: int
    radius: float
    seed: int = 0
    spread: float = 20.0
    scale_range: tuple[float, float] = (0.2, 1.6)


@dataclass
class SynthData:
    points: np.ndarray
    queries: np.ndarray
    inner: list[np.ndarray]


def synth_generate(spec: SynthSpec) -> SynthData:
    """Gaussian clusters with one planted query per cluster center.

    Cluster centers are Gaussian with scale ``spread * radius``.  Each point
    is its center plus an isotropic Gaussian offset whose scale is drawn per
    point from ``scale_range``, so with the default offset norms range over
    roughly ``[0.2, 1.6] * radius``; this mixes near points, annulus points
    and far points around every query.
    ``inner[c]`` lists the points within ``radius`` of query ``c``, found by
    scanning every point.
    """
    if spec.n < 1 or spec.dim < 1 or spec.clusters < 1:
        raise UsageError("n, dim and clusters must be positive")
    if not spec.radius > 0:
        raise UsageError("radius must be positive")
    lo, hi = spec.scale_range
    if not 0 <= lo <= hi:
        raise UsageError("scale_range must satisfy 0 <= low <= high")
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.clusters, spec.dim)) * spec.spread * spec.radius
    labels = np.arange(spec.n) % spec.clusters
    scale = rng.uniform(lo, hi, spec.n) * spec.radius / np.sqrt(spec.dim)
    points = centers[labels] + rng.standard_normal((spec.n, spec.dim)) * scale[:, None]
    inner = []
    for c in range(spec.clusters):
        d = np.linalg.norm(points - centers[c], axis=1)
        inner.append(np.flatnonzero(d <= spec.radius))
    return SynthData(points, centers, inner)
