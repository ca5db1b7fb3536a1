"""k-means codebook training and nearest-centroid quantization.

Centroids are stored as float32; distances, means and inertia are
accumulated in float64 in frame-index order, so a fit is bit-reproducible
from ``(data, config)``.

Codebook file layout (little-endian)::

    "KMCB" u32 version=1, u32 k, u32 dim, u64 seed, f64 trained_inertia,
    f32[k*dim] centroids
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .corpus import FeatureMatrix, PathLike
from .errors import (
    BadMagic,
    ConfigError,
    DimMismatch,
    NonFiniteValue,
    TooFewDistinctPoints,
    TooFewFrames,
    TrailingBytes,
    TruncatedFile,
    UnknownVersion,
)
from .rng import SplitMix64

log = logging.getLogger(__name__)

CODEBOOK_MAGIC = b"KMCB"
CODEBOOK_VERSION = 1
_CODEBOOK_HEADER = struct.Struct("<4sIIIQd")


@dataclass(frozen=True)
class KmeansConfig:
    k: int = 500
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ConfigError(f"tol must be >= 0, got {self.tol}")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a u64, got {self.seed}")


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray
    trained_inertia: float = 0.0
    seed: int = 0

    def __post_init__(self):
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise DimMismatch(f"centroids must be a non-empty k x dim array, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise NonFiniteValue("codebook contains non-finite centroids")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            self.centroids.shape == other.centroids.shape
            and self.centroids.tobytes() == other.centroids.tobytes()
            and struct.pack("<d", self.trained_inertia) == struct.pack("<d", other.trained_inertia)
            and self.seed == other.seed
        )


@dataclass
class FitStats:
    iterations_run: int = 0
    inertia_per_iter: list[float] = field(default_factory=list)
    converged: bool = False

    def to_json(self) -> dict:
        return {
            "iterations_run": self.iterations_run,
            "inertia_per_iter": list(self.inertia_per_iter),
            "converged": self.converged,
        }


def _frames(data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        return data.data
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise DimMismatch(f"expected a frames x dim array, got shape {arr.shape}")
    return arr


def _check_finite(x: np.ndarray):
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("features contain NaN or Inf")


def kmeans_pp_init(data, k: int, rng: SplitMix64) -> np.ndarray:
    """k-means++ (D^2) seeding. Returns a ``k x dim`` float32 array of data rows.

    The first centroid is a uniformly drawn row; each subsequent one is drawn
    with probability proportional to its squared distance from the nearest
    centroid chosen so far.
    """
    x = _frames(data)
    n = x.shape[0]
    if n < k:
        raise TooFewFrames(f"{n} frames cannot seed {k} clusters")
    if np.unique(x, axis=0).shape[0] < k:
        raise TooFewDistinctPoints(f"fewer than {k} distinct frames")
    chosen = [rng.randbelow(n)]
    _, d2 = _kernels.nearest_centroid(x, x[chosen[0]:chosen[0] + 1])
    for _ in range(1, k):
        cum = np.cumsum(d2)
        target = rng.uniform() * cum[-1]
        idx = int(np.searchsorted(cum, target, side="right"))
        if idx >= n or d2[idx] == 0.0:
            # rounding pushed the draw past the last positive-mass frame
            idx = int(np.flatnonzero(d2 > 0.0)[-1])
        chosen.append(idx)
        _, d_new = _kernels.nearest_centroid(x, x[idx:idx + 1])
        d2 = np.minimum(d2, d_new)
    return x[chosen].copy()


def _update_centroids(x, labels, dists, centroids):
    k = centroids.shape[0]
    sums, counts = _kernels.cluster_sums(x, labels, k)
    new = centroids.copy()
    live = counts > 0
    new[live] = (sums[live] / counts[live, None]).astype(np.float32)
    empty = np.flatnonzero(~live)
    if empty.size:
        dists = dists.copy()
        for c in empty:
            # argmax returns the lowest frame index on ties
            far = int(np.argmax(dists))
            log.debug("cluster %d emptied; reseeding at frame %d", c, far)
            new[c] = x[far]
            dists[far] = 0.0
    return new


def _lloyd(x, centroids, cfg: KmeansConfig):
    stats = FitStats()
    labels, dists = _kernels.nearest_centroid(x, centroids)
    prev = None
    for _ in range(cfg.max_iters):
        centroids = _update_centroids(x, labels, dists, centroids)
        labels, dists = _kernels.nearest_centroid(x, centroids)
        cur = _kernels.sequential_sum(dists)
        stats.inertia_per_iter.append(cur)
        stats.iterations_run += 1
        if prev is not None:
            # cur == prev also stops: a fixed point when tol is 0
            if prev == 0.0 or cur == prev or (prev - cur) / prev < cfg.tol:
                stats.converged = True
                break
        elif cur == 0.0:
            stats.converged = True
            break
        prev = cur
    return centroids, stats


def kmeans_fit(data, cfg: KmeansConfig) -> tuple[Codebook, FitStats]:
    """Lloyd's algorithm from k-means++ seeds; best of ``cfg.restarts`` runs."""
    x = _frames(data)
    _check_finite(x)
    if x.shape[0] < cfg.k:
        raise TooFewFrames(f"{x.shape[0]} frames cannot fit {cfg.k} clusters")
    rng = SplitMix64(cfg.seed)
    best = None
    for restart in range(cfg.restarts):
        init = kmeans_pp_init(x, cfg.k, rng)
        centroids, stats = _lloyd(x, init, cfg)
        final = stats.inertia_per_iter[-1]
        log.info("restart %d: %d iterations, inertia %.6g", restart, stats.iterations_run, final)
        if best is None or final < best[1].inertia_per_iter[-1]:
            best = (centroids, stats)
    centroids, stats = best
    return Codebook(centroids, stats.inertia_per_iter[-1], cfg.seed), stats


def _check_dims(cb: Codebook, x: np.ndarray):
    if x.shape[1] != cb.dim:
        raise DimMismatch(f"features have dim {x.shape[1]}, codebook has dim {cb.dim}")


def assign(cb: Codebook, features) -> list[int]:
    """Nearest centroid per frame (squared Euclidean, lowest index on ties)."""
    x = _frames(features)
    _check_dims(cb, x)
    labels, _ = _kernels.nearest_centroid(x, cb.centroids)
    return labels.tolist()


def inertia(cb: Codebook, data) -> float:
    x = _frames(data)
    _check_dims(cb, x)
    _, dists = _kernels.nearest_centroid(x, cb.centroids)
    return _kernels.sequential_sum(dists)


def write_codebook(path: PathLike, cb: Codebook) -> None:
    header = _CODEBOOK_HEADER.pack(
        CODEBOOK_MAGIC, CODEBOOK_VERSION, cb.k, cb.dim, cb.seed, float(cb.trained_inertia)
    )
    Path(path).write_bytes(header + cb.centroids.astype("<f4").tobytes())


def read_codebook(path: PathLike) -> Codebook:
    raw = Path(path).read_bytes()
    if raw[:4] != CODEBOOK_MAGIC:
        raise BadMagic(f"{path}: expected magic {CODEBOOK_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < _CODEBOOK_HEADER.size:
        raise TruncatedFile(f"{path}: codebook header truncated")
    _, version, k, dim, seed, trained = _CODEBOOK_HEADER.unpack_from(raw)
    if version != CODEBOOK_VERSION:
        raise UnknownVersion(f"{path}: codebook version {version}")
    expected = _CODEBOOK_HEADER.size + 4 * k * dim
    if len(raw) < expected:
        raise TruncatedFile(f"{path}: codebook payload truncated")
    if len(raw) > expected:
        raise TrailingBytes(f"{path}: {len(raw) - expected} bytes after payload")
    centroids = np.frombuffer(raw, dtype="<f4", offset=_CODEBOOK_HEADER.size).reshape(k, dim)
    return Codebook(centroids.astype(np.float32), trained, seed)
