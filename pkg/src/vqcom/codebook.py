"""Shared codeword dictionary: k-means training, nearest-neighbor queries.

The codebook is the pre-shared transmitter/receiver configuration. Training
uses k-means++ seeding plus Lloyd iterations; empty clusters are re-seeded to
the current farthest point. Quantization uses squared Euclidean argmin with
ties broken toward the lowest index; the per-position distance map used by
distance-based masking is unsquared Euclidean.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

CODEBOOK_MAGIC = b"LGCB"
CODEBOOK_VERSION = 1

_CHUNK = 2048  # positions per distance block, keeps memory bounded


@dataclass
class Codebook:
    """K codewords of length ell plus the training usage histogram."""

    words: np.ndarray            # (K, ell) float64
    usage: np.ndarray            # (K,) int64 final assignment counts
    wcss_history: list[float] = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return self.words.shape[0]

    @property
    def ell(self) -> int:
        return self.words.shape[1]

    @property
    def least_probable(self) -> int:
        """Index with the smallest training usage (ties -> lowest index)."""
        return int(np.argmin(self.usage))

    def validate(self) -> None:
        if self.K < 2:
            raise ValueError("codebook needs K >= 2")
        if not np.all(np.isfinite(self.words)):
            raise ValueError("codebook contains non-finite codewords")
        if self.usage.shape != (self.K,) or np.any(self.usage < 0):
            raise ValueError("usage histogram malformed")


def _flatten_latents(latents: list[np.ndarray]) -> np.ndarray:
    vecs = [np.asarray(g, dtype=np.float64).reshape(-1, np.asarray(g).shape[-1]) for g in latents]
    pop = np.concatenate(vecs, axis=0)
    if not np.all(np.isfinite(pop)):
        raise ValueError("latent vectors contain non-finite values")
    return pop


def _sq_dists_to(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Exact squared distances (n, K) computed blockwise from differences."""
    n = points.shape[0]
    out = np.empty((n, centers.shape[0]), dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        diff = points[lo:hi, None, :] - centers[None, :, :]
        out[lo:hi] = np.einsum("nkd,nkd->nk", diff, diff)
    return out


def _kmeanspp_init(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((K, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    d2 = np.einsum("nd,nd->n", points - centers[0], points - centers[0])
    for k in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[k] = points[idx]
        cand = np.einsum("nd,nd->n", points - centers[k], points - centers[k])
        np.minimum(d2, cand, out=d2)
    return centers


def learn_codebook(latents: list[np.ndarray], K: int, iters: int = 25, seed: int = 0) -> Codebook:
    """Lloyd's k-means with k-means++ seeding over all flattened latent vectors."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    points = _flatten_latents(latents)
    if points.shape[0] < K:
        raise ValueError(f"need at least K={K} vectors, got {points.shape[0]}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(points, K, rng)
    history: list[float] = []
    assign = np.zeros(points.shape[0], dtype=np.int64)
    for _ in range(iters):
        d2 = _sq_dists_to(points, centers)
        assign = np.argmin(d2, axis=1)
        wcss = float(d2[np.arange(len(assign)), assign].sum())
        history.append(wcss)
        nearest = d2[np.arange(len(assign)), assign].copy()
        for k in range(K):
            sel = assign == k
            if sel.any():
                centers[k] = points[sel].mean(axis=0)
            else:
                far = int(np.argmax(nearest))
                centers[k] = points[far]
                nearest[far] = 0.0  # next empty cluster picks another point
    d2 = _sq_dists_to(points, centers)
    assign = np.argmin(d2, axis=1)
    usage = np.bincount(assign, minlength=K).astype(np.int64)
    cb = Codebook(words=centers, usage=usage, wcss_history=history)
    cb.validate()
    return cb


def quantize(latent: np.ndarray, cb: Codebook) -> np.ndarray:
    """Nearest codeword index per position, squared-Euclidean, ties -> lowest."""
    lat = np.asarray(latent, dtype=np.float64)
    if lat.ndim != 3 or lat.shape[2] != cb.ell:
        raise ValueError(f"latent shape {lat.shape} incompatible with ell={cb.ell}")
    hp, wp, _ = lat.shape
    d2 = _sq_dists_to(lat.reshape(-1, cb.ell), cb.words)
    return np.argmin(d2, axis=1).reshape(hp, wp).astype(np.int64)


def distances(latent: np.ndarray, cb: Codebook) -> np.ndarray:
    """Per-position Euclidean (unsquared) distance to the nearest codeword."""
    lat = np.asarray(latent, dtype=np.float64)
    if lat.ndim != 3 or lat.shape[2] != cb.ell:
        raise ValueError(f"latent shape {lat.shape} incompatible with ell={cb.ell}")
    hp, wp, _ = lat.shape
    d2 = _sq_dists_to(lat.reshape(-1, cb.ell), cb.words)
    return np.sqrt(d2.min(axis=1)).reshape(hp, wp)


def lookup(indices: np.ndarray, cb: Codebook) -> np.ndarray:
    """Replace every index with its codeword, yielding an (h', w', ell) grid."""
    idx = np.asarray(indices)
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= cb.K:
        raise ValueError("index out of codebook range")
    return cb.words[idx]


# ----------------- persistence -----------------

def save_codebook(path: str, cb: Codebook) -> None:
    """Write: magic, version u8, K u32, ell u16, codewords f64[], usage u64[] (LE)."""
    cb.validate()
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC)
        fh.write(struct.pack("<BIH", CODEBOOK_VERSION, cb.K, cb.ell))
        fh.write(np.ascontiguousarray(cb.words, dtype="<f8").tobytes())
        fh.write(cb.usage.astype("<u8").tobytes())


def load_codebook(path: str) -> Codebook:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CODEBOOK_MAGIC:
        raise ValueError(f"bad codebook magic {data[:4]!r}")
    version, K, ell = struct.unpack_from("<BIH", data, 4)
    if version != CODEBOOK_VERSION:
        raise ValueError(f"unsupported codebook version {version}")
    off = 4 + struct.calcsize("<BIH")
    need = off + 8 * K * ell + 8 * K
    if len(data) < need:
        raise ValueError("truncated codebook file")
    words = np.frombuffer(data, dtype="<f8", count=K * ell, offset=off).reshape(K, ell)
    usage = np.frombuffer(data, dtype="<u8", count=K, offset=off + 8 * K * ell)
    cb = Codebook(words=words.astype(np.float64), usage=usage.astype(np.int64))
    cb.validate()
    return cb
