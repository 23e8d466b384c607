"""Reference denoisers for the recovery loop.

These are deliberately small stand-ins for a learned index predictor: an
oracle (one-hot on the ground truth, for end-to-end ceiling tests), a uniform
scorer (chance baseline), and a trainable 4-neighbor context model with
Laplace smoothing and an optional condition-keyed class prior. None of them
condition on the noise ratio t; the argument is accepted and ignored.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

CONTEXT_MAGIC = b"LGCM"
CONTEXT_VERSION = 1

DIRECTIONS = ("up", "down", "left", "right")
# offset of the neighbor relative to the center, (drow, dcol)
_OFFSETS = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}


def condition_hash(condition: bytes | None) -> int:
    """16-bit key for the condition-class prior table."""
    if not condition:
        return 0
    return zlib.crc32(condition) & 0xFFFF


@dataclass
class OracleDenoiser:
    """Scores `sharpness` on the true index and 0 elsewhere."""

    truth: np.ndarray
    K: int | None = None
    sharpness: float = 1000.0

    def evaluate(self, indices, t, condition=None) -> np.ndarray:
        del t, condition
        truth = np.asarray(self.truth, dtype=np.int64)
        if np.asarray(indices).shape != truth.shape:
            raise ValueError("index grid shape differs from the oracle truth")
        K = self.K if self.K is not None else int(truth.max(initial=0)) + 1
        hp, wp = truth.shape
        scores = np.zeros((hp, wp, K), dtype=np.float64)
        rows, cols = np.mgrid[0:hp, 0:wp]
        scores[rows, cols, truth] = self.sharpness
        return scores


@dataclass
class UniformDenoiser:
    """Equal score for every index: multinomial sampling becomes uniform."""

    K: int

    def evaluate(self, indices, t, condition=None) -> np.ndarray:
        del t, condition
        hp, wp = np.asarray(indices).shape
        return np.zeros((hp, wp, self.K))


@dataclass
class ContextModelDenoiser:
    """4-neighbor conditional count model with Laplace smoothing.

    log-score(v) at a position = log P(v) + sum over present neighbors d of
    log P(neighbor value | center = v), all probabilities Laplace-smoothed
    with constant alpha. When trained with conditions, a class prior keyed by
    a 16-bit hash of the condition is added on top.
    """

    K: int
    alpha: float = 1.0
    unigram: np.ndarray = None
    counts: dict = None
    class_priors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.unigram is None:
            self.unigram = np.zeros(self.K, dtype=np.int64)
        if self.counts is None:
            self.counts = {d: np.zeros((self.K, self.K), dtype=np.int64) for d in DIRECTIONS}
        self._log_tables = None

    def _prepare(self):
        """Cache the smoothed log-probability tables."""
        uni = self.unigram.astype(np.float64)
        log_uni = np.log((uni + self.alpha) / (uni.sum() + self.K * self.alpha))
        log_cond = {}
        for d in DIRECTIONS:
            c = self.counts[d].astype(np.float64)
            row = c.sum(axis=1, keepdims=True)
            log_cond[d] = np.log((c + self.alpha) / (row + self.K * self.alpha))
        log_cls = {}
        for key, cnt in self.class_priors.items():
            cf = cnt.astype(np.float64)
            log_cls[key] = np.log((cf + self.alpha) / (cf.sum() + self.K * self.alpha))
        self._log_tables = (log_uni, log_cond, log_cls)

    def evaluate(self, indices, t, condition=None) -> np.ndarray:
        del t
        grid = np.asarray(indices, dtype=np.int64)
        if grid.min(initial=0) < 0 or grid.max(initial=0) >= self.K:
            raise ValueError("index out of range for the context model")
        if self._log_tables is None:
            self._prepare()
        log_uni, log_cond, log_cls = self._log_tables
        hp, wp = grid.shape
        scores = np.broadcast_to(log_uni, (hp, wp, self.K)).copy()
        for d, (dr, dc) in _OFFSETS.items():
            # rows/cols of centers whose d-neighbor lies inside the grid
            r_lo, r_hi = max(0, -dr), hp - max(0, dr)
            c_lo, c_hi = max(0, -dc), wp - max(0, dc)
            if r_lo >= r_hi or c_lo >= c_hi:
                continue
            neighbor = grid[r_lo + dr : r_hi + dr, c_lo + dc : c_hi + dc]
            # log P(neighbor | center=v) for all v: gather column `neighbor`
            scores[r_lo:r_hi, c_lo:c_hi, :] += log_cond[d].T[neighbor]
        if self.class_priors and condition is not None:
            key = condition_hash(condition)
            if key in log_cls:
                scores += log_cls[key]
        return scores


def train_context_model(
    corpus: list[np.ndarray],
    K: int,
    conditions: list[bytes] | None = None,
    alpha: float = 1.0,
) -> ContextModelDenoiser:
    """Accumulate neighbor and unigram counts over a corpus of index grids."""
    if not corpus:
        raise ValueError("training corpus is empty")
    if conditions is not None and len(conditions) != len(corpus):
        raise ValueError("conditions must pair 1:1 with corpus grids")
    model = ContextModelDenoiser(K=K, alpha=alpha)
    for gi, g in enumerate(corpus):
        grid = np.asarray(g, dtype=np.int64)
        if grid.min(initial=0) < 0 or grid.max(initial=0) >= K:
            raise ValueError("corpus grid has indices outside [0, K)")
        model.unigram += np.bincount(grid.ravel(), minlength=K)
        for d, (dr, dc) in _OFFSETS.items():
            hp, wp = grid.shape
            r_lo, r_hi = max(0, -dr), hp - max(0, dr)
            c_lo, c_hi = max(0, -dc), wp - max(0, dc)
            if r_lo >= r_hi or c_lo >= c_hi:
                continue
            centers = grid[r_lo:r_hi, c_lo:c_hi].ravel()
            neighbors = grid[r_lo + dr : r_hi + dr, c_lo + dc : c_hi + dc].ravel()
            np.add.at(model.counts[d], (centers, neighbors), 1)
        if conditions is not None:
            key = condition_hash(conditions[gi])
            if key not in model.class_priors:
                model.class_priors[key] = np.zeros(K, dtype=np.int64)
            model.class_priors[key] += np.bincount(grid.ravel(), minlength=K)
    model._log_tables = None
    return model


# ----------------- persistence -----------------

def save_context_model(path: str, model: ContextModelDenoiser) -> None:
    """Write: magic, version u8, K u32, alpha f64, unigram u64[K],
    four direction tables u64[K*K], then the condition-class section."""
    with open(path, "wb") as fh:
        fh.write(CONTEXT_MAGIC)
        fh.write(struct.pack("<BId", CONTEXT_VERSION, model.K, model.alpha))
        fh.write(model.unigram.astype("<u8").tobytes())
        for d in DIRECTIONS:
            fh.write(model.counts[d].astype("<u8").tobytes())
        fh.write(struct.pack("<H", len(model.class_priors)))
        for key in sorted(model.class_priors):
            fh.write(struct.pack("<H", key))
            fh.write(model.class_priors[key].astype("<u8").tobytes())


def load_context_model(path: str) -> ContextModelDenoiser:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CONTEXT_MAGIC:
        raise ValueError(f"bad context-model magic {data[:4]!r}")
    version, K, alpha = struct.unpack_from("<BId", data, 4)
    if version != CONTEXT_VERSION:
        raise ValueError(f"unsupported context-model version {version}")
    off = 4 + struct.calcsize("<BId")
    unigram = np.frombuffer(data, dtype="<u8", count=K, offset=off).astype(np.int64)
    off += 8 * K
    counts = {}
    for d in DIRECTIONS:
        counts[d] = (
            np.frombuffer(data, dtype="<u8", count=K * K, offset=off)
            .reshape(K, K)
            .astype(np.int64)
        )
        off += 8 * K * K
    (n_cls,) = struct.unpack_from("<H", data, off)
    off += 2
    priors = {}
    for _ in range(n_cls):
        (key,) = struct.unpack_from("<H", data, off)
        off += 2
        priors[key] = np.frombuffer(data, dtype="<u8", count=K, offset=off).astype(np.int64)
        off += 8 * K
    return ContextModelDenoiser(
        K=K, alpha=alpha, unigram=unigram, counts=counts, class_priors=priors
    )
