"""Iterative masked-index recovery at the receiver.

Received positions are pinned: at every iteration the output grid is the
Hadamard mixture (1 - M) * received + M * predicted, so only masked positions
ever change. Predictions come from a pluggable denoiser that scores all K
codebook indices per position; an index is then drawn per position by
multinomial sampling from the softmaxed scores (never argmax). Early
iterations (i <= tau) re-noise the working grid by splicing back a
t_i-fraction of the initial random grid before evaluating the denoiser; late
iterations evaluate the working grid as-is. The noise ratio schedule runs
from t_1 = 1 down to t_T = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class Denoiser(Protocol):
    """Scores every codebook index per grid position."""

    def evaluate(
        self, indices: np.ndarray, t: float, condition: bytes | None
    ) -> np.ndarray: ...


def linear_schedule(steps: int) -> np.ndarray:
    """Noise ratios t_i = 1 - (i-1)/(T-1) for i = 1..T."""
    if steps < 2:
        raise ValueError("linear schedule needs at least 2 steps")
    return 1.0 - np.arange(steps, dtype=np.float64) / (steps - 1)


@dataclass
class RecoveryConfig:
    """Loop parameters: re-noising boundary tau, total steps, schedule, seed."""

    tau: int
    steps: int
    schedule: np.ndarray | None = None
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 1 <= self.tau <= self.steps:
            raise ValueError(f"tau={self.tau} outside [1, {self.steps}]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.schedule is None:
            self.schedule = (
                np.array([1.0]) if self.steps == 1 else linear_schedule(self.steps)
            )
        sched = np.asarray(self.schedule, dtype=np.float64)
        if sched.size != self.steps:
            raise ValueError("schedule length must equal steps")
        if sched[0] != 1.0:
            raise ValueError("schedule must start at t=1 (full noise)")
        if self.steps > 1 and (sched[-1] != 0.0 or np.any(np.diff(sched) >= 0)):
            raise ValueError("schedule must strictly decrease to t=0")
        self.schedule = sched


@dataclass
class IterationRecord:
    iteration: int
    t: float
    renoised_fraction: float
    grid: np.ndarray


def softmax_multinomial(
    scores: np.ndarray, temperature: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw one index per position from softmax(scores / temperature).

    Inverse-CDF sampling with one uniform draw per position, consumed in
    row-major order, so results are reproducible for a given generator state.
    """
    sc = np.asarray(scores, dtype=np.float64)
    if sc.ndim != 3:
        raise ValueError("scores must be (h', w', K)")
    if not np.all(np.isfinite(sc)):
        raise ValueError("scores contain non-finite values")
    z = sc / temperature
    z -= z.max(axis=-1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=-1, keepdims=True)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(sc.shape[:2])
    drawn = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(drawn, sc.shape[2] - 1).astype(np.int64)


def renoise(
    grid: np.ndarray, t: float, noise_base: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Replace round(t * m) uniformly chosen positions with the initial noise grid."""
    g = np.asarray(grid)
    nb = np.asarray(noise_base)
    if g.shape != nb.shape:
        raise ValueError(f"shape mismatch: grid {g.shape}, noise {nb.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"noise ratio t={t} outside [0, 1]")
    m = g.size
    n = int(round(t * m))
    if n == 0:
        return g.copy()
    out = g.ravel().copy()
    picks = rng.choice(m, size=n, replace=False)
    out[picks] = nb.ravel()[picks]
    return out.reshape(g.shape)


def recovery_step(
    received: np.ndarray,
    mask: np.ndarray,
    prev: np.ndarray,
    i: int,
    cfg: RecoveryConfig,
    denoiser: Denoiser,
    noise_base: np.ndarray,
    rng: np.random.Generator,
    condition: bytes | None = None,
) -> np.ndarray:
    """One iteration (2 <= i <= T): predict, then re-pin received positions."""
    if not 2 <= i <= cfg.steps:
        raise ValueError(f"iteration {i} outside [2, {cfg.steps}]")
    t = float(cfg.schedule[i - 1])
    model_in = renoise(prev, t, noise_base, rng) if i <= cfg.tau else prev
    scores = denoiser.evaluate(model_in, t, condition)
    predicted = softmax_multinomial(scores, cfg.temperature, rng)
    return np.where(mask == 1, predicted, received)


def run_recovery(
    received: np.ndarray,
    mask: np.ndarray,
    K: int,
    cfg: RecoveryConfig,
    denoiser: Denoiser,
    condition: bytes | None = None,
) -> tuple[np.ndarray, list[IterationRecord]]:
    """Full loop: start from a uniformly random grid at the masked positions,
    iterate recovery_step for i = 2..T, return the final grid and the trace."""
    base = np.asarray(received, dtype=np.int64)
    m = np.asarray(mask, dtype=np.int64)
    if base.shape != m.shape:
        raise ValueError(f"shape mismatch: indices {base.shape}, mask {m.shape}")
    rng = np.random.default_rng(cfg.seed)
    noise_base = rng.integers(0, K, size=base.shape, dtype=np.int64)
    grid = np.where(m == 1, noise_base, base)
    trace = [IterationRecord(1, float(cfg.schedule[0]), 1.0, grid.copy())]
    for i in range(2, cfg.steps + 1):
        grid = recovery_step(base, m, grid, i, cfg, denoiser, noise_base, rng, condition)
        t = float(cfg.schedule[i - 1])
        frac = round(t * grid.size) / grid.size if i <= cfg.tau else 0.0
        trace.append(IterationRecord(i, t, frac, grid.copy()))
    return grid, trace


def trace_rows(
    trace: list[IterationRecord], truth: np.ndarray | None = None
) -> list[dict]:
    """Per-iteration CSV rows: iteration, t, misclassified, renoised fraction."""
    rows = []
    for rec in trace:
        misses = (
            int((rec.grid != truth).sum()) if truth is not None else ""
        )
        rows.append(
            {
                "iteration": rec.iteration,
                "t": rec.t,
                "misclassified_count": misses,
                "masked_fraction_renoised": rec.renoised_fraction,
            }
        )
    return rows
