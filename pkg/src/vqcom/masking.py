"""Transmitter-side masking policies over the index grid.

Three policies produce a binary mask M (1 = position dropped and later
regenerated at the receiver):

- random: independent Bernoulli(p) per position from a shared seed, so the
  descriptor on the wire is just (seed, p).
- pattern: a pre-agreed fixed pattern selected by id; pattern 0 masks
  positions whose row and column are both even (a quarter of the grid).
- distance: data-dependent selection from the quantization distance map,
  either everything below/above a threshold eta or the n smallest/largest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POLICY_RANDOM = 0
POLICY_PATTERN = 1
POLICY_DISTANCE = 2


@dataclass(frozen=True)
class RandomMaskPolicy:
    p: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} outside [0, 1]")
        # keep p on the wire grid (1e-4 steps) so both ends draw the same mask
        object.__setattr__(self, "p", round(self.p * 10000) / 10000.0)


@dataclass(frozen=True)
class PatternMaskPolicy:
    pattern_id: int = 0


@dataclass(frozen=True)
class DistanceMaskPolicy:
    mode: str = "lowest"          # "lowest" | "highest"
    eta: float | None = None
    top_n: int | None = None

    def __post_init__(self):
        if self.mode not in ("lowest", "highest"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.eta is None) == (self.top_n is None):
            raise ValueError("exactly one of eta / top_n must be set")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be >= 0")


MaskPolicy = RandomMaskPolicy | PatternMaskPolicy | DistanceMaskPolicy


def random_mask(hp: int, wp: int, p: float, seed: int) -> np.ndarray:
    """Bernoulli(p) mask; deterministic for a given seed (the wire descriptor)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    return (rng.random((hp, wp)) < p).astype(np.uint8)


def pattern_mask(hp: int, wp: int, pattern_id: int = 0) -> np.ndarray:
    """Pre-agreed fixed mask pattern; pattern 0 = row and column both even."""
    if pattern_id != 0:
        raise ValueError(f"unknown pattern_id {pattern_id}")
    rows = (np.arange(hp) % 2 == 0)[:, None]
    cols = (np.arange(wp) % 2 == 0)[None, :]
    return (rows & cols).astype(np.uint8)


def distance_mask(dist: np.ndarray, policy: DistanceMaskPolicy) -> np.ndarray:
    """Mask positions selected from the distance map by threshold or count."""
    d = np.asarray(dist, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise ValueError("distance grid contains non-finite values")
    mask = np.zeros(d.shape, dtype=np.uint8)
    if policy.eta is not None:
        if policy.mode == "lowest":
            mask[d < policy.eta] = 1
        else:
            mask[d > policy.eta] = 1
        return mask
    n = int(policy.top_n)
    if n > d.size:
        raise ValueError(f"top_n={n} exceeds grid size {d.size}")
    flat = d.ravel()
    key = flat if policy.mode == "lowest" else -flat
    order = np.argsort(key, kind="stable")  # ties resolve in row-major order
    mask.ravel()[order[:n]] = 1
    return mask


def mask_for_policy(
    policy: MaskPolicy, hp: int, wp: int, dist: np.ndarray | None = None
) -> np.ndarray:
    """Build the mask a policy describes (distance policies need the map)."""
    if isinstance(policy, RandomMaskPolicy):
        return random_mask(hp, wp, policy.p, policy.seed)
    if isinstance(policy, PatternMaskPolicy):
        return pattern_mask(hp, wp, policy.pattern_id)
    if isinstance(policy, DistanceMaskPolicy):
        if dist is None:
            raise ValueError("distance policy requires the distance grid")
        return distance_mask(dist, policy)
    raise TypeError(f"unknown policy {policy!r}")


def mask_stats(mask: np.ndarray) -> tuple[int, float]:
    """(number of masked positions, masked fraction)."""
    m = np.asarray(mask)
    count = int(m.sum())
    return count, count / m.size
