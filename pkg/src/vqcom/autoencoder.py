"""Patch-PCA autoencoder: images to an (h', w', ell) latent grid and back.

The encoder splits an image into non-overlapping s x s x c patches and
projects each centered patch onto an orthonormal row basis; the decoder is
the transpose. At full rank (ell = s*s*c) the round trip is exact, which
makes the downstream index pipeline testable against exact oracles.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

BASIS_MAGIC = b"LGPB"
BASIS_VERSION = 1

_ORTHO_TOL = 1e-6


@dataclass
class ProjectionBasis:
    """Orthonormal row basis (ell x s*s*c) plus the patch mean."""

    matrix: np.ndarray
    mean: np.ndarray
    s: int
    channels: int

    @property
    def ell(self) -> int:
        return self.matrix.shape[0]

    @property
    def patch_dim(self) -> int:
        return self.s * self.s * self.channels

    def validate(self) -> None:
        if self.matrix.ndim != 2 or self.mean.ndim != 1:
            raise ValueError("basis matrix must be 2-D and mean 1-D")
        if self.matrix.shape[1] != self.patch_dim or self.mean.size != self.patch_dim:
            raise ValueError(
                f"basis dims {self.matrix.shape} inconsistent with s={self.s}, c={self.channels}"
            )
        if self.ell > self.patch_dim:
            raise ValueError(f"ell={self.ell} exceeds patch dimension {self.patch_dim}")
        gram = self.matrix @ self.matrix.T
        if not np.allclose(gram, np.eye(self.ell), atol=_ORTHO_TOL):
            raise ValueError("basis rows are not orthonormal")


def _to_patches(image: np.ndarray, s: int) -> np.ndarray:
    """(h, w, c) -> (h/s, w/s, s*s*c), patches flattened row-major."""
    h, w, c = image.shape
    if h % s or w % s:
        raise ValueError(f"image {h}x{w} not divisible by s={s}")
    grid = image.reshape(h // s, s, w // s, s, c)
    return grid.transpose(0, 2, 1, 3, 4).reshape(h // s, w // s, s * s * c)


def _from_patches(patches: np.ndarray, s: int, channels: int) -> np.ndarray:
    hp, wp, _ = patches.shape
    grid = patches.reshape(hp, wp, s, s, channels)
    return grid.transpose(0, 2, 1, 3, 4).reshape(hp * s, wp * s, channels)


def encode(image: np.ndarray, basis: ProjectionBasis) -> np.ndarray:
    """Project each centered s x s x c patch onto the basis rows."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError("image must be (h, w, c)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.shape[2] != basis.channels:
        raise ValueError(f"channel mismatch: image c={arr.shape[2]}, basis c={basis.channels}")
    patches = _to_patches(arr, basis.s)
    return (patches - basis.mean) @ basis.matrix.T


def decode(latent: np.ndarray, basis: ProjectionBasis) -> np.ndarray:
    """Map latent vectors back to patches, re-tile, clamp to [0, 1]."""
    lat = np.asarray(latent, dtype=np.float64)
    if lat.ndim != 3 or lat.shape[2] != basis.ell:
        raise ValueError(f"latent shape {lat.shape} incompatible with ell={basis.ell}")
    patches = lat @ basis.matrix + basis.mean
    return np.clip(_from_patches(patches, basis.s, basis.channels), 0.0, 1.0)


def fit_basis(images: list[np.ndarray], s: int, ell: int, seed: int = 0) -> ProjectionBasis:
    """Top-ell principal components of the centered patch population.

    Deterministic: eigenvectors ordered by descending eigenvalue with the
    solver's fixed ordering, signs normalized so each row's largest-magnitude
    entry is positive. The seed is accepted for interface stability; PCA
    itself involves no randomness.
    """
    del seed
    if not images:
        raise ValueError("need at least one training image")
    c = np.asarray(images[0]).shape[2]
    if ell > s * s * c:
        raise ValueError(f"ell={ell} exceeds patch dimension {s * s * c}")
    rows = []
    for img in images:
        arr = np.asarray(img, dtype=np.float64)
        if arr.shape[2] != c:
            raise ValueError("training images disagree on channel count")
        rows.append(_to_patches(arr, s).reshape(-1, s * s * c))
    pop = np.concatenate(rows, axis=0)
    mean = pop.mean(axis=0)
    centered = pop - mean
    cov = centered.T @ centered / max(len(pop), 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:ell]
    matrix = eigvecs[:, order].T.copy()
    # fix the sign ambiguity of eigenvectors
    for row in matrix:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    basis = ProjectionBasis(matrix=matrix, mean=mean, s=s, channels=c)
    basis.validate()
    return basis


# ----------------- persistence -----------------

def save_basis(path: str, basis: ProjectionBasis) -> None:
    """Write: magic, version u8, s u16, c u16, ell u16, mean f64[], matrix f64[] (LE)."""
    basis.validate()
    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC)
        fh.write(struct.pack("<BHHH", BASIS_VERSION, basis.s, basis.channels, basis.ell))
        fh.write(basis.mean.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.matrix, dtype="<f8").tobytes())


def load_basis(path: str) -> ProjectionBasis:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != BASIS_MAGIC:
        raise ValueError(f"bad basis magic {data[:4]!r}")
    version, s, c, ell = struct.unpack_from("<BHHH", data, 4)
    if version != BASIS_VERSION:
        raise ValueError(f"unsupported basis version {version}")
    d = s * s * c
    off = 4 + struct.calcsize("<BHHH")
    need = off + 8 * d * (1 + ell)
    if len(data) < need:
        raise ValueError("truncated basis file")
    mean = np.frombuffer(data, dtype="<f8", count=d, offset=off).astype(np.float64)
    matrix = (
        np.frombuffer(data, dtype="<f8", count=ell * d, offset=off + 8 * d)
        .reshape(ell, d)
        .astype(np.float64)
    )
    basis = ProjectionBasis(matrix=matrix, mean=mean, s=s, channels=c)
    basis.validate()
    return basis
