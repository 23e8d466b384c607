from __future__ import annotations

import numpy as np
import pytest

from vqcom.autoencoder import encode, fit_basis
from vqcom.codebook import learn_codebook, quantize
from vqcom.denoisers import train_context_model
from vqcom.pipeline import Models
from vqcom.synthetic import texture_corpus


@pytest.fixture(scope="session")
def small_models() -> Models:
    """Basis + codebook fitted on a small texture corpus (64x64, s=8, K=32)."""
    corpus = texture_corpus(40, 64, 64, seed=101)
    basis = fit_basis(corpus, s=8, ell=16, seed=0)
    latents = [encode(im, basis) for im in corpus]
    cb = learn_codebook(latents, K=32, iters=12, seed=0)
    return Models(basis=basis, codebook=cb)


@pytest.fixture(scope="session")
def trained_models() -> tuple[Models, list[np.ndarray]]:
    """Models including a context denoiser, plus held-out test images."""
    corpus = texture_corpus(260, 96, 96, seed=77)
    train, test = corpus[:200], corpus[200:]
    basis = fit_basis(train, s=8, ell=16, seed=0)
    latents = [encode(im, basis) for im in train]
    cb = learn_codebook(latents, K=32, iters=12, seed=0)
    grids = [quantize(lat, cb) for lat in latents]
    context = train_context_model(grids, K=cb.K, alpha=0.25)
    return Models(basis=basis, codebook=cb, context=context), test
