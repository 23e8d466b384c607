from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from vqcom.cli import main
from vqcom.images import read_image, write_image
from vqcom.pipeline import vq_reconstruction
from vqcom.synthetic import texture_corpus


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Fitted model files plus a test image, shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main([
        "fit", "--synthetic", "40", "--size", "64", "-s", "8", "--ell", "16",
        "-K", "32", "--iters", "10", "--seed", "3",
        "--out-dir", str(root / "models"),
    ]) == 0
    img = texture_corpus(1, 64, 64, seed=55)[0]
    write_image(str(root / "test.pgm"), img)
    return root


def model_args(root: Path) -> list[str]:
    return [
        "--basis", str(root / "models" / "basis.lgpb"),
        "--codebook", str(root / "models" / "codebook.lgcb"),
    ]


def test_send_recv_oracle_matches_vq_reconstruction(workspace):
    root = workspace
    rc = main([
        "send", str(root / "test.pgm"), *model_args(root),
        "--policy", "random", "--p", "0.25", "--seed", "5",
        "--truth-out", str(root / "truth.npy"), "-o", str(root / "frame.lggm"),
    ])
    assert rc == 0
    rc = main([
        "recv", str(root / "frame.lggm"), *model_args(root),
        "--tau", "2", "--T", "4", "--denoiser", "oracle",
        "--truth", str(root / "truth.npy"), "--seed", "9",
        "-o", str(root / "out.pgm"),
    ])
    assert rc == 0
    from vqcom.autoencoder import load_basis
    from vqcom.codebook import load_codebook
    from vqcom.pipeline import Models

    models = Models(
        basis=load_basis(str(root / "models" / "basis.lgpb")),
        codebook=load_codebook(str(root / "models" / "codebook.lgcb")),
    )
    image = read_image(str(root / "test.pgm"))
    ceiling = vq_reconstruction(image, models)
    got = read_image(str(root / "out.pgm"))
    # both images pass through the same PGM write quantization
    assert np.abs(got - ceiling).max() <= 0.5 / 255 + 1e-12


def test_channel_and_recv_with_loss(workspace):
    root = workspace
    rc = main([
        "channel", str(root / "frame.lggm"), *model_args(root),
        "--setup", "1", "--per", "0.15", "--seed", "4",
        "--report", str(root / "delivery.csv"), "-o", str(root / "rx.npz"),
    ])
    assert rc == 0
    with open(root / "delivery.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["setup"] == "1"
    assert int(rows[0]["packets_sent"]) >= 3
    rc = main([
        "recv", str(root / "rx.npz"), *model_args(root),
        "--context", str(root / "models" / "context.lgcm"),
        "--tau", "4", "--T", "8", "--denoiser", "context", "--seed", "2",
        "--trace", str(root / "trace.csv"), "-o", str(root / "out2.pgm"),
    ])
    assert rc == 0
    assert (root / "out2.pgm").exists()
    with open(root / "trace.csv") as fh:
        trace = list(csv.DictReader(fh))
    assert len(trace) == 8


def test_total_loss_exits_with_channel_code(workspace):
    root = workspace
    assert main([
        "channel", str(root / "frame.lggm"), *model_args(root),
        "--setup", "3", "--per", "1.0", "--seed", "1", "-o", str(root / "dead.npz"),
    ]) == 0
    rc = main([
        "recv", str(root / "dead.npz"), *model_args(root),
        "--tau", "1", "--T", "2", "--denoiser", "uniform", "--seed", "1",
        "-o", str(root / "dead.pgm"),
    ])
    assert rc == 4


def test_format_error_exit_code(workspace, tmp_path):
    root = workspace
    bad = tmp_path / "bad.lggm"
    bad.write_bytes(b"NOTAFRAME")
    rc = main([
        "recv", str(bad), *model_args(root),
        "--tau", "1", "--T", "2", "--denoiser", "uniform", "-o", str(tmp_path / "x.pgm"),
    ])
    assert rc == 3


def test_usage_error_exit_codes(workspace):
    root = workspace
    # oracle without truth
    rc = main([
        "recv", str(root / "frame.lggm"), *model_args(root),
        "--tau", "1", "--T", "2", "--denoiser", "oracle", "-o", "x.pgm",
    ])
    assert rc == 2
    # bit-noise setup with huffman coding
    rc = main([
        "send", str(root / "test.pgm"), *model_args(root),
        "--coding", "huffman", "--seed", "1", "-o", str(root / "hf.lggm"),
    ])
    assert rc == 0
    rc = main([
        "channel", str(root / "hf.lggm"), *model_args(root),
        "--setup", "2", "--ber", "0.01", "-o", str(root / "hf.npz"),
    ])
    assert rc == 2


def test_eval_and_sweep(workspace, tmp_path):
    root = workspace
    out_csv = tmp_path / "eval.csv"
    rc = main([
        "eval", str(root / "test.pgm"), str(root / "out.pgm"), "-o", str(out_csv),
    ])
    assert rc == 0
    with open(out_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and float(rows[0]["psnr_db"]) > 5.0
    config = tmp_path / "sweep.ini"
    config.write_text(
        "[corpus]\nsynthetic = 30\nsize = 64\nseed = 11\ntrain = 24\n"
        "[models]\ns = 8\nell = 16\nK = 16\niters = 8\nalpha = 0.5\n"
        "[grid]\npolicy = random\np = 0.25\nsteps = 2/4, 4/8\nsetup = 3\n"
        "per = 0.0, 0.1\ndenoiser = context\n"
        "[output]\nimages = 2\n"
    )
    sweep_csv = tmp_path / "sweep.csv"
    rc = main(["sweep", str(config), "-o", str(sweep_csv), "--jobs", "2"])
    assert rc == 0
    with open(sweep_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert all(r["index_accuracy"] != "" for r in rows)
