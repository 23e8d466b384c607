from __future__ import annotations

import csv

import numpy as np
import pytest

from vqcom.masking import RandomMaskPolicy
from vqcom.metrics import (
    CSV_COLUMNS,
    SweepCell,
    index_accuracy,
    misclassified,
    psnr,
    run_cell,
    sweep,
    write_csv,
)


def test_misclassified_counts():
    a = np.array([[1, 2], [3, 4]])
    assert misclassified(a, a) == 0
    assert misclassified(np.zeros((3, 3)), np.ones((3, 3))) == 9
    b = a.copy()
    b[0, 1] = 9
    assert misclassified(a, b) == 1
    with pytest.raises(ValueError):
        misclassified(a, np.zeros((1, 2)))


def test_accuracy_complements_misclassified():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 4, (6, 6))
    b = rng.integers(0, 4, (6, 6))
    assert index_accuracy(a, b) == 1.0 - misclassified(a, b) / 36


def test_psnr_values():
    x = np.zeros((4, 4, 1))
    assert psnr(x, x) == 99.0  # identical images hit the cap
    assert psnr(x, np.ones((4, 4, 1))) == pytest.approx(0.0)
    y = x.copy()
    y[:2] = 0.5  # half the pixels differ by 0.5 -> MSE = 0.125
    assert psnr(x, y) == pytest.approx(10 * np.log10(8), abs=1e-9)


def test_psnr_symmetric_and_validates():
    rng = np.random.default_rng(2)
    a, b = rng.random((5, 5, 1)), rng.random((5, 5, 1))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ValueError):
        psnr(a, rng.random((4, 4, 1)))


def one_cell(denoiser="oracle", per=0.0, setup=3, tau=2, steps=4):
    return SweepCell(
        policy=RandomMaskPolicy(p=0.25, seed=3), tau=tau, steps=steps,
        setup=setup, per=per, denoiser=denoiser,
    )


def test_single_cell_produces_row(trained_models):
    models, test_images = trained_models
    rec = run_cell(0, one_cell(), test_images[:2], models, base_seed=5)
    assert rec.error is None
    row = rec.csv_row()
    assert set(row) == set(CSV_COLUMNS)
    assert row["policy"] == "random" and row["tau"] == 2 and row["T"] == 4


def test_oracle_noiseless_cell_hits_full_accuracy(trained_models):
    models, test_images = trained_models
    rec = run_cell(0, one_cell("oracle", per=0.0), test_images[:3], models, base_seed=5)
    assert rec.accuracy == 1.0
    assert rec.final_misclassified == 0
    assert rec.psnr_db == 99.0  # identical to the pure quantized reconstruction


def metric_fields(row: dict) -> dict:
    return {k: v for k, v in row.items() if k != "seconds_total"}


def test_sweep_sorted_and_deterministic(trained_models):
    models, test_images = trained_models
    cells = [one_cell(per=0.1), one_cell(per=0.0), one_cell(per=0.05)]
    r1 = sweep(cells, test_images[:2], models, base_seed=9)
    r2 = sweep(cells, test_images[:2], models, base_seed=9)
    assert [r.cell.per for r in r1] == [0.0, 0.05, 0.1]
    for a, b in zip(r1, r2):
        assert metric_fields(a.csv_row()) == metric_fields(b.csv_row())


def test_sweep_parallel_matches_serial(trained_models):
    models, test_images = trained_models
    cells = [one_cell(per=0.0), one_cell(per=0.2)]
    serial = sweep(cells, test_images[:2], models, base_seed=3, jobs=1)
    parallel = sweep(cells, test_images[:2], models, base_seed=3, jobs=2)
    for a, b in zip(serial, parallel):
        assert metric_fields(a.csv_row()) == metric_fields(b.csv_row())


def test_failed_cell_is_flagged_not_fatal(trained_models):
    models, test_images = trained_models
    bad = one_cell("context")
    bad.denoiser = "no-such-denoiser"
    records = sweep([one_cell("oracle"), bad], test_images[:1], models)
    errors = [r for r in records if r.error]
    assert len(errors) == 1
    row = errors[0].csv_row()
    assert row["index_accuracy"] == "" and row["psnr_db"] == ""


def test_write_csv(tmp_path, trained_models):
    models, test_images = trained_models
    records = sweep([one_cell("uniform")], test_images[:1], models)
    path = tmp_path / "sweep.csv"
    write_csv(str(path), records)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert list(rows[0].keys()) == CSV_COLUMNS
    assert float(rows[0]["index_accuracy"]) <= 1.0
