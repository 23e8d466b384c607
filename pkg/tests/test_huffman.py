from __future__ import annotations

import numpy as np
import pytest

from vqcom.huffman import (
    HuffmanTable,
    build_table,
    decode_symbols,
    encode_symbols,
    expected_bits,
    table_from_usage,
)


def test_classic_three_symbol_lengths():
    table = build_table([2, 1, 1])
    assert list(table.lengths) == [1, 2, 2]


def test_uniform_four_symbols_balanced():
    table = build_table([5, 5, 5, 5])
    assert list(table.lengths) == [2, 2, 2, 2]


def test_kraft_equality_for_dyadic_frequencies():
    # dyadic distribution -> optimal code hits Kraft equality exactly
    table = build_table([8, 4, 2, 1, 1])
    assert table.kraft_sum() == pytest.approx(1.0)
    table = build_table([1] * 16)
    assert table.kraft_sum() == pytest.approx(1.0)


def test_kraft_inequality_always():
    rng = np.random.default_rng(31)
    for _ in range(50):
        freqs = rng.integers(0, 100, size=rng.integers(2, 40))
        if (freqs > 0).sum() < 2:
            continue
        assert build_table(freqs).kraft_sum() <= 1.0 + 1e-12


def test_codes_are_prefix_free():
    table = build_table([7, 1, 2, 9, 4, 4])
    codes = table.codes()
    items = [format(c, f"0{l}b") for c, l in codes.values()]
    for i, a in enumerate(items):
        for j, b in enumerate(items):
            if i != j:
                assert not b.startswith(a)


def test_round_trip_random_sequences():
    rng = np.random.default_rng(32)
    for _ in range(200):
        K = int(rng.integers(2, 50))
        freqs = rng.integers(0, 30, size=K)
        freqs[rng.integers(K)] += 1
        freqs[rng.integers(K)] += 1
        table = build_table(freqs)
        present = np.flatnonzero(table.lengths > 0)
        seq = rng.choice(present, size=rng.integers(0, 64))
        data, nbits = encode_symbols(seq, table)
        out = decode_symbols(data, nbits, len(seq), table)
        np.testing.assert_array_equal(out, seq)


def test_degenerate_single_symbol():
    table = build_table([0, 9, 0])
    assert list(table.lengths) == [0, 1, 0]
    data, nbits = encode_symbols([1, 1, 1], table)
    assert nbits == 3
    np.testing.assert_array_equal(decode_symbols(data, nbits, 3, table), [1, 1, 1])


def test_uncovered_symbol_raises():
    table = build_table([3, 3, 0])
    with pytest.raises(ValueError):
        encode_symbols([2], table)


def test_table_from_usage_covers_all_symbols():
    table = table_from_usage(np.array([100, 0, 0, 5]))
    assert (table.lengths > 0).all()


def test_expected_length_beats_fixed_on_skewed_data():
    rng = np.random.default_rng(33)
    K = 16
    for _ in range(10):
        weights = rng.zipf(2.0, size=K).astype(np.int64)
        table = build_table(weights)
        assert expected_bits(weights, table) <= 4.0 + 1e-12  # fixed needs 4 bits
    # and strictly better for a very skewed distribution
    skew = np.array([1000, 1, 1, 1, 1, 1, 1, 1])
    assert expected_bits(skew, build_table(skew)) < 3.0


def test_deterministic_tie_breaking():
    t1 = build_table([4, 4, 4, 4, 4])
    t2 = build_table([4, 4, 4, 4, 4])
    assert np.array_equal(t1.lengths, t2.lengths)


def test_build_table_validation():
    with pytest.raises(ValueError):
        build_table([])
    with pytest.raises(ValueError):
        build_table([-1, 3])
    # all-zero counts degenerate to a 1-bit code on symbol 0
    table = build_table([0, 0, 0])
    assert list(table.lengths) == [1, 0, 0]
