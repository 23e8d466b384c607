"""Canonical Huffman coding over integer symbol alphabets.

Tables are canonical (codes assigned by (length, symbol) order), so a table
is fully described by its per-symbol code lengths. Tree construction breaks
weight ties by node creation order with leaves ordered by symbol id, which
makes the lengths deterministic. A single-symbol alphabet degenerates to a
1-bit code.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass
class HuffmanTable:
    """Canonical code lengths per symbol; 0 marks a symbol with no code."""

    lengths: np.ndarray  # (alphabet,) uint8

    @property
    def alphabet(self) -> int:
        return self.lengths.size

    def kraft_sum(self) -> float:
        ls = self.lengths[self.lengths > 0].astype(np.float64)
        return float(np.sum(2.0 ** -ls))

    def codes(self) -> dict[int, tuple[int, int]]:
        """symbol -> (code value, code length), canonical order."""
        coded = [(int(l), s) for s, l in enumerate(self.lengths) if l > 0]
        coded.sort()
        out: dict[int, tuple[int, int]] = {}
        code = 0
        prev = coded[0][0] if coded else 0
        for length, sym in coded:
            code <<= length - prev
            out[sym] = (code, length)
            code += 1
            prev = length
        return out


def build_table(freqs: np.ndarray | list[int]) -> HuffmanTable:
    """Length-optimal prefix code for the given symbol frequencies.

    Zero-frequency symbols receive no code. Fewer than two nonzero symbols
    falls back to a degenerate 1-bit code for the single present symbol
    (or symbol 0 when all counts are zero).
    """
    f = np.asarray(freqs, dtype=np.int64)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("freqs must be a non-empty 1-D array")
    if np.any(f < 0):
        raise ValueError("negative frequency")
    lengths = np.zeros(f.size, dtype=np.uint8)
    present = np.flatnonzero(f > 0)
    if present.size == 0:
        lengths[0] = 1
        return HuffmanTable(lengths=lengths)
    if present.size == 1:
        lengths[present[0]] = 1
        return HuffmanTable(lengths=lengths)
    # heap entries: (weight, creation order, leaf symbols)
    heap: list[tuple[int, int, list[int]]] = [
        (int(f[s]), int(s), [int(s)]) for s in present
    ]
    heapq.heapify(heap)
    order = f.size
    depth = np.zeros(f.size, dtype=np.int64)
    while len(heap) > 1:
        w1, _, s1 = heapq.heappop(heap)
        w2, _, s2 = heapq.heappop(heap)
        for s in s1 + s2:
            depth[s] += 1
        heapq.heappush(heap, (w1 + w2, order, s1 + s2))
        order += 1
    lengths[present] = depth[present]
    return HuffmanTable(lengths=lengths.astype(np.uint8))


def table_from_usage(usage: np.ndarray) -> HuffmanTable:
    """Global table from a training usage histogram with +1 smoothing.

    Every symbol gets a code, so any message over the alphabet is encodable;
    both ends derive the identical table from the shared histogram.
    """
    return build_table(np.asarray(usage, dtype=np.int64) + 1)


def encode_symbols(symbols: np.ndarray | list[int], table: HuffmanTable) -> tuple[bytes, int]:
    """Encode a symbol sequence; returns (bytes, bit length). MSB-first packing."""
    codes = table.codes()
    bits: list[int] = []
    for s in np.asarray(symbols, dtype=np.int64).ravel():
        try:
            code, length = codes[int(s)]
        except KeyError:
            raise ValueError(f"symbol {int(s)} has no code") from None
        bits.extend((code >> (length - 1 - i)) & 1 for i in range(length))
    nbits = len(bits)
    if nbits == 0:
        return b"", 0
    arr = np.array(bits, dtype=np.uint8)
    return np.packbits(arr).tobytes(), nbits


def decode_symbols(data: bytes, nbits: int, count: int, table: HuffmanTable) -> np.ndarray:
    """Decode `count` symbols from an MSB-first bitstream of `nbits` bits."""
    decoder = {(length, code): sym for sym, (code, length) in table.codes().items()}
    max_len = int(table.lengths.max(initial=0))
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:nbits]
    out = np.empty(count, dtype=np.int64)
    pos = 0
    for i in range(count):
        code = 0
        length = 0
        while True:
            if pos >= nbits or length > max_len:
                raise ValueError("bitstream exhausted or invalid code")
            code = (code << 1) | int(bits[pos])
            pos += 1
            length += 1
            sym = decoder.get((length, code))
            if sym is not None:
                out[i] = sym
                break
    return out


def expected_bits(freqs: np.ndarray, table: HuffmanTable) -> float:
    """Average code length in bits per symbol under the given frequencies."""
    f = np.asarray(freqs, dtype=np.float64)
    total = f.sum()
    if total == 0:
        return 0.0
    return float(np.sum(f * table.lengths.astype(np.float64)) / total)
