"""Bit-exact frame format for the transmitted index message.

A frame carries the coded index payload, a mask descriptor the receiver can
expand back into the mask matrix, and an opaque condition byte string. All
multi-byte integers are little-endian. Layout (version 1):

    magic "LGGM" (4) | version u8 | flags u8 | h' u16 | w' u16 | K u32
    mask descriptor: policy u8 + payload
        random(0):   seed u64, p*1e4 u16
        pattern(1):  pattern_id u16
        distance(2): row-major mask bitmap, ceil(h'*w'/8) bytes, MSB-first
    [flags bit3] per-message code lengths, K bytes
    [flags bit0] row table: count u16, then count x u32 payload byte offsets
    payload length u32 (bits)
    [flags bit2] condition block: len u16 + bytes
    payload, ceil(bits/8) bytes

flags: bit0 huffman coding (0 = fixed-length), bit1 erase mode (masked
symbols not transmitted), bit2 condition present, bit3 per-message table.

Fixed-length coding packs each symbol into ceil(log2 K) bits, row-major,
MSB-first. Huffman coding encodes each grid row as its own byte-aligned
bitstream so a channel erasure invalidates only the rows it touches; the row
table gives each row's start offset within the payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .huffman import HuffmanTable, build_table, decode_symbols, encode_symbols
from .masking import (
    POLICY_DISTANCE,
    POLICY_PATTERN,
    POLICY_RANDOM,
    DistanceMaskPolicy,
    MaskPolicy,
    PatternMaskPolicy,
    RandomMaskPolicy,
    pattern_mask,
    random_mask,
)

FRAME_MAGIC = b"LGGM"
FRAME_VERSION = 1

FLAG_HUFFMAN = 0x01
FLAG_ERASE = 0x02
FLAG_CONDITION = 0x04
FLAG_TABLE = 0x08

MAX_CONDITION_BYTES = 65535


class FrameFormatError(ValueError):
    """Malformed frame: bad magic, unsupported version, or truncation."""


@dataclass
class Frame:
    """Composed index message plus everything needed to serialize it."""

    hp: int
    wp: int
    K: int
    coding: str                  # "fixed" | "huffman"
    erase: bool
    policy: MaskPolicy
    mask: np.ndarray             # (h', w') uint8
    indices: np.ndarray          # (h', w') int64; erase-mode holes hold 0
    condition: bytes = b""
    table: HuffmanTable | None = None
    per_message_table: bool = False


def fixed_bits(K: int) -> int:
    """Bits per symbol under fixed-length coding."""
    return max(1, math.ceil(math.log2(K)))


def apply_mask(
    indices: np.ndarray, mask: np.ndarray, mode: str, least_probable: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Apply the mask to the index grid.

    replace: masked positions are overwritten with the least-probable index
    and every position is transmitted. erase: masked positions are dropped
    from the symbol sequence entirely (holes read back as 0).
    Returns (masked grid, row-major transmitted symbol sequence).
    """
    idx = np.asarray(indices, dtype=np.int64)
    m = np.asarray(mask, dtype=np.uint8)
    if idx.shape != m.shape:
        raise ValueError(f"shape mismatch: indices {idx.shape}, mask {m.shape}")
    if mode == "replace":
        out = np.where(m == 1, np.int64(least_probable), idx)
        return out, out.ravel().copy()
    if mode == "erase":
        out = np.where(m == 1, np.int64(0), idx)
        return out, idx[m == 0].copy()
    raise ValueError(f"unknown mask mode {mode!r}")


def compose(
    indices: np.ndarray,
    policy: MaskPolicy,
    mask: np.ndarray,
    condition: bytes = b"",
    *,
    K: int,
    coding: str = "fixed",
    erase: bool = False,
    least_probable: int = 0,
    table: HuffmanTable | None = None,
    per_message_table: bool = False,
) -> Frame:
    """Build a frame from a quantized index grid and a mask policy."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 2:
        raise ValueError("indices must be a 2-D grid")
    hp, wp = idx.shape
    if np.asarray(mask).shape != (hp, wp):
        raise ValueError("mask shape does not match index grid")
    if idx.min(initial=0) < 0 or idx.max(initial=0) >= K:
        raise ValueError("index out of range for K")
    if len(condition) > MAX_CONDITION_BYTES:
        raise ValueError("condition exceeds 65535 bytes")
    if coding not in ("fixed", "huffman"):
        raise ValueError(f"unknown coding {coding!r}")
    if coding == "huffman" and table is None:
        raise ValueError("huffman coding requires a table")
    grid, _ = apply_mask(idx, mask, "erase" if erase else "replace", least_probable)
    return Frame(
        hp=hp, wp=wp, K=K, coding=coding, erase=erase, policy=policy,
        mask=np.asarray(mask, dtype=np.uint8), indices=grid, condition=bytes(condition),
        table=table, per_message_table=per_message_table,
    )


# ----------------- mask descriptor -----------------

def _encode_policy(frame: Frame) -> bytes:
    p = frame.policy
    if isinstance(p, RandomMaskPolicy):
        if not 0 <= p.seed < 2 ** 64:
            raise ValueError("random-mask seed must fit u64")
        return struct.pack("<BQH", POLICY_RANDOM, p.seed, round(p.p * 10000))
    if isinstance(p, PatternMaskPolicy):
        return struct.pack("<BH", POLICY_PATTERN, p.pattern_id)
    if isinstance(p, DistanceMaskPolicy):
        bitmap = np.packbits(frame.mask.ravel().astype(np.uint8))
        return struct.pack("<B", POLICY_DISTANCE) + bitmap.tobytes()
    raise TypeError(f"unknown policy {p!r}")


def _decode_policy(data: bytes, off: int, hp: int, wp: int) -> tuple[MaskPolicy, np.ndarray, int]:
    if off >= len(data):
        raise FrameFormatError("truncated mask descriptor")
    pid = data[off]
    off += 1
    if pid == POLICY_RANDOM:
        if off + 10 > len(data):
            raise FrameFormatError("truncated random-mask descriptor")
        seed, pfp = struct.unpack_from("<QH", data, off)
        policy = RandomMaskPolicy(p=pfp / 10000.0, seed=seed)
        return policy, random_mask(hp, wp, policy.p, policy.seed), off + 10
    if pid == POLICY_PATTERN:
        if off + 2 > len(data):
            raise FrameFormatError("truncated pattern-mask descriptor")
        (pattern_id,) = struct.unpack_from("<H", data, off)
        return PatternMaskPolicy(pattern_id), pattern_mask(hp, wp, pattern_id), off + 2
    if pid == POLICY_DISTANCE:
        nbytes = (hp * wp + 7) // 8
        if off + nbytes > len(data):
            raise FrameFormatError("truncated mask bitmap")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off))
        mask = bits[: hp * wp].reshape(hp, wp).astype(np.uint8)
        return DistanceMaskPolicy(mode="lowest", top_n=int(mask.sum())), mask, off + nbytes
    raise FrameFormatError(f"unknown mask policy id {pid}")


# ----------------- condition blob -----------------

def _encode_condition(condition: bytes) -> bytes:
    """Opaque bytes, stored raw or byte-alphabet Huffman coded (whichever is smaller)."""
    raw = b"\x00" + condition
    freqs = np.bincount(np.frombuffer(condition, dtype=np.uint8), minlength=256)
    table = build_table(freqs)
    coded, nbits = encode_symbols(np.frombuffer(condition, dtype=np.uint8), table)
    present = [(s, int(l)) for s, l in enumerate(table.lengths) if l > 0]
    packed = struct.pack("<HH", len(condition), len(present))
    packed += b"".join(struct.pack("<BB", s, l) for s, l in present)
    packed += struct.pack("<I", nbits) + coded
    huff = b"\x01" + packed
    return huff if len(huff) < len(raw) else raw


def _decode_condition(blob: bytes) -> bytes:
    if not blob:
        return b""
    mode = blob[0]
    if mode == 0:
        return blob[1:]
    if mode != 1:
        raise FrameFormatError(f"unknown condition encoding {mode}")
    raw_len, nsym = struct.unpack_from("<HH", blob, 1)
    off = 5
    lengths = np.zeros(256, dtype=np.uint8)
    for _ in range(nsym):
        s, l = struct.unpack_from("<BB", blob, off)
        lengths[s] = l
        off += 2
    (nbits,) = struct.unpack_from("<I", blob, off)
    off += 4
    syms = decode_symbols(blob[off:], nbits, raw_len, HuffmanTable(lengths=lengths))
    return syms.astype(np.uint8).tobytes()


# ----------------- index payload -----------------

def _transmitted_rows(frame: Frame) -> list[np.ndarray]:
    """Per grid row, the row-major symbols actually transmitted."""
    rows = []
    for r in range(frame.hp):
        if frame.erase:
            rows.append(frame.indices[r][frame.mask[r] == 0])
        else:
            rows.append(frame.indices[r])
    return rows


def encode_indices(frame: Frame) -> tuple[bytes, int, list[int]]:
    """Coded payload for the frame: (bytes, bit length, row byte offsets).

    Fixed mode concatenates ceil(log2 K)-bit symbols with no row table.
    Huffman mode emits one byte-aligned bitstream per row plus its offsets.
    """
    rows = _transmitted_rows(frame)
    if frame.coding == "fixed":
        b = fixed_bits(frame.K)
        symbols = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        nbits = int(symbols.size) * b
        if symbols.size == 0:
            return b"", 0, []
        shifts = np.arange(b - 1, -1, -1)
        bits = ((symbols[:, None] >> shifts) & 1).astype(np.uint8).ravel()
        return np.packbits(bits).tobytes(), nbits, []
    parts: list[bytes] = []
    offsets: list[int] = []
    total = 0
    for row in rows:
        offsets.append(total)
        coded, _ = encode_symbols(row, frame.table)
        parts.append(coded)
        total += len(coded)
    payload = b"".join(parts)
    return payload, 8 * len(payload), offsets


def _decode_fixed(payload: bytes, nbits: int, count: int, K: int) -> np.ndarray:
    b = fixed_bits(K)
    if count * b > nbits:
        raise FrameFormatError("payload shorter than the declared symbol count")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[: count * b]
    weights = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
    return bits.reshape(count, b).astype(np.int64) @ weights


# ----------------- serialize / interpret -----------------

def serialize(frame: Frame) -> bytes:
    """Frame -> wire bytes per the module format."""
    payload, nbits, offsets = encode_indices(frame)
    flags = 0
    if frame.coding == "huffman":
        flags |= FLAG_HUFFMAN
    if frame.erase:
        flags |= FLAG_ERASE
    if frame.condition:
        flags |= FLAG_CONDITION
    if frame.per_message_table:
        flags |= FLAG_TABLE
    out = bytearray()
    out += FRAME_MAGIC
    out += struct.pack("<BBHHI", FRAME_VERSION, flags, frame.hp, frame.wp, frame.K)
    out += _encode_policy(frame)
    if frame.per_message_table:
        if frame.table is None or frame.table.alphabet != frame.K:
            raise ValueError("per-message table missing or wrong alphabet")
        out += frame.table.lengths.astype(np.uint8).tobytes()
    if frame.coding == "huffman":
        out += struct.pack("<H", len(offsets))
        out += b"".join(struct.pack("<I", o) for o in offsets)
    out += struct.pack("<I", nbits)
    if frame.condition:
        blob = _encode_condition(frame.condition)
        out += struct.pack("<H", len(blob)) + blob
    out += payload
    return bytes(out)


@dataclass
class FrameLayout:
    """Byte extents of the serialized sections, used by packetization."""

    meta_end: int          # fixed header + descriptor + tables + paylen
    condition_start: int
    condition_end: int
    payload_start: int
    payload_end: int
    payload_bits: int


def parse_meta(data: bytes, table: HuffmanTable | None = None):
    """Parse everything before the condition block.

    Returns (frame skeleton without indices, layout info dict). The skeleton
    has a zero index grid; interpret() fills it from the payload.
    """
    if len(data) < 14:
        raise FrameFormatError("frame shorter than fixed header")
    if data[:4] != FRAME_MAGIC:
        raise FrameFormatError(f"bad frame magic {data[:4]!r}")
    version, flags, hp, wp, K = struct.unpack_from("<BBHHI", data, 4)
    if version != FRAME_VERSION:
        raise FrameFormatError(f"unsupported frame version {version}")
    off = 14
    policy, mask, off = _decode_policy(data, off, hp, wp)
    per_message = bool(flags & FLAG_TABLE)
    if per_message:
        if off + K > len(data):
            raise FrameFormatError("truncated per-message table")
        lengths = np.frombuffer(data, dtype=np.uint8, count=K, offset=off).copy()
        table = HuffmanTable(lengths=lengths)
        off += K
    offsets: list[int] = []
    coding = "huffman" if flags & FLAG_HUFFMAN else "fixed"
    if coding == "huffman":
        if off + 2 > len(data):
            raise FrameFormatError("truncated row table")
        (cnt,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + 4 * cnt > len(data):
            raise FrameFormatError("truncated row table")
        offsets = list(struct.unpack_from(f"<{cnt}I", data, off)) if cnt else []
        off += 4 * cnt
        if table is None:
            raise FrameFormatError("huffman frame needs the pre-shared table")
    if off + 4 > len(data):
        raise FrameFormatError("truncated payload length")
    (nbits,) = struct.unpack_from("<I", data, off)
    off += 4
    meta_end = off
    cond_start = off
    cond_end = off
    condition_declared = bool(flags & FLAG_CONDITION)
    if condition_declared:
        if off + 2 > len(data):
            raise FrameFormatError("truncated condition block")
        (clen,) = struct.unpack_from("<H", data, off)
        cond_end = off + 2 + clen
        off = cond_end
    payload_start = off
    payload_end = off + (nbits + 7) // 8
    if payload_end > len(data):
        raise FrameFormatError("truncated payload")
    skeleton = Frame(
        hp=hp, wp=wp, K=K, coding=coding, erase=bool(flags & FLAG_ERASE),
        policy=policy, mask=mask, indices=np.zeros((hp, wp), dtype=np.int64),
        condition=b"", table=table, per_message_table=per_message,
    )
    layout = FrameLayout(
        meta_end=meta_end, condition_start=cond_start, condition_end=cond_end,
        payload_start=payload_start, payload_end=payload_end, payload_bits=nbits,
    )
    return skeleton, layout, offsets


def interpret(data: bytes, table: HuffmanTable | None = None) -> Frame:
    """Wire bytes -> Frame; inverse of serialize for intact frames."""
    skeleton, layout, offsets = parse_meta(data, table)
    hp, wp = skeleton.hp, skeleton.wp
    if layout.condition_end > layout.condition_start:
        blob = data[layout.condition_start + 2 : layout.condition_end]
        skeleton.condition = _decode_condition(blob)
    payload = data[layout.payload_start : layout.payload_end]
    grid = np.zeros((hp, wp), dtype=np.int64)
    mask = skeleton.mask
    if skeleton.coding == "fixed":
        count = hp * wp - int(mask.sum()) if skeleton.erase else hp * wp
        symbols = _decode_fixed(payload, layout.payload_bits, count, skeleton.K)
        if skeleton.erase:
            grid[mask == 0] = symbols
        else:
            grid = symbols.reshape(hp, wp)
    else:
        if len(offsets) != hp:
            raise FrameFormatError(f"row table has {len(offsets)} entries for {hp} rows")
        bounds = offsets + [len(payload)]
        for r in range(hp):
            row_bytes = payload[bounds[r] : bounds[r + 1]]
            count = wp - int(mask[r].sum()) if skeleton.erase else wp
            if count == 0:
                continue
            symbols = decode_symbols(row_bytes, 8 * len(row_bytes), count, skeleton.table)
            if skeleton.erase:
                grid[r][mask[r] == 0] = symbols
            else:
                grid[r] = symbols
    if grid.min(initial=0) < 0 or grid.max(initial=0) >= skeleton.K:
        raise FrameFormatError("decoded symbol out of range")
    return replace(skeleton, indices=grid)


def bandwidth_bytes(frame: Frame) -> int:
    """Total serialized size of the frame in bytes."""
    return len(serialize(frame))
