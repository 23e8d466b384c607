"""Lossy packet channel: packetization, CRC-32, block interleaving, impairments.

Four noise setups model a digital link with no error correction:

    1: packet erasures, interleaving on      3: packet erasures, no interleaving
    2: bit flips, interleaving on            4: bit flips, no interleaving

Packet wire layout: seq u16 | ptype u8 | length u16 | payload | crc32 u32,
little-endian, CRC-32/IEEE over everything before it. Payloads default to at
most 105 bytes and index packets additionally carry at most 70 coded indices;
index, condition, and metadata streams are never mixed in one packet.

The frame metadata section is sent as its own packets, replicated at the head
and tail of the transmission so the frame stays parseable under loss; if both
copies of a metadata packet are lost the transfer is unrecoverable. Bit-flip
impairments apply to the data packets (metadata is assumed protected, mirroring
a receiver that knows the session configuration). The block interleaver spreads
each data packet's bits evenly across the whole logical stream: with R data
packets, transmitted slot i carries logical bits i, i+R, i+2R, ... so one lost
packet becomes scattered single-bit erasures instead of a burst.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .framing import FrameFormatError, fixed_bits, parse_meta, _decode_condition

PTYPE_INDICES = 0
PTYPE_CONDITION = 1
PTYPE_MASK = 2

DEFAULT_MAX_PAYLOAD = 105
MAX_INDICES_PER_PACKET = 70


class HeaderLossError(RuntimeError):
    """Both replicas of a metadata packet were lost; frame unrecoverable."""


def crc32_ieee(data: bytes) -> int:
    """CRC-32/IEEE (the zlib polynomial); crc32_ieee(b"123456789") = 0xCBF43926."""
    return zlib.crc32(data) & 0xFFFFFFFF


@dataclass(frozen=True)
class Packet:
    seq: int
    ptype: int
    payload: bytes

    def header_bytes(self) -> bytes:
        return struct.pack("<HBH", self.seq, self.ptype, len(self.payload))

    def crc(self) -> int:
        return crc32_ieee(self.header_bytes() + self.payload)

    def to_bytes(self) -> bytes:
        return self.header_bytes() + self.payload + struct.pack("<I", self.crc())


def packet_from_bytes(data: bytes) -> Packet:
    if len(data) < 9:
        raise ValueError("packet shorter than header + crc")
    seq, ptype, length = struct.unpack_from("<HBH", data, 0)
    payload = data[5 : 5 + length]
    (crc,) = struct.unpack_from("<I", data, 5 + length)
    pkt = Packet(seq=seq, ptype=ptype, payload=payload)
    if pkt.crc() != crc:
        raise ValueError("packet CRC mismatch")
    return pkt


def _split(stream: bytes, cap: int) -> list[bytes]:
    return [stream[i : i + cap] for i in range(0, len(stream), cap)] if stream else []


def packetize(
    meta: bytes,
    condition: bytes,
    payload: bytes,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
    index_bits: int | None = None,
) -> list[Packet]:
    """Split the three frame sections into typed packets.

    Index packets are capped at min(max_payload, 70 indices' worth of coded
    bits rounded up to bytes) when the per-index bit width is known. The
    metadata section is replicated: its packets appear first and again last.
    """
    if max_payload < 1:
        raise ValueError("max_payload must be >= 1")
    index_cap = max_payload
    if index_bits is not None:
        index_cap = min(max_payload, (MAX_INDICES_PER_PACKET * index_bits + 7) // 8)
    meta_chunks = _split(meta, max_payload)
    pieces: list[tuple[int, bytes]] = [(PTYPE_MASK, c) for c in meta_chunks]
    pieces += [(PTYPE_CONDITION, c) for c in _split(condition, max_payload)]
    pieces += [(PTYPE_INDICES, c) for c in _split(payload, index_cap)]
    pieces += [(PTYPE_MASK, c) for c in meta_chunks]  # tail replica
    if len(pieces) > 65536:
        raise ValueError("stream too long for u16 sequence space")
    return [Packet(seq=i, ptype=t, payload=c) for i, (t, c) in enumerate(pieces)]


# ----------------- block interleaver -----------------

@dataclass
class InterleavedStream:
    """Transmitted view of the data packets: slot i holds logical bits i::R."""

    R: int
    containers: list[np.ndarray]
    total_bits: int


def _payload_bits(packets: list[Packet]) -> np.ndarray:
    if not packets:
        return np.zeros(0, dtype=np.uint8)
    raw = b"".join(p.payload for p in packets)
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))


def interleave(packets: list[Packet]) -> InterleavedStream:
    """Spread the packets' concatenated payload bits across R transmitted slots."""
    if not packets:
        raise ValueError("need at least one packet to interleave")
    bits = _payload_bits(packets)
    R = len(packets)
    return InterleavedStream(
        R=R, containers=[bits[i::R].copy() for i in range(R)], total_bits=bits.size
    )


def deinterleave(stream: InterleavedStream, lost: set[int]) -> tuple[np.ndarray, np.ndarray]:
    """Invert the interleaver; bits of lost slots become scattered erasures."""
    bits = np.zeros(stream.total_bits, dtype=np.uint8)
    erased = np.zeros(stream.total_bits, dtype=bool)
    for i, container in enumerate(stream.containers):
        if i in lost:
            erased[i :: stream.R] = True
        else:
            bits[i :: stream.R] = container
    return bits, erased


# ----------------- transmission -----------------

@dataclass(frozen=True)
class ChannelConfig:
    setup: int
    per: float = 0.0
    ber: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.setup not in (1, 2, 3, 4):
            raise ValueError(f"setup must be 1..4, got {self.setup}")
        if not 0.0 <= self.per <= 1.0 or not 0.0 <= self.ber <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def interleaved(self) -> bool:
        return self.setup in (1, 2)

    @property
    def bit_noise(self) -> bool:
        return self.setup in (2, 4)


@dataclass
class PacketReport:
    seq: int
    ptype: int
    payload_bits: int
    lost: bool
    corrupt: bool


@dataclass
class ReceivedStream:
    """Logical data bytes with per-bit erasure flags plus the delivery report."""

    meta: bytes | None
    data: bytes
    erased: np.ndarray           # bool, one flag per data bit
    report: list[PacketReport] = field(default_factory=list)

    @property
    def packets_sent(self) -> int:
        return len(self.report)

    @property
    def packets_lost(self) -> int:
        return sum(1 for r in self.report if r.lost)

    @property
    def bits_erased(self) -> int:
        return int(self.erased.sum())


def transmit(packets: list[Packet], cfg: ChannelConfig) -> ReceivedStream:
    """Run the packets through the configured channel.

    Setups 1/3 lose whole packets with probability per; the metadata replica
    at the tail covers head losses. Setups 2/4 flip each data payload bit with
    probability ber and deliver the packet regardless (CRC marks it corrupt).
    """
    rng = np.random.default_rng(cfg.seed)
    mask_pos = [i for i, p in enumerate(packets) if p.ptype == PTYPE_MASK]
    data_pos = [i for i, p in enumerate(packets) if p.ptype != PTYPE_MASK]
    # packetize() replicates the metadata chunks symmetrically head and tail
    n_meta = len(mask_pos) // 2
    report = [
        PacketReport(p.seq, p.ptype, 8 * len(p.payload), lost=False, corrupt=False)
        for p in packets
    ]
    lost = np.zeros(len(packets), dtype=bool)
    if not cfg.bit_noise and cfg.per > 0:
        lost = rng.random(len(packets)) < cfg.per
        for i, flag in enumerate(lost):
            report[i].lost = bool(flag)
    # metadata: any surviving replica of each chunk suffices
    meta_ok = True
    meta_parts: list[bytes] = []
    for j in range(n_meta):
        head = mask_pos[j]
        tail = mask_pos[n_meta + j] if n_meta + j < len(mask_pos) else head
        if not lost[head]:
            meta_parts.append(packets[head].payload)
        elif not lost[tail]:
            meta_parts.append(packets[tail].payload)
        else:
            meta_ok = False
            break
    # data region: interleaved slots are 1:1 with data packets
    data = [packets[i] for i in data_pos]
    bits = _payload_bits(data)
    N = bits.size
    R = max(len(data), 1)
    erased = np.zeros(N, dtype=bool)
    received = bits.copy()
    start = 0
    for i, (gidx, pkt) in enumerate(zip(data_pos, data)):
        if cfg.interleaved:
            sel = np.arange(i, N, R)
        else:
            sel = np.arange(start, start + 8 * len(pkt.payload))
        start += 8 * len(pkt.payload)
        if lost[gidx]:
            erased[sel] = True
            received[sel] = 0
        elif cfg.bit_noise and cfg.ber > 0:
            flips = rng.random(sel.size) < cfg.ber
            if flips.any():
                received[sel[flips]] ^= 1
                report[gidx].corrupt = True
    data_bytes = np.packbits(received).tobytes()[: (N + 7) // 8] if N else b""
    return ReceivedStream(
        meta=b"".join(meta_parts) if meta_ok else None,
        data=data_bytes,
        erased=erased,
        report=report,
    )


# ----------------- receiver-side stream recovery -----------------

@dataclass
class RecoveredFrame:
    hp: int
    wp: int
    K: int
    coding: str
    erase: bool
    indices: np.ndarray          # decoded grid; unknown positions hold 0
    mask: np.ndarray             # transmitter mask grown by channel erasures
    base_mask: np.ndarray        # the transmitter mask alone
    condition: bytes
    condition_damaged: bool
    channel_masked: int          # positions added to the mask by the channel


def recover_stream(rs: ReceivedStream, table=None) -> RecoveredFrame:
    """Rebuild the index grid from a received stream, growing the mask.

    Fixed-length coding: a symbol overlapping any erased bit turns into a
    masked position; flipped-but-delivered bits decode to (possibly wrong)
    indices with no mask growth. Huffman coding: every grid row whose byte
    range is touched by an erasure is masked wholesale.
    """
    if rs.meta is None:
        raise HeaderLossError("frame metadata unrecoverable (both replicas lost)")
    blob = rs.meta + rs.data
    skeleton, layout, offsets = parse_meta(blob, table)
    hp, wp, K = skeleton.hp, skeleton.wp, skeleton.K
    mask = skeleton.mask.copy()
    grid = np.zeros((hp, wp), dtype=np.int64)
    data_bit0 = 0  # rs.erased indexes bits of the data region only

    def region_erased(byte_lo: int, byte_hi: int) -> np.ndarray:
        lo = (byte_lo - layout.meta_end) * 8 + data_bit0
        hi = (byte_hi - layout.meta_end) * 8 + data_bit0
        return rs.erased[lo:hi]

    condition = b""
    condition_damaged = False
    if layout.condition_end > layout.condition_start:
        if region_erased(layout.condition_start, layout.condition_end).any():
            condition_damaged = True
        else:
            try:
                condition = _decode_condition(
                    blob[layout.condition_start + 2 : layout.condition_end]
                )
            except (FrameFormatError, ValueError):
                condition_damaged = True
    payload = blob[layout.payload_start : layout.payload_end]
    pay_erased = region_erased(layout.payload_start, layout.payload_end)
    if skeleton.coding == "fixed":
        b = fixed_bits(K)
        if skeleton.erase:
            positions = np.flatnonzero(mask.ravel() == 0)
        else:
            positions = np.arange(hp * wp)
        nsym = positions.size
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[: nsym * b]
        weights = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
        symbols = bits.reshape(nsym, b).astype(np.int64) @ weights
        symbols %= K  # flipped high bits may leave the alphabet
        sym_erased = pay_erased[: nsym * b].reshape(nsym, b).any(axis=1)
        flat_mask = mask.ravel()
        flat_grid = grid.ravel()
        flat_grid[positions[~sym_erased]] = symbols[~sym_erased]
        flat_mask[positions[sym_erased]] = 1
        grid = flat_grid.reshape(hp, wp)
        mask = flat_mask.reshape(hp, wp)
    else:
        if len(offsets) != hp:
            raise FrameFormatError(f"row table has {len(offsets)} entries for {hp} rows")
        from .huffman import decode_symbols

        bounds = list(offsets) + [len(payload)]
        for r in range(hp):
            lo, hi = bounds[r], bounds[r + 1]
            count = wp - int(skeleton.mask[r].sum()) if skeleton.erase else wp
            if count == 0:
                continue
            if pay_erased[8 * lo : 8 * hi].any():
                mask[r, :] = 1
                continue
            try:
                symbols = decode_symbols(payload[lo:hi], 8 * (hi - lo), count, skeleton.table)
            except ValueError:
                mask[r, :] = 1
                continue
            if skeleton.erase:
                grid[r][skeleton.mask[r] == 0] = symbols % K
            else:
                grid[r] = symbols % K
    channel_masked = int(mask.sum() - skeleton.mask.sum())
    return RecoveredFrame(
        hp=hp, wp=wp, K=K, coding=skeleton.coding, erase=skeleton.erase,
        indices=grid, mask=mask, base_mask=skeleton.mask, condition=condition,
        condition_damaged=condition_damaged, channel_masked=channel_masked,
    )
