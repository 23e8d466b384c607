from __future__ import annotations

import numpy as np
import pytest

from vqcom import channel as ch
from vqcom import framing
from vqcom.huffman import table_from_usage
from vqcom.masking import RandomMaskPolicy, random_mask
from vqcom.pipeline import frame_sections, run_channel


def test_crc32_check_value():
    assert ch.crc32_ieee(b"123456789") == 0xCBF43926


def test_packet_wire_round_trip():
    pkt = ch.Packet(seq=7, ptype=ch.PTYPE_INDICES, payload=b"hello")
    back = ch.packet_from_bytes(pkt.to_bytes())
    assert back == pkt
    corrupted = bytearray(pkt.to_bytes())
    corrupted[6] ^= 0xFF
    with pytest.raises(ValueError, match="CRC"):
        ch.packet_from_bytes(bytes(corrupted))


def test_packetize_ceiling_division():
    pkts = ch.packetize(b"", b"", bytes(640), max_payload=105)
    idx = [p for p in pkts if p.ptype == ch.PTYPE_INDICES]
    assert len(idx) == 7
    assert [len(p.payload) for p in idx] == [105] * 6 + [10]


def test_packetize_respects_index_cap():
    # 70 ten-bit indices round to 88 bytes < 105
    pkts = ch.packetize(b"", b"", bytes(640), max_payload=105, index_bits=10)
    idx = [p for p in pkts if p.ptype == ch.PTYPE_INDICES]
    assert all(len(p.payload) <= 88 for p in idx)
    assert len(idx) == -(-640 // 88)
    # 70 twelve-bit indices are exactly 105 bytes, so the cap is max_payload
    pkts = ch.packetize(b"", b"", bytes(640), max_payload=105, index_bits=12)
    idx = [p for p in pkts if p.ptype == ch.PTYPE_INDICES]
    assert len(idx) == 7


def test_packetize_streams_never_mixed():
    pkts = ch.packetize(b"M" * 10, b"C" * 120, b"P" * 300, max_payload=105)
    assert {p.ptype for p in pkts} == {ch.PTYPE_MASK, ch.PTYPE_CONDITION, ch.PTYPE_INDICES}
    assert [p.seq for p in pkts] == list(range(len(pkts)))
    # metadata replicated at head and tail
    assert pkts[0].ptype == ch.PTYPE_MASK and pkts[-1].ptype == ch.PTYPE_MASK
    assert pkts[0].payload == pkts[-1].payload


def test_packetize_edge_cases():
    pkts = ch.packetize(b"M", b"", b"x", max_payload=105)
    assert sum(1 for p in pkts if p.ptype == ch.PTYPE_CONDITION) == 0
    assert [len(p.payload) for p in pkts if p.ptype == ch.PTYPE_INDICES] == [1]
    with pytest.raises(ValueError, match="sequence space"):
        ch.packetize(b"", b"", bytes(70000), max_payload=1)


# ----------------- interleaver -----------------

def make_packets(payloads: list[bytes], ptype=ch.PTYPE_INDICES) -> list[ch.Packet]:
    return [ch.Packet(seq=i, ptype=ptype, payload=p) for i, p in enumerate(payloads)]


def test_interleave_inverse():
    rng = np.random.default_rng(61)
    for _ in range(20):
        payloads = [rng.integers(0, 256, rng.integers(1, 40), dtype=np.uint8).tobytes()
                    for _ in range(rng.integers(1, 9))]
        pkts = make_packets(payloads)
        stream = ch.interleave(pkts)
        bits, erased = ch.deinterleave(stream, set())
        assert not erased.any()
        want = np.unpackbits(np.frombuffer(b"".join(payloads), dtype=np.uint8))
        np.testing.assert_array_equal(bits, want)


def test_interleave_lost_slot_hits_every_rth_bit():
    pkts = make_packets([bytes([0xFF] * 4)] * 4)  # R=4, 128 bits
    stream = ch.interleave(pkts)
    for lost in range(4):
        _, erased = ch.deinterleave(stream, {lost})
        np.testing.assert_array_equal(np.flatnonzero(erased), np.arange(lost, 128, 4))


def test_erasure_accounting():
    # erased logical bits == sum of lost slots' bits, interleaved or not
    rng = np.random.default_rng(62)
    payloads = [rng.integers(0, 256, 11, dtype=np.uint8).tobytes() for _ in range(7)]
    pkts = make_packets(payloads)
    stream = ch.interleave(pkts)
    for lost in ({0}, {1, 5}, {0, 2, 6}):
        _, erased = ch.deinterleave(stream, lost)
        expected = sum(stream.containers[i].size for i in lost)
        assert int(erased.sum()) == expected


# ----------------- transmit -----------------

def build_frame_bytes(hp=16, wp=32, K=64, seed=5, coding="fixed", condition=b""):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, K, (hp, wp))
    pol = RandomMaskPolicy(p=0.25, seed=seed)
    mask = random_mask(hp, wp, pol.p, pol.seed)
    table = table_from_usage(rng.integers(0, 9, K)) if coding == "huffman" else None
    frame = framing.compose(idx, pol, mask, condition, K=K, coding=coding, table=table)
    return framing.serialize(frame), frame, table


def test_transmit_clean_channel_is_identity():
    blob, frame, _ = build_frame_bytes()
    for setup in (1, 2, 3, 4):
        rs = run_channel(blob, ch.ChannelConfig(setup=setup, per=0.0, ber=0.0, seed=1))
        rec = ch.recover_stream(rs)
        np.testing.assert_array_equal(rec.indices, frame.indices)
        np.testing.assert_array_equal(rec.mask, frame.mask)
        assert rec.channel_masked == 0


def test_transmit_full_loss():
    blob, _, _ = build_frame_bytes()
    rs = run_channel(blob, ch.ChannelConfig(setup=3, per=1.0, seed=1))
    assert rs.packets_lost == rs.packets_sent
    assert rs.erased.all()
    with pytest.raises(ch.HeaderLossError):
        ch.recover_stream(rs)


def test_transmit_loss_count_binomial():
    payloads = [bytes(10)] * 1000
    pkts = make_packets(payloads)
    sigma = np.sqrt(1000 * 0.1 * 0.9)
    outside = 0
    for seed in range(100):
        rs = ch.transmit(pkts, ch.ChannelConfig(setup=3, per=0.1, seed=seed))
        if not (100 - 3 * sigma) <= rs.packets_lost <= (100 + 3 * sigma):
            outside += 1
    assert outside <= 1


def test_transmit_deterministic():
    blob, _, _ = build_frame_bytes()
    cfg = ch.ChannelConfig(setup=3, per=0.3, seed=77)
    r1 = run_channel(blob, cfg)
    r2 = run_channel(blob, cfg)
    assert r1.data == r2.data
    np.testing.assert_array_equal(r1.erased, r2.erased)
    assert [p.lost for p in r1.report] == [p.lost for p in r2.report]


def test_bit_noise_delivers_flipped_bits():
    blob, frame, _ = build_frame_bytes()
    rs = run_channel(blob, ch.ChannelConfig(setup=4, ber=0.02, seed=3))
    assert rs.packets_lost == 0
    assert any(p.corrupt for p in rs.report)
    rec = ch.recover_stream(rs)
    assert rec.channel_masked == 0  # flips decode to wrong indices, no mask growth
    assert (rec.indices != frame.indices).sum() > 0


# ----------------- recover_stream mapping -----------------

def test_fixed_mode_one_erased_symbol_masks_one_position():
    blob, frame, _ = build_frame_bytes(hp=4, wp=8, K=64)  # 6 bits/symbol
    skeleton, layout, _ = framing.parse_meta(blob)
    meta, condition, payload = frame_sections(blob)
    data = condition + payload
    erased = np.zeros(8 * len(data), dtype=bool)
    # erase exactly the bits of symbol 5 (row 0, col 5)
    erased[5 * 6 : 6 * 6] = True
    rs = ch.ReceivedStream(meta=meta, data=data, erased=erased, report=[])
    rec = ch.recover_stream(rs)
    assert rec.channel_masked == (0 if frame.mask[0, 5] else 1)
    grown = rec.mask.astype(int) - frame.mask.astype(int)
    assert grown.sum() == rec.channel_masked
    if rec.channel_masked:
        assert grown[0, 5] == 1
    # every other transmitted position decodes exactly
    keep = (rec.mask == 0)
    np.testing.assert_array_equal(rec.indices[keep], frame.indices[keep])


def test_huffman_mode_erasure_masks_whole_row():
    blob, frame, table = build_frame_bytes(hp=6, wp=8, K=32, coding="huffman")
    skeleton, layout, offsets = framing.parse_meta(blob, table)
    meta, condition, payload = frame_sections(blob, table)
    data = condition + payload
    erased = np.zeros(8 * len(data), dtype=bool)
    # hit one bit inside row 5's byte range
    row5_bit = 8 * (len(condition) + offsets[5]) + 3
    erased[row5_bit] = True
    rs = ch.ReceivedStream(meta=meta, data=data, erased=erased, report=[])
    rec = ch.recover_stream(rs, table)
    assert rec.mask[5].all()
    np.testing.assert_array_equal(rec.mask[:5], frame.mask[:5])
    keep = (rec.mask == 0)
    np.testing.assert_array_equal(rec.indices[keep], frame.indices[keep])


def test_condition_survives_clean_and_flags_damage():
    blob, frame, _ = build_frame_bytes(condition=b"caption goes here")
    meta, condition, payload = frame_sections(blob)
    data = condition + payload
    erased = np.zeros(8 * len(data), dtype=bool)
    rs = ch.ReceivedStream(meta=meta, data=data, erased=erased, report=[])
    rec = ch.recover_stream(rs)
    assert rec.condition == b"caption goes here"
    assert not rec.condition_damaged
    erased[3] = True  # inside the condition block
    rec = ch.recover_stream(ch.ReceivedStream(meta=meta, data=data, erased=erased, report=[]))
    assert rec.condition_damaged


def test_interleaving_disperses_bursts():
    # burst of consecutive lost packets: per-row erased-symbol counts should
    # spread out under interleaving and clump without it
    blob, frame, _ = build_frame_bytes(hp=32, wp=64, K=1024, seed=8)

    def row_variance(interleaved: bool, burst_start: int) -> float:
        meta, condition, payload = frame_sections(blob)
        pkts = ch.packetize(meta, condition, payload, 105, index_bits=10)
        data = [p for p in pkts if p.ptype != ch.PTYPE_MASK]
        n_burst = max(1, len(data) // 10)
        lost = set(range(burst_start, burst_start + n_burst))
        if interleaved:
            stream = ch.interleave(data)
            _, erased = ch.deinterleave(stream, lost)
        else:
            erased = np.zeros(8 * sum(len(p.payload) for p in data), dtype=bool)
            pos = 0
            for i, p in enumerate(data):
                if i in lost:
                    erased[pos : pos + 8 * len(p.payload)] = True
                pos += 8 * len(p.payload)
        sym_er = erased[: 32 * 64 * 10].reshape(32 * 64, 10).any(axis=1)
        per_row = sym_er.reshape(32, 64).sum(axis=1)
        return float(np.var(per_row))

    wins = 0
    for start in range(20):
        if row_variance(True, start) < row_variance(False, start):
            wins += 1
    assert wins >= 19


def test_channel_config_validation():
    with pytest.raises(ValueError):
        ch.ChannelConfig(setup=5)
    with pytest.raises(ValueError):
        ch.ChannelConfig(setup=1, per=1.5)
    assert ch.ChannelConfig(setup=1).interleaved
    assert ch.ChannelConfig(setup=2).bit_noise
    assert not ch.ChannelConfig(setup=3).interleaved
    assert not ch.ChannelConfig(setup=3).bit_noise
