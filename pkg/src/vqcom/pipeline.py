"""End-to-end glue: transmitter path, channel, receiver path.

Everything here is a thin composition of the owning modules so the CLI and
the sweep harness share one code path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import framing
from .autoencoder import ProjectionBasis, decode, encode
from .codebook import Codebook, distances, lookup, quantize
from .denoisers import ContextModelDenoiser, OracleDenoiser, UniformDenoiser
from .huffman import HuffmanTable, table_from_usage
from .masking import DistanceMaskPolicy, MaskPolicy, mask_for_policy
from .recovery import RecoveryConfig, run_recovery


@dataclass
class Models:
    """Pre-shared transmitter/receiver state."""

    basis: ProjectionBasis
    codebook: Codebook
    context: ContextModelDenoiser | None = None

    @property
    def table(self) -> HuffmanTable:
        # both ends derive the shared entropy-coding table from the usage
        # histogram that ships inside the codebook file
        return table_from_usage(self.codebook.usage)


@dataclass
class FrameOptions:
    coding: str = "fixed"            # "fixed" | "huffman"
    erase: bool = False
    per_message_table: bool = False


@dataclass
class SendResult:
    frame: framing.Frame
    frame_bytes: bytes
    truth: np.ndarray                # transmitter-side quantized grid
    mask: np.ndarray
    seconds: float


def send(
    image: np.ndarray,
    policy: MaskPolicy,
    models: Models,
    options: FrameOptions | None = None,
    condition: bytes = b"",
) -> SendResult:
    """Transmitter path: encode, quantize, mask, compose, serialize."""
    opts = options or FrameOptions()
    t0 = time.perf_counter()
    latent = encode(image, models.basis)
    truth = quantize(latent, models.codebook)
    hp, wp = truth.shape
    dist = None
    if isinstance(policy, DistanceMaskPolicy):
        dist = distances(latent, models.codebook)
    mask = mask_for_policy(policy, hp, wp, dist)
    frame = framing.compose(
        truth,
        policy,
        mask,
        condition,
        K=models.codebook.K,
        coding=opts.coding,
        erase=opts.erase,
        least_probable=models.codebook.least_probable,
        table=models.table if opts.coding == "huffman" else None,
        per_message_table=opts.per_message_table,
    )
    blob = framing.serialize(frame)
    return SendResult(
        frame=frame, frame_bytes=blob, truth=truth, mask=mask,
        seconds=time.perf_counter() - t0,
    )


def frame_sections(frame_bytes: bytes, table: HuffmanTable | None = None):
    """(meta, condition, payload) byte sections of a serialized frame."""
    _, layout, _ = framing.parse_meta(frame_bytes, table)
    meta = frame_bytes[: layout.meta_end]
    condition = frame_bytes[layout.condition_start : layout.condition_end]
    payload = frame_bytes[layout.payload_start : layout.payload_end]
    return meta, condition, payload


def run_channel(
    frame_bytes: bytes,
    cfg: ch.ChannelConfig,
    table: HuffmanTable | None = None,
    max_payload: int = ch.DEFAULT_MAX_PAYLOAD,
) -> ch.ReceivedStream:
    """Packetize a serialized frame and push it through the channel."""
    skeleton, _, _ = framing.parse_meta(frame_bytes, table)
    meta, condition, payload = frame_sections(frame_bytes, table)
    bits = framing.fixed_bits(skeleton.K) if skeleton.coding == "fixed" else None
    packets = ch.packetize(meta, condition, payload, max_payload, index_bits=bits)
    return ch.transmit(packets, cfg)


def make_denoiser(name: str, models: Models, truth: np.ndarray | None = None):
    if name == "oracle":
        if truth is None:
            raise ValueError("oracle denoiser needs the ground-truth grid")
        return OracleDenoiser(truth=truth, K=models.codebook.K)
    if name == "uniform":
        return UniformDenoiser(K=models.codebook.K)
    if name == "context":
        if models.context is None:
            raise ValueError("context denoiser requested but no model trained")
        return models.context
    raise ValueError(f"unknown denoiser {name!r}")


@dataclass
class ReceiveResult:
    image: np.ndarray
    indices: np.ndarray
    mask: np.ndarray                 # mask actually used (possibly channel-grown)
    condition: bytes
    trace: list = field(default_factory=list)
    channel_masked: int = 0
    seconds: float = 0.0


def receive_frame(
    recovered: ch.RecoveredFrame | framing.Frame,
    models: Models,
    rcfg: RecoveryConfig,
    denoiser,
) -> ReceiveResult:
    """Receiver path from an interpreted/recovered frame to an image."""
    t0 = time.perf_counter()
    is_recovered = isinstance(recovered, ch.RecoveredFrame)
    mask = recovered.mask
    indices = recovered.indices
    condition = recovered.condition
    final, trace = run_recovery(
        indices, mask, models.codebook.K, rcfg, denoiser, condition or None
    )
    image = decode(lookup(final, models.codebook), models.basis)
    return ReceiveResult(
        image=image, indices=final, mask=mask, condition=condition, trace=trace,
        channel_masked=recovered.channel_masked if is_recovered else 0,
        seconds=time.perf_counter() - t0,
    )


def receive_bytes(
    frame_bytes: bytes,
    models: Models,
    rcfg: RecoveryConfig,
    denoiser,
) -> ReceiveResult:
    """Receiver path for a frame that skipped the channel."""
    table = models.table
    frame = framing.interpret(frame_bytes, table)
    return receive_frame(frame, models, rcfg, denoiser)


def vq_reconstruction(image: np.ndarray, models: Models) -> np.ndarray:
    """Quality ceiling: decode(lookup(quantize(encode(x)))) with no channel."""
    latent = encode(image, models.basis)
    return decode(lookup(quantize(latent, models.codebook), models.codebook), models.basis)
