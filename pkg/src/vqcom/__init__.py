"""Codebook-indexed image transmission over lossy packet channels.

Transmitter: patch-PCA encoding, nearest-codeword quantization, policy-driven
masking of the index grid, entropy coding, bit-exact framing. Channel: packet
erasures or bit flips with optional block interleaving. Receiver: frame
interpretation and iterative masked-index recovery with a pluggable denoiser.
"""

from .autoencoder import ProjectionBasis, decode, encode, fit_basis, load_basis, save_basis
from .channel import ChannelConfig, HeaderLossError, Packet, crc32_ieee, packetize, recover_stream, transmit
from .codebook import Codebook, distances, learn_codebook, load_codebook, lookup, quantize, save_codebook
from .denoisers import ContextModelDenoiser, OracleDenoiser, UniformDenoiser, train_context_model
from .framing import Frame, FrameFormatError, apply_mask, bandwidth_bytes, compose, interpret, serialize
from .huffman import HuffmanTable, build_table, table_from_usage
from .masking import (
    DistanceMaskPolicy,
    PatternMaskPolicy,
    RandomMaskPolicy,
    distance_mask,
    mask_stats,
    pattern_mask,
    random_mask,
)
from .metrics import index_accuracy, misclassified, psnr
from .recovery import RecoveryConfig, linear_schedule, renoise, run_recovery, softmax_multinomial

__version__ = "0.1.0"
