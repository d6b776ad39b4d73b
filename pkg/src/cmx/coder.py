"""Binary arithmetic coder over 12-bit probabilities.

The coder keeps a 32-bit interval [low, high] and subdivides it per bit:
bit 0 takes the lower part, proportional to P(0) = 1 - p1/4096.  Whenever
low and high share their top byte it is flushed to the output and both
bounds shift left by 8 (the carry-less byte renormalization used by the
PAQ/LPAQ family).  The flush finds the value inside the final interval
with the most trailing zero bytes and emits only its significant prefix;
the decoder reads missing bytes as zero.

Encoder and decoder walk bit-identical (low, high) trajectories when fed
the same probability sequence, which is what makes decoding exact.  The
step functions are numba-compiled and shared between the streaming
classes below and the engine's bulk loops.
"""

import numba as nb
import numpy as np

from .errors import CoderStateError
from .tables import PROB_MAX, PROB_MIN, PROB_SCALE

TOP_MASK = 0xFF000000
FULL_MASK = 0xFFFFFFFF
FLUSH_MAX_BYTES = 4

# A bit coded at the worst allowed probability (1/4096) costs 12 bits, so
# payload can never exceed 12x the coded bit count plus the flush tail.
WORST_BYTES_PER_BIT = 12 // 8 + 1


@nb.njit(cache=True, nogil=True, inline="always")
def encode_step(low, high, bit, p1, out, n_out):
    """Code one bit; returns updated (low, high, n_out)."""
    split = low + (((high - low) * (PROB_SCALE - p1)) >> 12)
    if bit != 0:
        low = split + 1
    else:
        high = split
    while (low ^ high) & TOP_MASK == 0:
        out[n_out] = (low >> 24) & 0xFF
        n_out += 1
        low = (low << 8) & FULL_MASK
        high = ((high << 8) | 0xFF) & FULL_MASK
    return low, high, n_out


@nb.njit(cache=True, nogil=True, inline="always")
def decode_step(low, high, code, p1, payload, pos):
    """Decode one bit; returns (bit, low, high, code, pos).

    Bytes past the end of ``payload`` read as zero, mirroring the
    trailing-zero trimming done by :func:`flush_bytes`.
    """
    split = low + (((high - low) * (PROB_SCALE - p1)) >> 12)
    if code > split:
        bit = 1
        low = split + 1
    else:
        bit = 0
        high = split
    while (low ^ high) & TOP_MASK == 0:
        nxt = np.int64(payload[pos]) if pos < payload.shape[0] else np.int64(0)
        pos += 1
        low = (low << 8) & FULL_MASK
        high = ((high << 8) | 0xFF) & FULL_MASK
        code = ((code << 8) | nxt) & FULL_MASK
    return bit, low, high, code, pos


def init_decoder_code(payload: bytes | np.ndarray) -> tuple[int, int]:
    """First 4 payload bytes as the initial code window (zero-padded)."""
    code = 0
    for i in range(4):
        b = int(payload[i]) if i < len(payload) else 0
        code = (code << 8) | b
    return code, 4


def flush_bytes(low: int, high: int) -> bytes:
    """Terminating bytes: shortest big-endian prefix of some value in
    [low, high] whose remaining bytes are zero (at most 4 bytes)."""
    for n_zero in (4, 3, 2, 1):
        step = 1 << (8 * n_zero)
        v = (low + step - 1) // step * step
        if v <= high:
            return v.to_bytes(4, "big")[: 4 - n_zero]
    return low.to_bytes(4, "big")


def check_prob(p1: int) -> int:
    """Clamp-free validation: the coder is the single enforcement point
    for the [1, 4095] probability range."""
    p1 = int(p1)
    if not PROB_MIN <= p1 <= PROB_MAX:
        raise ValueError(f"probability p1 out of range [1, 4095]: {p1}")
    return p1


class BitEncoder:
    """Streaming encoder: feed (bit, p1) pairs, then flush once."""

    def __init__(self) -> None:
        self.low = 0
        self.high = FULL_MASK
        self._buf = np.empty(64, dtype=np.uint8)
        self._chunks: list[bytes] = []
        self._finished = False

    def encode_bit(self, bit: int, p1: int) -> None:
        if self._finished:
            raise CoderStateError("encoder already flushed")
        p1 = check_prob(p1)
        self.low, self.high, n = encode_step(
            self.low, self.high, 1 if bit else 0, p1, self._buf, 0
        )
        if n:
            self._chunks.append(self._buf[:n].tobytes())

    def flush(self) -> bytes:
        """Terminate the stream and return the complete payload."""
        if self._finished:
            raise CoderStateError("encoder already flushed")
        self._finished = True
        self._chunks.append(flush_bytes(self.low, self.high))
        return b"".join(self._chunks)


class BitDecoder:
    """Streaming decoder over a payload produced by :class:`BitEncoder`.

    Must be driven with the same probability sequence the encoder saw.
    A mismatched sequence yields arbitrary bits but never faults.
    """

    def __init__(self, payload: bytes) -> None:
        self._payload = np.frombuffer(payload, dtype=np.uint8)
        self.low = 0
        self.high = FULL_MASK
        self.code, self._pos = init_decoder_code(self._payload)

    def decode_bit(self, p1: int) -> int:
        p1 = check_prob(p1)
        bit, self.low, self.high, self.code, self._pos = decode_step(
            self.low, self.high, self.code, p1, self._payload, self._pos
        )
        return bit
