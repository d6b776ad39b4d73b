"""Engine: history -> model predictions -> mix -> code/update, per bit.

The engine owns the full model state and drives every byte MSB-first
through the ensemble.  In ``Mode.ADAPTIVE`` the counters and mixer train
on each observed bit; in ``Mode.FROZEN`` history still advances (so
context follows the data) but no counter or weight changes.  The ideal
code length sum(-log2 p(actual bit)) accumulates in 1/65536-bit units and
is the C(.) used for compression distances: it is free of header and
flush quantization, and it is exactly reproducible because the per-bit
costs come from an integer table.

Stream format (bit-exact)::

    "CMX1" | version 0x01 | config digest (8) | original length (8, LE)
           | payload | CRC32 (4, LE, over all preceding bytes)

Snapshot format::

    "CMSN" | version 0x01 | config JSON length (4, LE) | config JSON
           | pos (8) | prev byte (1) | word hash (8) | match ptr (8)
           | match len (8) | cost accumulator (8)     (all LE)
           | mixer weights (int32 LE) | counter tables (uint32 LE)
           | match counters (uint32 LE) | match positions (uint32 LE)
           | history ring (65536) | CRC32 (4, LE, over all preceding)

Snapshots are immutable, byte-aligned state copies; any number of engines
may be hydrated from one snapshot concurrently.
"""

from __future__ import annotations

import enum
import hashlib
import struct
import zlib
from dataclasses import dataclass

import numba as nb
import numpy as np

from .coder import FULL_MASK, decode_step, encode_step, flush_bytes, init_decoder_code
from .config import DEFAULT_CONFIG, HISTORY_BYTES, MATCH_COUNTERS, EngineConfig
from .errors import (
    BadMagicError,
    BadVersionError,
    ConfigMismatchError,
    CrcError,
    SnapshotCrcError,
    SnapshotFormatError,
    SnapshotMagicError,
    SnapshotVersionError,
    TruncatedStreamError,
)
from .mixer import initial_weights, mix, train
from .models import (
    C_CHK_MASK,
    C_LR,
    C_MATCH_MASK,
    C_MIN_LEN,
    C_N,
    C_N_HASHED,
    C_N_MODELS,
    C_TABLE_MASK,
    C_USE_MATCH,
    C_USE_WORD,
    R_BITPOS,
    R_C0,
    R_COST,
    R_MATCH_LEN,
    R_MATCH_PTR,
    R_MIDX,
    R_MPRED,
    R_N,
    R_POS,
    R_PREV,
    advance_bit,
    hashed_predict,
    hashed_update,
    match_predict,
    match_update,
    refresh_bases,
    slot_hash,
)
from .tables import COST, PROB_SCALE, SQUASH, STRETCH

STREAM_MAGIC = b"CMX1"
STREAM_VERSION = 1
STREAM_HEADER_LEN = 4 + 1 + 8 + 8
SNAPSHOT_MAGIC = b"CMSN"
SNAPSHOT_VERSION = 1

# A bit coded at the worst probability (1/4096) costs 12 bits, so payload
# never exceeds 12 bytes per input byte plus the flush tail.
MAX_EXPANSION = 12


class Mode(enum.Enum):
    ADAPTIVE = "adaptive"
    FROZEN = "frozen"


# ---------------------------------------------------------------------------
# per-bit pipeline kernels

@nb.njit(cache=True, nogil=True, inline="always")
def _predict(st, stretch_tab, squash_tab):
    """All models predict, then the mixer combines: the probability the
    coder must use for the bit about to be processed."""
    tables, match_cnt, match_pos, ring, weights, regs, hctx, slot_idx, slot_chk, sts, orders, cfg = st
    c0 = regs[R_C0]
    n_hashed = cfg[C_N_HASHED]
    for m in range(n_hashed):
        h = slot_hash(hctx[1 + m], c0)
        idx = np.int64(h & np.uint64(cfg[C_TABLE_MASK]))
        chk = np.int64((h >> 48) & np.uint64(cfg[C_CHK_MASK]))
        slot_idx[m] = idx
        slot_chk[m] = chk
        sts[m] = stretch_tab[hashed_predict(tables, m, idx, chk)]
    if cfg[C_USE_MATCH] != 0:
        sts[n_hashed] = stretch_tab[match_predict(match_cnt, ring, regs)]
    return mix(weights, regs[R_PREV], sts, cfg[C_N_MODELS], squash_tab)


@nb.njit(cache=True, nogil=True, inline="always")
def _update(st, bit, p_mix):
    """Adaptive-mode learning step for the bit just processed."""
    tables, match_cnt, match_pos, ring, weights, regs, hctx, slot_idx, slot_chk, sts, orders, cfg = st
    err = (bit << 12) - p_mix
    train(weights, regs[R_PREV], sts, cfg[C_N_MODELS], err, cfg[C_LR])
    for m in range(cfg[C_N_HASHED]):
        hashed_update(tables, m, slot_idx[m], slot_chk[m], bit)
    if cfg[C_USE_MATCH] != 0:
        match_update(match_cnt, regs, bit)


@nb.njit(cache=True, nogil=True, inline="always")
def _advance(st, bit):
    tables, match_cnt, match_pos, ring, weights, regs, hctx, slot_idx, slot_chk, sts, orders, cfg = st
    advance_bit(ring, match_pos, regs, hctx, orders, cfg, bit)


@nb.njit(cache=True, nogil=True)
def _process_one(st, stretch_tab, squash_tab, cost_tab, bit, adaptive):
    regs = st[5]
    p = _predict(st, stretch_tab, squash_tab)
    if adaptive:
        regs[R_COST] += cost_tab[p] if bit != 0 else cost_tab[PROB_SCALE - p]
        _update(st, bit, p)
    _advance(st, bit)
    return p


@nb.njit(cache=True, nogil=True)
def _compress_loop(data, st, stretch_tab, squash_tab, cost_tab, out, low, high, n_out):
    regs = st[5]
    for i in range(data.shape[0]):
        byte = np.int64(data[i])
        for k in range(7, -1, -1):
            bit = (byte >> k) & 1
            p = _predict(st, stretch_tab, squash_tab)
            low, high, n_out = encode_step(low, high, bit, p, out, n_out)
            regs[R_COST] += cost_tab[p] if bit != 0 else cost_tab[PROB_SCALE - p]
            _update(st, bit, p)
            _advance(st, bit)
    return low, high, n_out


@nb.njit(cache=True, nogil=True)
def _decompress_loop(payload, n_bytes, st, stretch_tab, squash_tab, cost_tab, out,
                     low, high, code, pos):
    regs = st[5]
    for i in range(n_bytes):
        byte = np.int64(0)
        for _ in range(8):
            p = _predict(st, stretch_tab, squash_tab)
            bit, low, high, code, pos = decode_step(low, high, code, p, payload, pos)
            regs[R_COST] += cost_tab[p] if bit != 0 else cost_tab[PROB_SCALE - p]
            _update(st, bit, p)
            _advance(st, bit)
            byte = (byte << 1) | bit
        out[i] = byte
    return low, high, code, pos


@nb.njit(cache=True, nogil=True)
def _measure_loop(data, st, stretch_tab, squash_tab, cost_tab):
    """Adaptive pass accumulating ideal code length, without coding."""
    regs = st[5]
    for i in range(data.shape[0]):
        byte = np.int64(data[i])
        for k in range(7, -1, -1):
            bit = (byte >> k) & 1
            p = _predict(st, stretch_tab, squash_tab)
            regs[R_COST] += cost_tab[p] if bit != 0 else cost_tab[PROB_SCALE - p]
            _update(st, bit, p)
            _advance(st, bit)


@nb.njit(cache=True, nogil=True)
def _frozen_feed_loop(data, st):
    """History-only pass: no prediction mixing, no learning.

    The match model still needs its per-bit predicted-bit bookkeeping so
    matches break exactly as they would during prediction.
    """
    tables, match_cnt, match_pos, ring, weights, regs, hctx, slot_idx, slot_chk, sts, orders, cfg = st
    for i in range(data.shape[0]):
        byte = np.int64(data[i])
        for k in range(7, -1, -1):
            bit = (byte >> k) & 1
            if cfg[C_USE_MATCH] != 0:
                match_predict(match_cnt, ring, regs)
            advance_bit(ring, match_pos, regs, hctx, orders, cfg, bit)


# ---------------------------------------------------------------------------
# snapshot

@dataclass(frozen=True)
class ModelSnapshot:
    """Complete, immutable engine state at a byte boundary.

    Arrays are read-only; hydrating an engine copies them, so one
    snapshot can back any number of engines concurrently.
    """

    config: EngineConfig
    tables: np.ndarray
    match_cnt: np.ndarray
    match_pos: np.ndarray
    ring: np.ndarray
    weights: np.ndarray
    pos: int
    prev_byte: int
    word_hash: int
    match_ptr: int
    match_len: int
    cost_units: int

    @property
    def cost_bits(self) -> float:
        """Accumulated ideal code length in bits."""
        return self.cost_units / 65536.0

    def learned_digest(self) -> str:
        """Hex digest over learned state only (counters and weights).

        History (ring, positions, match pointer) is excluded: frozen-mode
        operations advance history but must leave this digest unchanged.
        """
        h = hashlib.sha256()
        h.update(self.tables.astype("<u4").tobytes())
        h.update(self.match_cnt.astype("<u4").tobytes())
        h.update(self.weights.astype("<i4").tobytes())
        return h.hexdigest()

    def save(self) -> bytes:
        cfg_json = self.config.to_json().encode("ascii")
        parts = [
            SNAPSHOT_MAGIC,
            struct.pack("<B", SNAPSHOT_VERSION),
            struct.pack("<I", len(cfg_json)),
            cfg_json,
            struct.pack(
                "<QBQQQQ",
                self.pos,
                self.prev_byte,
                self.word_hash,
                self.match_ptr,
                self.match_len,
                self.cost_units,
            ),
            self.weights.astype("<i4").tobytes(),
            self.tables.astype("<u4").tobytes(),
            self.match_cnt.astype("<u4").tobytes(),
            self.match_pos.astype("<u4").tobytes(),
            self.ring.tobytes(),
        ]
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def load(cls, blob: bytes) -> "ModelSnapshot":
        if len(blob) < 4 or blob[:4] != SNAPSHOT_MAGIC:
            raise SnapshotMagicError("not a model snapshot (bad magic)")
        if len(blob) < 13:
            raise SnapshotFormatError("snapshot too short")
        version = blob[4]
        if version != SNAPSHOT_VERSION:
            raise SnapshotVersionError(f"unsupported snapshot version {version}")
        crc_stored = struct.unpack("<I", blob[-4:])[0]
        if zlib.crc32(blob[:-4]) != crc_stored:
            raise SnapshotCrcError("snapshot checksum mismatch")
        off = 5
        (cfg_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        config = EngineConfig.from_json(blob[off : off + cfg_len].decode("ascii"))
        off += cfg_len
        pos, prev_byte, word_hash, match_ptr, match_len, cost_units = struct.unpack_from(
            "<QBQQQQ", blob, off
        )
        off += struct.calcsize("<QBQQQQ")

        def take(dtype, count, shape=None):
            nonlocal off
            a = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
            off += a.nbytes
            return a if shape is None else a.reshape(shape)

        n_hashed = config.n_hashed
        weights = take("<i4", 256 * config.n_models, (256, config.n_models))
        tables = take("<u4", n_hashed * (1 << config.table_bits),
                      (n_hashed, 1 << config.table_bits))
        match_cnt = take("<u4", MATCH_COUNTERS)
        match_pos = take("<u4", 1 << config.match_table_bits)
        ring = take(np.uint8, HISTORY_BYTES)
        if off != len(blob) - 4:
            raise SnapshotFormatError("snapshot size does not match its config")
        return cls(
            config=config,
            tables=tables,
            match_cnt=match_cnt,
            match_pos=match_pos,
            ring=ring,
            weights=weights,
            pos=pos,
            prev_byte=prev_byte,
            word_hash=word_hash,
            match_ptr=match_ptr,
            match_len=match_len,
            cost_units=cost_units,
        )


# ---------------------------------------------------------------------------
# engine

class Engine:
    """Single-threaded context-mixing engine; see the module docstring.

    Instances may move between threads but must not be shared; hydrate a
    private engine per worker from a shared :class:`ModelSnapshot`.
    """

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or DEFAULT_CONFIG
        c = self.config
        n_hashed = c.n_hashed
        self._tables = np.zeros((n_hashed, 1 << c.table_bits), dtype=np.uint32)
        self._match_cnt = np.zeros(MATCH_COUNTERS, dtype=np.uint32)
        self._match_pos = np.zeros(1 << c.match_table_bits, dtype=np.uint32)
        self._ring = np.zeros(HISTORY_BYTES, dtype=np.uint8)
        self._weights = initial_weights(c.n_models)
        self._regs = np.zeros(R_N, dtype=np.int64)
        self._regs[R_C0] = 1
        self._regs[R_MPRED] = -1
        self._regs[R_MIDX] = -1
        self._hctx = np.zeros(1 + n_hashed, dtype=np.uint64)
        self._hctx[0] = np.uint64(0x9AE16A3B2F90404F)
        self._slot_idx = np.zeros(max(n_hashed, 1), dtype=np.int64)
        self._slot_chk = np.zeros(max(n_hashed, 1), dtype=np.int64)
        self._sts = np.zeros(c.n_models, dtype=np.int64)
        self._orders = np.asarray(c.orders, dtype=np.int64)
        cfg = np.zeros(C_N, dtype=np.int64)
        cfg[C_N_HASHED] = n_hashed
        cfg[C_N_MODELS] = c.n_models
        cfg[C_TABLE_MASK] = (1 << c.table_bits) - 1
        cfg[C_CHK_MASK] = (1 << c.checksum_bits) - 1
        cfg[C_USE_WORD] = 1 if c.use_word else 0
        cfg[C_USE_MATCH] = 1 if c.use_match else 0
        cfg[C_MATCH_MASK] = (1 << c.match_table_bits) - 1
        cfg[C_MIN_LEN] = c.match_min_len
        cfg[C_LR] = c.lr_scaled
        self._cfg = cfg
        refresh_bases(self._ring, self._regs, self._hctx, self._orders, self._cfg)

    @classmethod
    def from_snapshot(cls, snap: ModelSnapshot) -> "Engine":
        eng = cls(snap.config)
        np.copyto(eng._tables, snap.tables)
        np.copyto(eng._match_cnt, snap.match_cnt)
        np.copyto(eng._match_pos, snap.match_pos)
        np.copyto(eng._ring, snap.ring)
        np.copyto(eng._weights, snap.weights)
        eng._regs[R_POS] = snap.pos
        eng._regs[R_PREV] = snap.prev_byte
        eng._regs[R_MATCH_PTR] = snap.match_ptr
        eng._regs[R_MATCH_LEN] = snap.match_len
        eng._regs[R_COST] = snap.cost_units
        eng._hctx[0] = np.uint64(snap.word_hash)
        refresh_bases(eng._ring, eng._regs, eng._hctx, eng._orders, eng._cfg)
        return eng

    @property
    def _st(self):
        return (
            self._tables,
            self._match_cnt,
            self._match_pos,
            self._ring,
            self._weights,
            self._regs,
            self._hctx,
            self._slot_idx,
            self._slot_chk,
            self._sts,
            self._orders,
            self._cfg,
        )

    @property
    def cost_units(self) -> int:
        """Accumulated ideal code length, 1/65536-bit units."""
        return int(self._regs[R_COST])

    @property
    def cost_bits(self) -> float:
        return self.cost_units / 65536.0

    @property
    def match_state(self) -> tuple[int, int, int]:
        """(match length, predicted next byte, match pointer); length 0
        means no active match and the predicted byte is meaningless."""
        mlen = int(self._regs[R_MATCH_LEN])
        ptr = int(self._regs[R_MATCH_PTR])
        pred = int(self._ring[ptr & 0xFFFF]) if mlen > 0 else -1
        return mlen, pred, ptr

    def process_bit(self, bit: int, mode: Mode = Mode.ADAPTIVE) -> int:
        """Run one bit through the pipeline; returns the pre-update mixed
        probability (12-bit) that a coder must use for this bit."""
        if bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {bit}")
        return int(
            _process_one(self._st, STRETCH, SQUASH, COST, bit, mode is Mode.ADAPTIVE)
        )

    def compress(self, data: bytes) -> bytes:
        """Adaptively compress ``data``, returning a framed stream."""
        buf = np.frombuffer(data, dtype=np.uint8)
        out = np.empty(MAX_EXPANSION * len(data) + 8, dtype=np.uint8)
        low, high, n_out = _compress_loop(
            buf, self._st, STRETCH, SQUASH, COST, out, 0, FULL_MASK, 0
        )
        payload = out[:n_out].tobytes() + flush_bytes(low, high)
        header = (
            STREAM_MAGIC
            + struct.pack("<B", STREAM_VERSION)
            + self.config.digest()
            + struct.pack("<Q", len(data))
        )
        framed = header + payload
        return framed + struct.pack("<I", zlib.crc32(framed))

    def decompress(self, stream: bytes) -> bytes:
        """Inverse of :meth:`compress`; must start from the same state."""
        payload, orig_len = parse_stream(stream, self.config)
        pbuf = np.frombuffer(payload, dtype=np.uint8)
        out = np.empty(orig_len, dtype=np.uint8)
        code, pos = init_decoder_code(pbuf)
        _decompress_loop(
            pbuf, orig_len, self._st, STRETCH, SQUASH, COST, out, 0, FULL_MASK, code, pos
        )
        return out.tobytes()

    def measure(self, data: bytes) -> int:
        """Adaptive pass over ``data``; returns the ideal code length it
        added, in 1/65536-bit units (no stream is produced)."""
        before = self.cost_units
        _measure_loop(np.frombuffer(data, dtype=np.uint8), self._st, STRETCH, SQUASH, COST)
        return self.cost_units - before

    def feed_frozen(self, data: bytes) -> None:
        """Advance history through ``data`` without any learning."""
        _frozen_feed_loop(np.frombuffer(data, dtype=np.uint8), self._st)

    def snapshot(self) -> ModelSnapshot:
        """Immutable copy of the full engine state (byte-aligned only)."""
        if self._regs[R_BITPOS] != 0:
            raise ValueError("snapshot requires a byte-aligned engine")

        def ro(a):
            b = a.copy()
            b.setflags(write=False)
            return b

        return ModelSnapshot(
            config=self.config,
            tables=ro(self._tables),
            match_cnt=ro(self._match_cnt),
            match_pos=ro(self._match_pos),
            ring=ro(self._ring),
            weights=ro(self._weights),
            pos=int(self._regs[R_POS]),
            prev_byte=int(self._regs[R_PREV]),
            word_hash=int(self._hctx[0]),
            match_ptr=int(self._regs[R_MATCH_PTR]),
            match_len=int(self._regs[R_MATCH_LEN]),
            cost_units=int(self._regs[R_COST]),
        )

    def learned_digest(self) -> str:
        """Digest of counters and weights; see ModelSnapshot.learned_digest."""
        h = hashlib.sha256()
        h.update(self._tables.astype("<u4").tobytes())
        h.update(self._match_cnt.astype("<u4").tobytes())
        h.update(self._weights.astype("<i4").tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# module-level operations

def parse_stream(stream: bytes, config: EngineConfig) -> tuple[bytes, int]:
    """Validate a framed stream; returns (payload, original length)."""
    if len(stream) < 4:
        raise TruncatedStreamError("stream shorter than magic")
    if stream[:4] != STREAM_MAGIC:
        raise BadMagicError("bad magic: not a compressed stream")
    if len(stream) < STREAM_HEADER_LEN + 4:
        raise TruncatedStreamError("stream too short for header and checksum")
    version = stream[4]
    if version != STREAM_VERSION:
        raise BadVersionError(f"unsupported stream version {version}")
    digest = stream[5:13]
    if digest != config.digest():
        raise ConfigMismatchError(
            "stream was produced under a different engine configuration"
        )
    (orig_len,) = struct.unpack_from("<Q", stream, 13)
    (crc_stored,) = struct.unpack("<I", stream[-4:])
    if zlib.crc32(stream[:-4]) != crc_stored:
        raise CrcError("stream checksum mismatch (corrupt or truncated)")
    return stream[STREAM_HEADER_LEN:-4], orig_len


def compress(
    data: bytes,
    *,
    config: EngineConfig | None = None,
    start: ModelSnapshot | None = None,
) -> tuple[bytes, ModelSnapshot]:
    """Compress ``data`` from a fresh engine or from ``start``; returns
    the framed stream and the post-compression snapshot."""
    eng = Engine.from_snapshot(start) if start is not None else Engine(config)
    stream = eng.compress(data)
    return stream, eng.snapshot()


def decompress(
    stream: bytes,
    *,
    config: EngineConfig | None = None,
    start: ModelSnapshot | None = None,
) -> bytes:
    """Decompress a framed stream produced under the same start state."""
    eng = Engine.from_snapshot(start) if start is not None else Engine(config)
    return eng.decompress(stream)


def measure_extra_bits(snapshot: ModelSnapshot, data: bytes) -> int:
    """Ideal code length, in whole bits (rounded up), of compressing
    ``data`` adaptively starting from ``snapshot``.

    This is the compression-delta quantity used for classification; the
    snapshot itself is never modified.
    """
    if len(data) == 0:
        return 0
    eng = Engine.from_snapshot(snapshot)
    units = eng.measure(data)
    return -(-units // 65536)


def save_snapshot(snapshot: ModelSnapshot) -> bytes:
    return snapshot.save()


def load_snapshot(blob: bytes) -> ModelSnapshot:
    return ModelSnapshot.load(blob)
