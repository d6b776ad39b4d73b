"""Adaptive context models: hashed byte-order and word contexts plus a
longest-suffix match model.

Every model outputs a 12-bit probability for the next bit.  Hashed models
store adaptive counters in a power-of-two slot table; each slot carries an
8-bit tag derived from the context hash, and a tag mismatch on lookup
means the slot belonged to a different context, so the prediction falls
back to 1/2 and (in adaptive mode) the slot is reclaimed.  The match
model finds the most recent earlier occurrence of the current history
suffix (keyed on its trailing ``match_min_len`` bytes) and predicts the
bits of the byte that followed it, weighted by per-match-length counters.

Counter slots pack into a uint32 as  p (bits 0-11) | hits (12-17) |
tag (18-25);  p == 0 marks a never-used slot, since live probabilities
stay in [1, 4095].

State lives in plain numpy arrays so the hot path can run under numba:

==========  ======================================================
tables      uint32 (n_hashed, 2**table_bits) counter slots
match_cnt   uint32 (128,) counters keyed by (length bucket, pred bit)
match_pos   uint32 (2**match_table_bits,) suffix-hash -> position
ring        uint8 (65536,) history ring buffer
regs        int64 scalar register file (R_* indices below)
hctx        uint64 (1 + n_hashed,) word-run hash + per-model context
            hashes of the committed history
cfg         int64 config registers (C_* indices below)
==========  ======================================================

Bit order is MSB-first within each byte, engine-wide.
"""

import numba as nb
import numpy as np

# regs layout
R_POS = 0        # committed bytes so far
R_BITPOS = 1     # 0..7 within the byte in progress
R_C0 = 2         # partial byte with a leading 1 marker, in [1, 255]
R_PREV = 3       # last committed byte (mixer row selector)
R_MATCH_PTR = 4  # absolute index of the predicted byte (match active)
R_MATCH_LEN = 5  # current match length in bytes, 0 = no match
R_MPRED = 6      # match-predicted bit at this position, -1 = none
R_MIDX = 7       # match counter index used at this position, -1 = none
R_COST = 8       # accumulated ideal code length, 1/65536-bit units
R_N = 9

# cfg layout
C_N_HASHED = 0
C_N_MODELS = 1
C_TABLE_MASK = 2
C_CHK_MASK = 3
C_USE_WORD = 4
C_USE_MATCH = 5
C_MATCH_MASK = 6
C_MIN_LEN = 7
C_LR = 8         # mixer learning rate numerator over 2**16
C_N = 9

RING_MASK = 0xFFFF
MATCH_WINDOW_SLACK = 80   # reject candidates whose tail may be evicted
MATCH_SCAN_CAP = 64       # verification walk bound when acquiring a match

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_FNV = np.uint64(0x100000001B3)
_WORD_SEED = np.uint64(0x9AE16A3B2F90404F)
_MATCH_SEED = np.uint64(0xC2B2AE3D27D4EB4F)
_HISTORY_PAD = np.uint64(0x17F)  # sentinel fed for bytes before the stream


@nb.njit(cache=True, nogil=True, inline="always")
def mix64(h):
    """64-bit avalanche finalizer (multiply-xor-fold)."""
    h ^= h >> 33
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> 33
    h *= np.uint64(0xC4CEB9FE1A85EC53)
    h ^= h >> 33
    return h


@nb.njit(cache=True, nogil=True, inline="always")
def counter_update(p, hits, bit):
    """Move p toward the observed bit at rate 1/min(hits + 1.5, 32).

    The step is at least one probability unit so movement is strict
    except at the clamps.  hits saturates, freezing the late-stage rate.
    """
    den = 2 * hits + 3
    if den > 64:
        den = 64
    if bit != 0:
        d = ((4096 - p) * 2) // den
        if d == 0:
            d = 1
        p += d
        if p > 4095:
            p = 4095
    else:
        d = (p * 2) // den
        if d == 0:
            d = 1
        p -= d
        if p < 1:
            p = 1
    if hits < 63:
        hits += 1
    return p, hits


@nb.njit(cache=True, nogil=True, inline="always")
def slot_hash(base, c0):
    """Per-bit slot hash from a byte-context base and the bit context c0."""
    return mix64(base ^ (np.uint64(c0) * _GOLD))


@nb.njit(cache=True, nogil=True, inline="always")
def hashed_predict(tables, m, idx, chk):
    """Counter probability for model m at a verified slot; fresh -> 2048."""
    v = np.int64(tables[m, idx])
    p = v & 0xFFF
    if p == 0 or ((v >> 18) & 0xFF) != chk:
        p = 2048
    return p


@nb.njit(cache=True, nogil=True, inline="always")
def hashed_update(tables, m, idx, chk, bit):
    """Adapt the slot toward bit, claiming it if empty or mismatched."""
    v = np.int64(tables[m, idx])
    p = v & 0xFFF
    hits = (v >> 12) & 0x3F
    if p == 0 or ((v >> 18) & 0xFF) != chk:
        p = 2048
        hits = 0
    p, hits = counter_update(p, hits, bit)
    tables[m, idx] = np.uint32(p | (hits << 12) | (chk << 18))


@nb.njit(cache=True, nogil=True, inline="always")
def match_predict(match_cnt, ring, regs):
    """Probability from the match model; records which counter fired."""
    mlen = regs[R_MATCH_LEN]
    if mlen <= 0:
        regs[R_MPRED] = -1
        regs[R_MIDX] = -1
        return 2048
    pb = np.int64(ring[regs[R_MATCH_PTR] & RING_MASK])
    pred = (pb >> (7 - regs[R_BITPOS])) & 1
    bucket = mlen if mlen < 63 else 63
    midx = (bucket << 1) | pred
    regs[R_MPRED] = pred
    regs[R_MIDX] = midx
    v = np.int64(match_cnt[midx])
    p = v & 0xFFF
    if p == 0:
        p = 2048
    return p


@nb.njit(cache=True, nogil=True, inline="always")
def match_update(match_cnt, regs, bit):
    midx = regs[R_MIDX]
    if midx < 0:
        return
    v = np.int64(match_cnt[midx])
    p = v & 0xFFF
    hits = (v >> 12) & 0x3F
    if p == 0:
        p = 2048
        hits = 0
    p, hits = counter_update(p, hits, bit)
    match_cnt[midx] = np.uint32(p | (hits << 12))


@nb.njit(cache=True, nogil=True)
def refresh_bases(ring, regs, hctx, orders, cfg):
    """Recompute per-model context hashes of the committed history.

    Positions before the start of the stream hash a fixed sentinel so
    short histories stay deterministic.  The word model's base is the
    running hash of the alphabetic run currently in progress.
    """
    pos = regs[R_POS]
    for m in range(orders.shape[0]):
        n = orders[m]
        h = _GOLD * np.uint64(m + 1)
        for k in range(n):
            j = pos - n + k
            if j >= 0:
                b = np.uint64(ring[j & RING_MASK])
            else:
                b = _HISTORY_PAD
            h = (h ^ b) * _FNV
        hctx[1 + m] = h
    if cfg[C_USE_WORD] != 0:
        hctx[1 + orders.shape[0]] = hctx[0] * _FNV


@nb.njit(cache=True, nogil=True, inline="always")
def advance_bit(ring, match_pos, regs, hctx, orders, cfg, bit):
    """Append a processed bit to history (no counter or weight changes).

    On the eighth bit the byte commits to the ring buffer, the word-run
    hash and per-model context hashes refresh, and the match model
    extends, re-acquires, or records the current suffix position.
    """
    if regs[R_MPRED] >= 0 and bit != regs[R_MPRED]:
        regs[R_MATCH_LEN] = 0
    regs[R_C0] = (regs[R_C0] << 1) | bit
    regs[R_BITPOS] += 1
    if regs[R_BITPOS] < 8:
        return
    byte = regs[R_C0] & 0xFF
    pos = regs[R_POS]
    ring[pos & RING_MASK] = byte
    pos += 1
    regs[R_POS] = pos
    regs[R_PREV] = byte
    regs[R_C0] = 1
    regs[R_BITPOS] = 0

    if cfg[C_USE_WORD] != 0:
        if (65 <= byte <= 90) or (97 <= byte <= 122):
            hctx[0] = (hctx[0] ^ np.uint64(byte | 0x20)) * _FNV
        else:
            hctx[0] = _WORD_SEED

    if cfg[C_USE_MATCH] != 0:
        if regs[R_MATCH_LEN] > 0:
            # every predicted bit agreed, so the match extends
            regs[R_MATCH_PTR] += 1
            if regs[R_MATCH_LEN] < (1 << 30):
                regs[R_MATCH_LEN] += 1
        min_len = cfg[C_MIN_LEN]
        if pos >= min_len:
            h = _MATCH_SEED
            for k in range(min_len):
                h = (h ^ np.uint64(ring[(pos - min_len + k) & RING_MASK])) * _FNV
            mp_idx = np.int64(mix64(h) & np.uint64(cfg[C_MATCH_MASK]))
            if regs[R_MATCH_LEN] == 0:
                cand = np.int64(match_pos[mp_idx])
                if cand >= min_len and cand < pos and pos - cand < 65536 - MATCH_WINDOW_SLACK:
                    length = 0
                    while length < MATCH_SCAN_CAP:
                        a = cand - 1 - length
                        if a < 0:
                            break
                        if ring[a & RING_MASK] != ring[(pos - 1 - length) & RING_MASK]:
                            break
                        length += 1
                    if length >= min_len:
                        regs[R_MATCH_PTR] = cand
                        regs[R_MATCH_LEN] = length
            match_pos[mp_idx] = np.uint32(pos)

    refresh_bases(ring, regs, hctx, orders, cfg)
