"""Fixed-point transform tables shared by the models, mixer, and engine.

Probabilities are 12-bit integers ``p1`` in [1, 4095] meaning
``P(bit=1) = p1 / 4096``.  The logit ("stretched") domain is scaled by
256, so one table unit is 1/256 of a natural-log odds unit.  All three
tables are integer-valued so that every downstream computation is exact
integer arithmetic and therefore reproducible across platforms.
"""

import math

import numpy as np

PROB_SCALE = 4096          # probability denominator
PROB_MIN = 1
PROB_MAX = PROB_SCALE - 1
LOGIT_SCALE = 256          # table units per natural-log odds unit
LOGIT_MAX = 2047           # mixer output clamp, ~= +-8.0 logits
COST_SCALE = 65536         # cost accumulator units per bit

# A float64 transcendental may be off by a few ulp, which only changes the
# rounded table entry if the true value sits essentially on a rounding
# boundary; those entries are recomputed at high precision.
_BOUNDARY_EPS = 1e-9


def _round_exact(x: float, exact_fn) -> int:
    """Round to nearest int, recomputing near-boundary cases exactly."""
    frac = x - math.floor(x)
    if abs(frac - 0.5) < _BOUNDARY_EPS:
        import mpmath

        with mpmath.workdps(40):
            return int(mpmath.nint(exact_fn(mpmath)))
    return round(x)


def _build_stretch() -> np.ndarray:
    """stretch[p1] = round(256 * ln(p1 / (4096 - p1))), p1 in [0, 4096]."""
    tab = np.zeros(PROB_SCALE + 1, dtype=np.int32)
    for p1 in range(1, PROB_SCALE):
        x = LOGIT_SCALE * math.log(p1 / (PROB_SCALE - p1))
        tab[p1] = _round_exact(
            x, lambda mp, p1=p1: LOGIT_SCALE * mp.log(mp.mpf(p1) / (PROB_SCALE - p1))
        )
    tab[0] = tab[1]
    tab[PROB_SCALE] = tab[PROB_MAX]
    return tab


def _build_squash() -> np.ndarray:
    """squash[x + 2047] = clamp(round(4096 / (1 + e^(-x/256))), 1, 4095)."""
    tab = np.zeros(2 * LOGIT_MAX + 1, dtype=np.int32)
    for x in range(-LOGIT_MAX, LOGIT_MAX + 1):
        v = PROB_SCALE / (1.0 + math.exp(-x / LOGIT_SCALE))
        r = _round_exact(
            v, lambda mp, x=x: PROB_SCALE / (1 + mp.exp(mp.mpf(-x) / LOGIT_SCALE))
        )
        tab[x + LOGIT_MAX] = min(max(r, PROB_MIN), PROB_MAX)
    return tab


def _build_cost() -> np.ndarray:
    """cost[p] = round(-log2(p / 4096) * 65536): ideal code length of an
    event of probability p/4096, in 1/65536-bit units."""
    tab = np.zeros(PROB_SCALE + 1, dtype=np.int64)
    for p in range(1, PROB_SCALE + 1):
        c = -COST_SCALE * math.log2(p / PROB_SCALE)
        tab[p] = _round_exact(
            c, lambda mp, p=p: -COST_SCALE * mp.log(mp.mpf(p) / PROB_SCALE) / mp.log(2)
        )
    tab[0] = tab[1]  # unreachable: probabilities never hit 0
    return tab


STRETCH = _build_stretch()
SQUASH = _build_squash()
COST = _build_cost()

for _t in (STRETCH, SQUASH, COST):
    _t.setflags(write=False)


def stretch(p1: int) -> int:
    """Scaled logit of a 12-bit probability."""
    return int(STRETCH[p1])


def squash(x: int) -> int:
    """Inverse of :func:`stretch`; input clamped to [-2047, 2047]."""
    x = min(max(x, -LOGIT_MAX), LOGIT_MAX)
    return int(SQUASH[x + LOGIT_MAX])
