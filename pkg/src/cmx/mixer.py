"""Logistic mixing of per-model predictions with online-trained weights.

Predictions are combined in the stretched (logit) domain:
``p = squash(sum_i w_i * stretch(p_i))``.  Training is gradient descent
on the coding loss -log p(bit): ``w_i += lr * (bit - p) * stretch(p_i)``,
so a model that was confident and right pulls its weight up.

Weights are int32 fixed point with 16 fractional bits, clamped to
[-8, +8] (|w| <= 8 << 16).  One weight row is kept per value of the
previous whole byte (256 rows); only the selected row mixes and trains,
so row selection depends on history alone, never on the bit being
predicted.  With stretch values scaled by 256 and the error in 1/4096
units, the integer update  (err * st * lr_scaled) >> 20  equals the
real-valued rule above with lr = lr_scaled / 2**16.
"""

import numba as nb
import numpy as np

from .config import WEIGHT_CLAMP, WEIGHT_FRAC_BITS
from .tables import LOGIT_MAX


@nb.njit(cache=True, nogil=True, inline="always")
def mix(weights, sel, sts, n_models, squash_tab):
    """Mixed 12-bit probability from the selected weight row."""
    dot = np.int64(0)
    for i in range(n_models):
        dot += np.int64(weights[sel, i]) * sts[i]
    x = dot >> WEIGHT_FRAC_BITS
    if x < -LOGIT_MAX:
        x = -LOGIT_MAX
    elif x > LOGIT_MAX:
        x = LOGIT_MAX
    return np.int64(squash_tab[x + LOGIT_MAX])


@nb.njit(cache=True, nogil=True, inline="always")
def train(weights, sel, sts, n_models, err, lr_scaled):
    """One gradient step on the selected row; err = (bit << 12) - p_mix."""
    for i in range(n_models):
        w = np.int64(weights[sel, i]) + ((err * sts[i] * lr_scaled) >> 20)
        if w > WEIGHT_CLAMP:
            w = WEIGHT_CLAMP
        elif w < -WEIGHT_CLAMP:
            w = -WEIGHT_CLAMP
        weights[sel, i] = np.int32(w)


def initial_weights(n_models: int) -> np.ndarray:
    """Fresh weight matrix: every model at 1/n_models so the initial mix
    is the average stretched prediction."""
    w0 = round((1 << WEIGHT_FRAC_BITS) / n_models)
    return np.full((256, n_models), w0, dtype=np.int32)
