"""Soft demodulation: bit LLRs to symbol priors, extrinsic bit metrics for the
decoder, and the hard bootstrap used by the second blind initializer.

LLRs are ``log P(b=0) / P(b=1)`` throughout.
"""
from __future__ import annotations

import numpy as np

from ._validation import check_llrs, check_symbols
from .waveform import SYMBOL_BITS, SYMBOLS

BOOTSTRAP_LLR = 4.0


def log_priors_from_llrs(v1, v2) -> np.ndarray:
    """Log symbol probabilities for +1, +j, -1, -j from independent bit LLRs."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    # log P(b=0) = -softplus(-v), log P(b=1) = -softplus(v)
    l0_1, l1_1 = -np.logaddexp(0, -v1), -np.logaddexp(0, v1)
    l0_2, l1_2 = -np.logaddexp(0, -v2), -np.logaddexp(0, v2)
    return np.stack([l0_1 + l0_2, l0_1 + l1_2, l1_1 + l1_2, l1_1 + l0_2], axis=-1)


def priors_from_llrs(v1, v2) -> np.ndarray:
    return np.exp(log_priors_from_llrs(v1, v2))


def pilot_priors(n: int) -> np.ndarray:
    """One-hot priors on the +1 pilot symbol."""
    s = np.zeros((n, 4))
    s[:, 0] = 1.0
    return s


def extrinsic_metrics(y, C_hat, I0_hat, v1, v2) -> tuple[np.ndarray, np.ndarray]:
    """Extrinsic LLRs of the two bits of each symbol.

    Each bit's metric marginalizes the other bit using its a priori LLR;
    the bit's own prior is excluded.
    """
    y = check_symbols(y)
    v1 = check_llrs(v1, y.size, "v1")
    v2 = check_llrs(v2, y.size, "v2")
    m = 2.0 * np.conj(C_hat) * y / I0_hat
    a, b = m.real, m.imag
    # symbol log-likelihoods: +1 -> a, +j -> b, -1 -> -a, -j -> -b
    h2 = v2 / 2
    h1 = v1 / 2
    # b1 = 0 on {+1 (b2=0), +j (b2=1)}; b1 = 1 on {-1 (b2=1), -j (b2=0)}
    z1 = np.logaddexp(a + h2, b - h2) - np.logaddexp(-a - h2, -b + h2)
    # b2 = 0 on {+1 (b1=0), -j (b1=1)}; b2 = 1 on {+j (b1=0), -1 (b1=1)}
    z2 = np.logaddexp(a + h1, -b - h1) - np.logaddexp(b + h1, -a - h1)
    return z1, z2


def interleave_bits(z1, z2) -> np.ndarray:
    return np.column_stack([z1, z2]).ravel()


def hard_demod_bootstrap(y, magnitude: float = BOOTSTRAP_LLR) -> np.ndarray:
    """Nearest-symbol decisions on ``y`` as fixed-magnitude LLRs (flat array)."""
    y = check_symbols(y)
    idx = np.argmax((y[:, None] * SYMBOLS.conj()[None, :]).real, axis=1)
    bits = SYMBOL_BITS[idx].ravel()
    return magnitude * (1.0 - 2.0 * bits)
