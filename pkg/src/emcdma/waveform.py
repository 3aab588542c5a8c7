"""Gold spreading codes, Gray QPSK and dual-quaternary spreading."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Preferred pairs of primitive polynomials, exponents of the nonzero terms.
# Verified against the three-valued cross-correlation bound in the tests.
PREFERRED_PAIRS = {
    5: ((5, 2, 0), (5, 4, 3, 2, 0)),
    7: ((7, 3, 0), (7, 3, 2, 1, 0)),
}

# Gray map: index 0..3 <-> symbols +1, +j, -1, -j
SYMBOLS = np.array([1, 1j, -1, -1j], dtype=complex)
SYMBOL_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
_BITS_TO_INDEX = np.array([0, 1, 3, 2])  # b1*2 + b2 -> symbol index


def cross_correlation_bound(degree: int) -> int:
    """``t(n) = 2**floor((n+2)/2) + 1``."""
    return 2 ** ((degree + 2) // 2) + 1


def m_sequence(taps: tuple[int, ...], degree: int) -> np.ndarray:
    """Binary m-sequence of length ``2**degree - 1`` for the given polynomial."""
    coeff = [e for e in taps if 0 < e < degree]
    reg = [0] * (degree - 1) + [1]
    out = np.empty(2 ** degree - 1, dtype=np.uint8)
    for n in range(out.size):
        out[n] = reg[0]
        # s[n+deg] = s[n] + sum_{k in coeff} s[n+k]
        nxt = reg[0]
        for k in coeff:
            nxt ^= reg[k]
        reg = reg[1:] + [nxt]
    return out


def gold_family(degree: int) -> np.ndarray:
    """All ``2**n + 1`` Gold sequences as a (count, length) array of +/-1 chips."""
    if degree not in PREFERRED_PAIRS:
        raise ValueError(f"no preferred pair tabulated for degree {degree}")
    pa, pb = PREFERRED_PAIRS[degree]
    u = m_sequence(pa, degree)
    v = m_sequence(pb, degree)
    fam = [u, v] + [u ^ np.roll(v, -k) for k in range(u.size)]
    return 1.0 - 2.0 * np.array(fam, dtype=float)


@dataclass(frozen=True, eq=False)
class GoldSet:
    degree: int
    sequences: np.ndarray  # (count, length), entries +/-1
    preferred_pair_taps: tuple

    @property
    def length(self) -> int:
        return 2 ** self.degree - 1

    def __len__(self):
        return self.sequences.shape[0]

    def __getitem__(self, i):
        return self.sequences[i]


def gen_gold(degree: int, count: int, seed: int | None = 0) -> GoldSet:
    """Draw ``count`` distinct members of the Gold family.

    Which members are drawn is decided by ``seed``.
    """
    family = gold_family(degree)
    if count > family.shape[0]:
        raise ValueError(f"degree {degree} has only {family.shape[0]} Gold sequences, asked for {count}")
    pick = np.random.default_rng(seed).permutation(family.shape[0])[:count]
    return GoldSet(degree, family[pick].copy(), PREFERRED_PAIRS[degree])


def periodic_cross_correlation(a, b) -> np.ndarray:
    """Unnormalized periodic cross-correlation of two +/-1 sequences at all shifts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.array([a @ np.roll(b, s) for s in range(a.size)])


def qpsk_map(bits) -> np.ndarray:
    """Map bit pairs ``(b1, b2)`` to Gray QPSK: 00->+1, 01->+j, 11->-1, 10->-j.

    Accepts a flat bit array of even length or an (n, 2) array.
    """
    b = np.asarray(bits, dtype=np.int64).reshape(-1, 2)
    if ((b != 0) & (b != 1)).any():
        raise ValueError("bits must be 0 or 1")
    return SYMBOLS[_BITS_TO_INDEX[2 * b[:, 0] + b[:, 1]]]


def qpsk_unmap(symbols) -> np.ndarray:
    """Nearest-point hard demapping to a flat bit array."""
    x = np.asarray(symbols, dtype=complex).ravel()
    idx = np.argmax((x[:, None] * SYMBOLS.conj()[None, :]).real, axis=1)
    return SYMBOL_BITS[idx].ravel()


def _check_pair(p_R, p_I):
    p_R = np.asarray(p_R, dtype=float)
    p_I = np.asarray(p_I, dtype=float)
    if p_R.ndim != 1 or p_R.shape != p_I.shape:
        raise ValueError("p_R and p_I must be 1-D sequences of equal length")
    return p_R, p_I


def spread(symbols, p_R, p_I) -> np.ndarray:
    """Chip ``c`` of symbol ``k`` is ``x_R(k) p_R(c) + j x_I(k) p_I(c)``.

    Returns the flat complex chip stream of length ``g * len(symbols)``.
    """
    p_R, p_I = _check_pair(p_R, p_I)
    x = np.asarray(symbols, dtype=complex).ravel()
    chips = x.real[:, None] * p_R[None, :] + 1j * x.imag[:, None] * p_I[None, :]
    return chips.ravel()


def despread_weights(p_R, p_I) -> tuple[np.ndarray, float]:
    """Correlator weights and normalization used by :func:`despread`."""
    p_R, p_I = _check_pair(p_R, p_I)
    w = p_R + p_I
    norm = p_R.size + float(p_R @ p_I)
    if norm == 0:
        raise ValueError("p_I = -p_R cannot be despread")
    return w, norm


def despread(chips, p_R, p_I) -> np.ndarray:
    """Correlate the chip stream with ``p_R + p_I`` and normalize.

    For ``r = C * spread(x)`` the output is exactly ``C x(k)`` for any
    complex ``C``; the normalization ``g + <p_R, p_I>`` removes the small
    self-correlation between the two branch sequences.
    """
    w, norm = despread_weights(p_R, p_I)
    r = np.asarray(chips, dtype=complex).ravel()
    g = w.size
    if r.size % g:
        raise ValueError(f"chip count {r.size} is not a multiple of g={g}")
    return r.reshape(-1, g) @ w / norm
