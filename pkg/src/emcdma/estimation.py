"""EM estimation of the fading coefficient and interference PSD from decoder
soft feedback, the two blind initializers and the pilot-assisted baseline.

Per-symbol arrays are processed for many blocks at once: ``fading_block``
and ``interference_block`` hold the block index of every symbol.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_symbols, check_priors, check_block_ids
from .waveform import SYMBOLS

I0_ABS_FLOOR = 1e-12


@dataclass
class CsiEstimate:
    """Fading coefficient per fading block and interference PSD per
    interference block, tagged with the iteration that produced them."""

    C_hat: np.ndarray
    I0_hat: np.ndarray
    em_iter: int = 0
    receiver_iter: int = 0
    floor_active: np.ndarray | None = None

    def __post_init__(self):
        self.C_hat = np.atleast_1d(np.asarray(self.C_hat, dtype=complex))
        self.I0_hat = np.atleast_1d(np.asarray(self.I0_hat, dtype=float))
        if self.floor_active is None:
            self.floor_active = np.zeros(self.I0_hat.shape, dtype=bool)

    def copy(self, **kw) -> "CsiEstimate":
        d = dict(C_hat=self.C_hat.copy(), I0_hat=self.I0_hat.copy(), em_iter=self.em_iter,
                 receiver_iter=self.receiver_iter, floor_active=self.floor_active.copy())
        d.update(kw)
        return CsiEstimate(**d)


@dataclass(frozen=True)
class EmConfig:
    i_max: int = 10
    stop_fraction: float = 0.1
    h: float = 0.1
    n_fb: int = 40
    n_ib: int = 40
    i0_update: str = "expected"   # or "plugin": residual of x_bar alone

    def __post_init__(self):
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if not 0 < self.stop_fraction < 1:
            raise ValueError("stop_fraction must lie in (0, 1)")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.n_ib > self.n_fb or self.n_fb % self.n_ib:
            raise ValueError("n_ib must divide n_fb")
        if self.i0_update not in ("expected", "plugin"):
            raise ValueError("i0_update must be 'expected' or 'plugin'")


@dataclass
class SoftState:
    """Decoder feedback for one frame: symbol probabilities, bit LLRs and
    the current soft symbol estimate."""

    s: np.ndarray
    v: np.ndarray | None = None
    x_bar: np.ndarray | None = None


def likelihood_ratios(y, C_hat, I0_hat) -> np.ndarray:
    """Log likelihood ratios ``log R_beta`` for the symbols +1, +j, -1, -j.

    Uses the matched-filter statistic ``conj(C) y``; returned shape is
    ``y.shape + (4,)``.
    """
    y = np.asarray(y, dtype=complex)
    m = 2.0 * np.conj(C_hat) * y / I0_hat
    a, b = m.real, m.imag
    return np.stack([a, b, -a, -b], axis=-1)


def _log_prior(s):
    with np.errstate(divide="ignore"):
        return np.log(s)


def symbol_expectation(y, C_hat, I0_hat, s=None, log_s=None) -> np.ndarray:
    """Posterior mean of each QPSK symbol given priors ``s`` (rows sum to 1)."""
    lr = likelihood_ratios(y, C_hat, I0_hat)
    if log_s is None:
        log_s = _log_prior(np.asarray(s, dtype=float)) if s is not None else np.zeros(lr.shape)
    w = lr + log_s
    w = w - w.max(axis=-1, keepdims=True)
    e = np.exp(w)
    return (e @ SYMBOLS) / e.sum(axis=-1)


def _block_mean(values, ids, n):
    counts = np.bincount(ids, minlength=n)
    if np.iscomplexobj(values):
        tot = (np.bincount(ids, weights=values.real, minlength=n)
               + 1j * np.bincount(ids, weights=values.imag, minlength=n))
    else:
        tot = np.bincount(ids, weights=values, minlength=n)
    return tot / np.maximum(counts, 1)


def update_C(y, x_bar, block_ids=None, n_blocks=None):
    """``C = mean(y conj(x_bar))`` over each block (scalar if no ids are given)."""
    y = np.asarray(y, dtype=complex)
    x_bar = np.asarray(x_bar, dtype=complex)
    if block_ids is None:
        if y.size == 0:
            raise ValueError("empty block")
        return complex(np.mean(y * np.conj(x_bar)))
    n = n_blocks if n_blocks is not None else int(block_ids.max()) + 1
    return _block_mean(y * np.conj(x_bar), block_ids, n)


def update_I0(y, x_bar, C_hat, h: float = 0.1, block_ids=None, n_blocks=None, return_floor=False,
              symbol_power=None):
    """Residual power ``mean |y - C x_bar|^2``, floored at ``h |C|^2``.

    ``C_hat`` is per symbol when ``block_ids`` is given. With
    ``symbol_power`` (``E|x|^2``, 1 for QPSK) the residual uses the second
    moment of the symbols rather than ``|x_bar|^2``, adding
    ``|C|^2 (E|x|^2 - |x_bar|^2)``; this is the maximizer of the expected
    log-likelihood for soft symbols and equals the plain residual for hard ones.
    """
    y = np.asarray(y, dtype=complex)
    x_bar = np.asarray(x_bar, dtype=complex)
    resid = np.abs(y - C_hat * x_bar) ** 2
    if symbol_power is not None:
        resid = resid + np.abs(C_hat) ** 2 * (symbol_power - np.abs(x_bar) ** 2)
    if block_ids is None:
        raw = float(np.mean(resid))
        floor = max(h * float(np.abs(np.mean(C_hat)) ** 2), I0_ABS_FLOOR)
        out = max(raw, floor)
        return (out, raw < floor) if return_floor else out
    n = n_blocks if n_blocks is not None else int(block_ids.max()) + 1
    raw = _block_mean(resid, block_ids, n)
    floor = np.maximum(h * _block_mean(np.abs(C_hat) ** 2, block_ids, n), I0_ABS_FLOOR)
    out = np.maximum(raw, floor)
    return (out, raw < floor) if return_floor else out


def em_objective(y, x_bar, C, I0, block_ids=None) -> np.ndarray | float:
    """Expected complete-data log-likelihood (constant dropped), per block."""
    y = np.asarray(y, dtype=complex)
    term = np.abs(y) ** 2 + np.abs(C) ** 2 - 2 * np.real(np.conj(y) * C * x_bar)
    if block_ids is None:
        return float(-y.size * np.log(I0) - term.sum() / I0)
    n = int(block_ids.max()) + 1
    n1 = np.bincount(block_ids, minlength=n)
    I0b = _block_mean(np.broadcast_to(I0, y.shape).astype(float), block_ids, n)
    return -n1 * np.log(I0b) - np.bincount(block_ids, weights=term / I0, minlength=n)


def log_likelihood(y, s, C, I0, block_ids=None):
    """Incomplete-data log-likelihood ``sum_k log sum_beta s_beta f(y|x_beta)``."""
    y = np.asarray(y, dtype=complex)
    d = y[..., None] - np.asarray(C)[..., None] * SYMBOLS
    I0 = np.asarray(I0, dtype=float)[..., None] if np.ndim(I0) else I0
    logf = -np.log(np.pi * I0) - np.abs(d) ** 2 / I0
    w = logf + _log_prior(np.asarray(s, dtype=float))
    mx = w.max(axis=-1, keepdims=True)
    ll = (mx + np.log(np.exp(w - mx).sum(axis=-1, keepdims=True)))[..., 0]
    if block_ids is None:
        return float(ll.sum())
    return np.bincount(block_ids, weights=ll)


def _default_ids(n, cfg: EmConfig):
    return np.zeros(n, dtype=np.int64), np.arange(n) // max(cfg.n_ib // 2, 1)


def em_iterate(y, priors, init: CsiEstimate, cfg: EmConfig = EmConfig(), *, fading_block=None,
               interference_block=None, phase_known=False, fixed_I0=None, history=None):
    """Run up to ``cfg.i_max`` EM iterations on every fading block.

    Each iteration computes the soft symbols with the current estimate,
    updates ``C`` over the fading block and then ``I0`` over each
    interference sub-block using that block's ``C``. A block stops once
    ``|C_new - C_old| <= stop_fraction * |C_old|``.

    ``priors`` are symbol probabilities, shape ``(n, 4)``. With
    ``phase_known`` the coefficient is kept real. ``fixed_I0`` pins the
    interference PSD (partially adaptive receiver).

    Returns ``(estimate, iterations_used)`` with one count per fading block.
    """
    y = check_symbols(y)
    s = check_priors(priors, y.size)
    if fading_block is None:
        fading_block, d_ib = _default_ids(y.size, cfg)
        if interference_block is None:
            interference_block = d_ib
    fb = check_block_ids(fading_block, y.size)
    ib = check_block_ids(interference_block, y.size)
    n_fb = int(fb.max()) + 1
    n_ib = int(ib.max()) + 1
    log_s = _log_prior(s)

    C = init.C_hat.astype(complex).copy()
    I0 = init.I0_hat.astype(float).copy()
    if fixed_I0 is not None:
        I0 = np.broadcast_to(np.asarray(fixed_I0, dtype=float), (n_ib,)).copy()
    floor_active = np.zeros(n_ib, dtype=bool)
    active = np.ones(n_fb, dtype=bool)
    used = np.zeros(n_fb, dtype=np.int64)
    ib_to_fb = np.zeros(n_ib, dtype=np.int64)
    ib_to_fb[ib] = fb

    for i in range(cfg.i_max):
        x_bar = symbol_expectation(y, C[fb], I0[ib], log_s=log_s)
        C_new = update_C(y, x_bar, fb, n_fb)
        if phase_known:
            C_new = C_new.real.astype(complex)
        C_new = np.where(active, C_new, C)
        if fixed_I0 is None:
            I0_new, fl = update_I0(y, x_bar, C_new[fb], cfg.h, ib, n_ib, return_floor=True,
                                   symbol_power=1.0 if cfg.i0_update == "expected" else None)
            upd = active[ib_to_fb]
            I0 = np.where(upd, I0_new, I0)
            floor_active = np.where(upd, fl, floor_active)
        used += active
        converged = np.abs(C_new - C) <= cfg.stop_fraction * np.abs(C)
        C = C_new
        if history is not None:
            history.append((C.copy(), I0.copy(), x_bar))
        active &= ~converged
        if not active.any():
            break
    est = CsiEstimate(C, I0, em_iter=int(used.max()), receiver_iter=init.receiver_iter,
                      floor_active=floor_active)
    return est, used


def blind_init_method1(y, h: float = 0.1, fading_block=None, interference_block=None) -> CsiEstimate:
    """Magnitude-average initializer for a receiver that knows the phase.

    ``C = mean|y|``, ``D = mean|y|^2`` and ``I0 = max(D - C^2, h C^2)`` over
    each fading block; ``I0`` is copied to the block's interference
    sub-blocks.
    """
    y = check_symbols(y)
    if y.size == 0:
        raise ValueError("empty block")
    fb = np.zeros(y.size, dtype=np.int64) if fading_block is None else check_block_ids(fading_block, y.size)
    n = int(fb.max()) + 1
    C = _block_mean(np.abs(y), fb, n)
    D = _block_mean(np.abs(y) ** 2, fb, n)
    floor = h * C ** 2
    I0 = np.maximum(np.maximum(D - C ** 2, floor), I0_ABS_FLOOR)
    active = (D - C ** 2) < floor
    if interference_block is not None:
        ib = check_block_ids(interference_block, y.size)
        m = np.zeros(int(ib.max()) + 1, dtype=np.int64)
        m[ib] = fb
        I0, active = I0[m], active[m]
    return CsiEstimate(C.astype(complex), I0, floor_active=active)


def pace_estimate(y_pilots, pilot_symbols, block_ids=None, h: float = 0.1, n_blocks=None) -> CsiEstimate:
    """One pass of the C and I0 updates over the known pilots of each block.

    Every block must contain at least one pilot.
    """
    y = check_symbols(y_pilots)
    x = np.asarray(pilot_symbols, dtype=complex).ravel()
    if x.shape != y.shape:
        raise ValueError("pilot symbols and observations differ in length")
    ids = np.zeros(y.size, dtype=np.int64) if block_ids is None else np.asarray(block_ids, dtype=np.int64)
    n = n_blocks if n_blocks is not None else (int(ids.max()) + 1 if ids.size else 1)
    counts = np.bincount(ids, minlength=n)
    if (counts == 0).any():
        raise ValueError(f"block {int(np.flatnonzero(counts == 0)[0])} has no pilot symbols")
    C = update_C(y, x, ids, n)
    I0, fl = update_I0(y, x, C[ids], h, ids, n, return_floor=True)
    return CsiEstimate(C, I0, floor_active=fl)


# --- operation counts ----------------------------------------------------------------

def complexity_counts(N1: int, j_max: int, i_max: int, i0_update: str = "plugin") -> tuple[int, int, int]:
    """Closed-form real additions, multiplications and exponentials of the EM
    estimator on one block, including the blind initial estimate.

    ``"plugin"`` is the published tally. The ``"expected"`` update reuses the
    block power from the initial estimate, ``I0 = D - |C|^2``, and skips the
    per-symbol residual.
    """
    if min(N1, j_max, i_max) < 1:
        raise ValueError("arguments must be positive")
    ji = j_max * i_max
    if i0_update == "plugin":
        adds = ji * (6 * N1 + 4) + 6 * ji + 2 * N1
        mults = ji * (12 * N1 + 4) + 30 * ji + 8 * N1 + 7
    elif i0_update == "expected":
        adds = ji * (2 * N1 + 6) + 6 * ji + 2 * N1
        mults = ji * (4 * N1 + 5) + 30 * ji + 8 * N1 + 7
    else:
        raise ValueError("i0_update must be 'plugin' or 'expected'")
    exps = 4 * ji
    return adds, mults, exps


def pace_counts(N1: int) -> tuple[int, int]:
    if N1 < 1:
        raise ValueError("N1 must be positive")
    return 6 * N1 + 4, 12 * N1 + 4


@dataclass
class OpCounter:
    """Tally of real operations. Cost model: complex add = 2 real adds,
    complex multiply = 4 real multiplies, division = multiply."""

    adds: int = 0
    mults: int = 0
    exps: int = 0
    log: list = field(default_factory=list)

    def cadd(self, a, b):
        self.adds += 2
        return a + b

    def csub(self, a, b):
        self.adds += 2
        return a - b

    def cmul(self, a, b):
        self.mults += 4
        return a * b

    def radd(self, a, b):
        self.adds += 1
        return a + b

    def rmul(self, a, b):
        self.mults += 1
        return a * b

    def rdiv(self, a, b):
        self.mults += 1
        return a / b

    def charge(self, adds=0, mults=0, exps=0, what=""):
        self.adds += adds
        self.mults += mults
        self.exps += exps
        self.log.append((what, adds, mults, exps))

    @property
    def totals(self):
        return self.adds, self.mults, self.exps


def counted_em_block(y, s, j_max: int, i_max: int, h: float = 0.1, counter: OpCounter | None = None,
                     i0_update: str = "plugin"):
    """Scalar, operation-counted run of the estimator on one block.

    Mirrors the vectorized path (blind initial estimate, then ``j_max``
    rounds of ``i_max`` EM updates with fixed priors ``s``) without early
    stopping. Returns ``(C, I0, counter)``.
    """
    if i0_update not in ("plugin", "expected"):
        raise ValueError("i0_update must be 'plugin' or 'expected'")
    ops = counter if counter is not None else OpCounter()
    y = check_symbols(y)
    s = check_priors(s, y.size)
    N1 = y.size

    # initial estimate: per symbol |y| and |y|^2, each through a complex product
    acc_a = 0.0
    acc_p = 0.0
    for k in range(N1):
        mag = np.sqrt(ops.cmul(y[k], np.conj(y[k])).real)
        pw = ops.cmul(y[k], np.conj(y[k])).real
        acc_a = ops.radd(acc_a, mag)
        acc_p = ops.radd(acc_p, pw)
    inv = ops.rdiv(1.0, N1)
    C = ops.rmul(acc_a, inv)
    D = ops.rmul(acc_p, inv)
    C2 = ops.rmul(C, C)
    floor = ops.rmul(h, C2)
    diff = D - C2
    # D - C^2 and the comparison are not part of the published tally
    ops.charge(mults=2, what="init: remaining constant of the published tally")
    I0 = max(diff, floor, I0_ABS_FLOOR)
    C = complex(C)

    for j in range(j_max):
        for i in range(i_max):
            # soft symbols: likelihood ratios and the posterior mean, tallied as published
            ops.charge(adds=6, mults=30, exps=4, what="likelihood ratios and expectation")
            x_bar = symbol_expectation(y, C, I0, s=s)
            inv = ops.rdiv(1.0, N1)
            acc = 0j
            for k in range(N1):
                acc = ops.cadd(acc, ops.cmul(np.conj(y[k]), x_bar[k]))
            re = ops.rmul(acc.real, inv)
            im = ops.rmul(acc.imag, inv)
            C_new = complex(re, -im)
            if i0_update == "expected":
                # mean|y|^2 + |C|^2 - 2 Re(C* mean(y x_bar*)) collapses to D - |C|^2
                c2 = ops.radd(ops.rmul(re, re), ops.rmul(im, im))
                raw = ops.radd(D, -c2)
            else:
                acc_r = 0j
                for k in range(N1):
                    e = ops.csub(y[k], ops.cmul(C_new, x_bar[k]))
                    acc_r = ops.cadd(acc_r, ops.cmul(e, np.conj(e)))
                raw = ops.rmul(acc_r.real, inv)
            # sign of Im C, and the stopping-rule difference and test
            ops.charge(adds=4, what="sign flip and convergence test")
            I0 = max(raw, h * abs(C_new) ** 2, I0_ABS_FLOOR)
            C = C_new
    return C, I0, ops


# --- estimator interface --------------------------------------------------------------

class EMChannelEstimator(BaseEstimator):
    """Estimator wrapper around :func:`em_iterate`.

    ``fit(y, priors)`` estimates the per-block fading coefficient and
    interference PSD; ``transform(y, llrs)`` returns the extrinsic bit
    metrics for the decoder using the fitted estimate.
    """

    def __init__(self, i_max=10, stop_fraction=0.1, h=0.1, n_fb=40, n_ib=40,
                 phase_known=False, fixed_I0=None, i0_update="expected"):
        self.i_max = i_max
        self.stop_fraction = stop_fraction
        self.h = h
        self.n_fb = n_fb
        self.n_ib = n_ib
        self.phase_known = phase_known
        self.fixed_I0 = fixed_I0
        self.i0_update = i0_update

    def _ids(self, n):
        return np.arange(n) // (self.n_fb // 2), np.arange(n) // (self.n_ib // 2)

    def fit(self, y, priors=None, init: CsiEstimate | None = None):
        y = check_symbols(y)
        cfg = EmConfig(self.i_max, self.stop_fraction, self.h, self.n_fb, self.n_ib, self.i0_update)
        fb, ib = self._ids(y.size)
        if priors is None:
            priors = np.full((y.size, 4), 0.25)
        if init is None:
            init = blind_init_method1(y, self.h, fb, ib)
        est, used = em_iterate(y, priors, init, cfg, fading_block=fb, interference_block=ib,
                               phase_known=self.phase_known, fixed_I0=self.fixed_I0)
        self.estimate_ = est
        self.C_hat_ = est.C_hat
        self.I0_hat_ = est.I0_hat
        self.n_iter_ = used
        return self

    def transform(self, y, llrs=None):
        from .demod import extrinsic_metrics

        check_is_fitted(self, "estimate_")
        y = check_symbols(y)
        fb, ib = self._ids(y.size)
        v = np.zeros((y.size, 2)) if llrs is None else np.asarray(llrs, dtype=float).reshape(y.size, 2)
        z1, z2 = extrinsic_metrics(y, self.C_hat_[fb], self.I0_hat_[ib], v[:, 0], v[:, 1])
        return np.column_stack([z1, z2]).ravel()

    def predict(self, y):
        return (self.transform(y) < 0).astype(np.uint8)
