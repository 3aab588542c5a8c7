"""The doubly iterative receiver: initial CSI, then alternating single decoder
iterations and per-block EM re-estimation, with optional Rake combining."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channel import ChannelRealization
from .demod import (extrinsic_metrics, hard_demod_bootstrap, interleave_bits,
                    log_priors_from_llrs)
from .estimation import (CsiEstimate, EmConfig, blind_init_method1, em_iterate,
                         pace_estimate, update_C, update_I0)
from .ira import CodeEnsemble, SumProductDecoder
from .waveform import SYMBOLS, despread, qpsk_map

ESTIMATION = ("perfect", "pace", "blind_I", "blind_II")
PILOT_GROUP = 22  # transmitted symbols per pilot group (20 data + 2 pilots)


@dataclass(frozen=True)
class ReceiverMode:
    estimation: str = "blind_I"
    adaptivity: str = "full"
    phase: str = "known"
    fingers: int = 1

    def __post_init__(self):
        if self.estimation not in ESTIMATION:
            raise ValueError(f"estimation must be one of {ESTIMATION}, got {self.estimation!r}")
        if self.adaptivity not in ("full", "partial"):
            raise ValueError("adaptivity must be 'full' or 'partial'")
        if self.phase not in ("known", "unknown"):
            raise ValueError("phase must be 'known' or 'unknown'")
        if self.fingers < 1:
            raise ValueError("at least one Rake finger is required")

    @property
    def phase_known(self) -> bool:
        return self.phase == "known"

    @property
    def label(self) -> str:
        return f"{self.estimation}/{self.adaptivity}/{self.phase}/L{self.fingers}"


@dataclass
class FrameDiagnostics:
    rx_iters: int = 0
    em_iters: list = field(default_factory=list)
    parity: list = field(default_factory=list)
    C_traj: list = field(default_factory=list)
    I0_traj: list = field(default_factory=list)
    floor_active: list = field(default_factory=list)
    bit_errors: int | None = None

    @property
    def mean_em_iters(self) -> float:
        return float(np.mean(self.em_iters)) if self.em_iters else 0.0

    def to_record(self) -> dict:
        d = asdict(self)
        d["C_traj"] = [[[float(c.real), float(c.imag)] for c in row] for row in self.C_traj]
        d["I0_traj"] = [[float(x) for x in row] for row in self.I0_traj]
        d["floor_active"] = [int(x) for x in self.floor_active]
        d["em_iters"] = [int(x) for x in self.em_iters]
        d["parity"] = [bool(x) for x in self.parity]
        return d


def rake_combine(per_finger_y, per_finger_est):
    """Maximal-ratio combining of per-symbol finger outputs.

    ``per_finger_est`` holds per-symbol ``(C, I0)`` pairs. Returns the
    combined statistic ``u`` and the effective per-symbol ``(C, I0)``,
    both equal to ``sum |C_l|^2 / I0_l``, so the single-path metric on
    ``(u, C_eff, I0_eff)`` yields the MRC LLRs.
    """
    if len(per_finger_y) == 0 or len(per_finger_y) != len(per_finger_est):
        raise ValueError("need one estimate per finger and at least one finger")
    u = 0
    eff = 0
    for y, (C, I0) in zip(per_finger_y, per_finger_est):
        u = u + np.conj(C) / I0 * y
        eff = eff + np.abs(C) ** 2 / I0
    eff = np.maximum(eff, 1e-300)
    return u, eff.astype(complex), eff


class _Frame:
    """Per-symbol observations and block bookkeeping of one received frame."""

    def __init__(self, received, truth: ChannelRealization, mode: ReceiverMode):
        lay = truth.layout
        streams = [received] if isinstance(received, np.ndarray) and received.ndim == 1 else list(received)
        L = mode.fingers
        if len(streams) < L or truth.n_paths < L:
            raise ValueError(f"{L} fingers requested but only {min(len(streams), truth.n_paths)} paths received")
        self.y = [despread(streams[l], truth.p_R, truth.p_I) for l in range(L)]
        if self.y[0].size != lay.n_symbols:
            raise ValueError("received stream length does not match the frame layout")
        self.C_true = [truth.C_blocks[l].copy() for l in range(L)]
        if mode.phase_known:
            for l in range(L):
                rot = np.exp(-1j * np.angle(self.C_true[l]))
                self.y[l] = self.y[l] * rot[lay.fading_block]
                self.C_true[l] = np.abs(self.C_true[l]).astype(complex)
        self.I0_true = [truth.I0_blocks[l] for l in range(L)]
        self.fb = lay.fading_block
        self.ib = lay.interference_block
        self.pilot = lay.pilot_mask
        self.data = np.flatnonzero(~self.pilot)
        self.n_fb = lay.n_fading_blocks
        self.n_ib = lay.n_interference_blocks
        self.N0 = truth.N0


def _log_priors(frame: _Frame, v):
    """Log symbol priors for every transmitted symbol; pilots are known +1."""
    n = frame.pilot.size
    lp = np.full((n, 4), -np.inf)
    lp[frame.pilot, 0] = 0.0
    lp[frame.data] = log_priors_from_llrs(v[0::2], v[1::2])
    return lp


def _initial_estimates(frame: _Frame, mode: ReceiverMode, cfg: EmConfig, code: CodeEnsemble,
                       bootstrap_iterations: int, dec: SumProductDecoder):
    L = mode.fingers
    ib_to_fb = np.zeros(frame.n_ib, dtype=np.int64)
    ib_to_fb[frame.ib] = frame.fb
    ests = []
    if mode.estimation == "perfect":
        return [CsiEstimate(frame.C_true[l], frame.I0_true[l]) for l in range(L)]
    if mode.estimation == "pace":
        if not frame.pilot.any():
            raise ValueError("PACE needs a layout with pilot symbols")
        pos = np.flatnonzero(frame.pilot)
        group = pos // PILOT_GROUP
        n_groups = int(group.max()) + 1
        # each fading block uses the group holding its first symbol
        first = np.full(frame.n_fb, frame.fb.size)
        np.minimum.at(first, frame.fb, np.arange(frame.fb.size))
        fb_group = np.minimum(first // PILOT_GROUP, n_groups - 1)
        for l in range(L):
            e = pace_estimate(frame.y[l][pos], np.ones(pos.size), group, cfg.h, n_groups)
            C = e.C_hat[fb_group]
            if mode.phase_known:
                C = C.real.astype(complex)
            ests.append(CsiEstimate(C, e.I0_hat[fb_group][ib_to_fb]))
    elif mode.estimation == "blind_I":
        for l in range(L):
            ests.append(blind_init_method1(frame.y[l], cfg.h, frame.fb, frame.ib))
    else:
        # hard decisions on the first finger, a bootstrap decode, then one
        # M-step with the decoded symbols in place of the soft estimates
        llr = np.zeros(code.N)
        llr[:] = hard_demod_bootstrap(frame.y[0][frame.data])
        post = dec.iterate(llr, bootstrap_iterations)
        x_hat = np.ones(frame.pilot.size, dtype=complex)
        x_hat[frame.data] = qpsk_map((post < 0).astype(np.uint8))
        for l in range(L):
            C = update_C(frame.y[l], x_hat, frame.fb, frame.n_fb)
            if mode.phase_known:
                C = C.real.astype(complex)
            I0 = update_I0(frame.y[l], x_hat, C[frame.fb], cfg.h, frame.ib, frame.n_ib)
            ests.append(CsiEstimate(C, I0))
    if mode.adaptivity == "partial":
        for e in ests:
            e.I0_hat = np.full(frame.n_ib, frame.N0)
    return ests


def _metrics(frame: _Frame, ests, v):
    """Channel LLRs for the code bits from the current estimates."""
    d = frame.data
    if len(ests) == 1:
        y = frame.y[0][d]
        C = ests[0].C_hat[frame.fb[d]]
        I0 = ests[0].I0_hat[frame.ib[d]]
    else:
        y, C, I0 = rake_combine([yl[d] for yl in frame.y],
                                [(e.C_hat[frame.fb[d]], e.I0_hat[frame.ib[d]]) for e in ests])
    z1, z2 = extrinsic_metrics(y, C, I0, v[0::2], v[1::2])
    return interleave_bits(z1, z2)


def run_frame(received, truth: ChannelRealization, code: CodeEnsemble, mode: ReceiverMode,
              cfg: EmConfig = EmConfig(), j_max: int = 9, *, early_exit: bool = True,
              bootstrap_iterations: int = 20, decoder_iterations: int = 1, trace: bool = False):
    """Decode one frame.

    ``received`` is the chip stream (or one stream per path for Rake).
    Returns ``(message_bits, FrameDiagnostics)``; the message is the first
    ``K`` hard decisions of the last decoder pass.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    frame = _Frame(received, truth, mode)
    if frame.data.size * 2 != code.N:
        raise ValueError(f"frame carries {frame.data.size * 2} code bits, code length is {code.N}")
    boot = SumProductDecoder(code)
    ests = _initial_estimates(frame, mode, cfg, code, bootstrap_iterations, boot)
    diag = FrameDiagnostics()
    v = np.zeros(code.N)
    llr = _metrics(frame, ests, v)
    dec = SumProductDecoder(code)
    fixed_I0 = frame.N0 if mode.adaptivity == "partial" else None
    adapt = mode.estimation != "perfect"

    for j in range(1, j_max + 1):
        post = dec.iterate(llr, decoder_iterations)
        hard = (post < 0).astype(np.uint8)
        ok = code.is_codeword(hard)
        diag.parity.append(bool(ok))
        diag.rx_iters = j
        if (ok and early_exit) or j == j_max:
            break
        v = post - llr
        if adapt:
            lp = _log_priors(frame, v)
            s = np.exp(lp)
            new = []
            for l, e in enumerate(ests):
                e.receiver_iter = j
                est, used = em_iterate(frame.y[l], s, e, cfg, fading_block=frame.fb,
                                       interference_block=frame.ib, phase_known=mode.phase_known,
                                       fixed_I0=fixed_I0)
                new.append(est)
                if l == 0:
                    diag.em_iters.append(int(used.mean().round()) if used.size else 0)
                    diag.floor_active.append(int(est.floor_active.sum()))
                    if trace:
                        diag.C_traj.append(est.C_hat.copy())
                        diag.I0_traj.append(est.I0_hat.copy())
            ests = new
        llr = _metrics(frame, ests, v)
    return hard[:code.K], diag


class IterativeReceiver(BaseEstimator):
    """Estimator-style front end to :func:`run_frame`.

    ``fit(code)`` binds the code; ``predict(received, truth)`` decodes one
    frame and records its diagnostics in ``diagnostics_``.
    """

    def __init__(self, estimation="blind_I", adaptivity="full", phase="known", fingers=1,
                 j_max=9, i_max=10, stop_fraction=0.1, h=0.1, n_fb=40, n_ib=40,
                 early_exit=True, bootstrap_iterations=20, i0_update="expected"):
        self.estimation = estimation
        self.adaptivity = adaptivity
        self.phase = phase
        self.fingers = fingers
        self.j_max = j_max
        self.i_max = i_max
        self.stop_fraction = stop_fraction
        self.h = h
        self.n_fb = n_fb
        self.n_ib = n_ib
        self.early_exit = early_exit
        self.bootstrap_iterations = bootstrap_iterations
        self.i0_update = i0_update

    def fit(self, code: CodeEnsemble, y=None):
        if not isinstance(code, CodeEnsemble):
            raise TypeError("fit expects a CodeEnsemble")
        self.mode_ = ReceiverMode(self.estimation, self.adaptivity, self.phase, self.fingers)
        self.cfg_ = EmConfig(self.i_max, self.stop_fraction, self.h, self.n_fb, self.n_ib, self.i0_update)
        self.code_ = code
        return self

    def predict(self, received, truth: ChannelRealization):
        check_is_fitted(self, "code_")
        bits, diag = run_frame(received, truth, self.code_, self.mode_, self.cfg_, self.j_max,
                               early_exit=self.early_exit,
                               bootstrap_iterations=self.bootstrap_iterations)
        self.diagnostics_ = diag
        return bits
