"""Correlated Rayleigh fading, block-constant channel realizations and
chip-rate transmission with AWGN and chip-synchronous multiple-access
interference."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .waveform import despread_weights, gen_gold, spread, SYMBOLS

N_OSCILLATORS = 16
SPEED_OF_LIGHT = 299_792_458.0


def doppler_hz(velocity_kmh: float, carrier_hz: float) -> float:
    return velocity_kmh / 3.6 / SPEED_OF_LIGHT * carrier_hz


class JakesOscillators:
    """Sum of ``M`` complex sinusoids with equispaced, randomly rotated arrival
    angles and random phases. Unit mean power; autocorrelation J0(2 pi f_d tau).
    """

    def __init__(self, f_d: float, seed=None, n_osc: int = N_OSCILLATORS):
        rng = np.random.default_rng(seed)
        self.f_d = float(f_d)
        theta = rng.uniform(-np.pi, np.pi)
        self.alpha = (2 * np.pi * np.arange(1, n_osc + 1) - np.pi + theta) / n_osc
        self.phase = rng.uniform(-np.pi, np.pi, n_osc)
        self.n_osc = n_osc

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        w = 2 * np.pi * self.f_d * np.cos(self.alpha)
        arg = np.multiply.outer(t, w) + self.phase
        return np.exp(1j * arg).sum(axis=-1) / np.sqrt(self.n_osc)


@dataclass(frozen=True, eq=False)
class FadingProcess:
    f_d: float
    T_s: float
    gains: np.ndarray
    seed: object = None


def jakes_gains(f_d: float, T_s: float, length: int, seed=None) -> FadingProcess:
    if f_d < 0:
        raise ValueError("Doppler must be non-negative")
    if length < 1:
        raise ValueError("length must be >= 1")
    osc = JakesOscillators(f_d, seed)
    return FadingProcess(f_d, T_s, osc(np.arange(length) * T_s), seed)


@dataclass(frozen=True, eq=False)
class FrameLayout:
    """Symbol-level structure of one transmitted frame.

    ``fading_block`` and ``interference_block`` give the block index of each
    transmitted symbol; pilots belong to the block of the data symbol they
    follow.
    """

    fading_block: np.ndarray
    interference_block: np.ndarray
    pilot_mask: np.ndarray
    symbol_duration: float

    @property
    def n_symbols(self) -> int:
        return self.fading_block.size

    @property
    def n_fading_blocks(self) -> int:
        return int(self.fading_block.max()) + 1

    @property
    def n_interference_blocks(self) -> int:
        return int(self.interference_block.max()) + 1

    @property
    def interference_to_fading(self) -> np.ndarray:
        out = np.zeros(self.n_interference_blocks, dtype=np.int64)
        out[self.interference_block] = self.fading_block
        return out

    def midpoint_times(self, block_ids) -> np.ndarray:
        ids = np.asarray(block_ids)
        n = int(ids.max()) + 1
        pos = np.arange(ids.size, dtype=float)
        first = np.full(n, np.inf)
        last = np.full(n, -np.inf)
        np.minimum.at(first, ids, pos)
        np.maximum.at(last, ids, pos)
        return (first + last + 1) / 2 * self.symbol_duration


def make_layout(n_data_symbols: int, n_fb: int, n_ib: int, symbol_duration: float,
                pilot_spacing: int | None = None) -> FrameLayout:
    """Block structure for ``n_data_symbols`` QPSK symbols.

    ``n_fb`` and ``n_ib`` are in code bits. With ``pilot_spacing = P`` a
    known pilot follows every ``P`` data symbols.
    """
    if n_fb % 2 or n_ib % 2 or n_fb <= 0 or n_ib <= 0:
        raise ValueError("block sizes must be positive and even (two code bits per symbol)")
    if n_ib > n_fb or n_fb % n_ib:
        raise ValueError(f"interference block {n_ib} must divide fading block {n_fb}")
    d = np.arange(n_data_symbols)
    fb = d // (n_fb // 2)
    ib = d // (n_ib // 2)
    if not pilot_spacing:
        return FrameLayout(fb, ib, np.zeros(d.size, dtype=bool), symbol_duration)
    # position of data symbol d once pilots are inserted
    pos = d + d // pilot_spacing
    n_pilots = n_data_symbols // pilot_spacing
    n_tx = n_data_symbols + n_pilots
    fb_tx = np.empty(n_tx, dtype=np.int64)
    ib_tx = np.empty(n_tx, dtype=np.int64)
    pilot = np.ones(n_tx, dtype=bool)
    pilot[pos] = False
    fb_tx[pos] = fb
    ib_tx[pos] = ib
    ppos = np.flatnonzero(pilot)
    fb_tx[ppos] = fb_tx[ppos - 1]
    ib_tx[ppos] = ib_tx[ppos - 1]
    return FrameLayout(fb_tx, ib_tx, pilot, symbol_duration)


@dataclass(frozen=True)
class MultipathProfile:
    """Resolvable paths with known chip delays and mean powers ``e^{-(l-1)}``."""

    delays: tuple[int, ...] = (0,)
    powers: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if len(self.delays) != len(self.powers) or not self.delays:
            raise ValueError("delays and powers must be non-empty and of equal length")
        d = np.sort(np.asarray(self.delays))
        if (np.diff(d) < 1).any():
            raise ValueError("path delays must be at least one chip apart")

    @classmethod
    def exponential(cls, n_paths: int = 3) -> "MultipathProfile":
        l = np.arange(n_paths)
        return cls(tuple(int(x) for x in l), tuple(float(x) for x in np.exp(-l)))

    @property
    def n_paths(self) -> int:
        return len(self.delays)


@dataclass(frozen=True)
class LinkParams:
    """Physical-layer knobs shared by the transmitter and the channel."""

    Es: float
    N0: float
    g: int = 31
    users: int = 1
    f_d: float = 200.0
    multipath: MultipathProfile = field(default_factory=MultipathProfile)
    fading: bool = True

    @property
    def gold_degree(self) -> int:
        deg = int(round(np.log2(self.g + 1)))
        if 2 ** deg - 1 != self.g:
            raise ValueError(f"spreading factor {self.g} is not 2^n - 1")
        return deg


@dataclass(frozen=True, eq=False)
class Interferer:
    p_R: np.ndarray
    p_I: np.ndarray
    symbols: np.ndarray          # per transmitted symbol
    C_blocks: np.ndarray         # (paths, interference blocks)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    layout: FrameLayout
    params: LinkParams
    p_R: np.ndarray
    p_I: np.ndarray
    C_blocks: np.ndarray         # (paths, fading blocks), includes sqrt(Es)
    interferers: tuple[Interferer, ...]
    I0_blocks: np.ndarray        # (paths, interference blocks): N0 + mean MAI power after despreading

    @property
    def N0(self) -> float:
        return self.params.N0

    @property
    def n_paths(self) -> int:
        return self.C_blocks.shape[0]

    def C_per_symbol(self, path: int = 0) -> np.ndarray:
        return self.C_blocks[path, self.layout.fading_block]

    def I0_per_symbol(self, path: int = 0) -> np.ndarray:
        return self.I0_blocks[path, self.layout.interference_block]


def realize_channel(params: LinkParams, layout: FrameLayout, seed=None) -> ChannelRealization:
    """Draw fading for every path and user, and the interferers' data and codes.

    The desired coefficient of fading block ``b`` is the Jakes process value
    at the block midpoint. Interferers fade independently per interference
    block and carry the same mean symbol energy as the desired user.
    """
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_codes, s_fade, s_int = ss.spawn(3)
    prof = params.multipath
    gold = gen_gold(params.gold_degree, 2 * params.users, np.random.default_rng(s_codes))
    t_fb = layout.midpoint_times(layout.fading_block)
    t_ib = layout.midpoint_times(layout.interference_block)
    sqrt_es = np.sqrt(params.Es)

    def block_gains(times, seeds):
        if not params.fading:
            return np.ones((prof.n_paths, times.size), dtype=complex)
        return np.array([np.sqrt(p) * JakesOscillators(params.f_d, s)(times)
                         for p, s in zip(prof.powers, seeds)])

    C = sqrt_es * block_gains(t_fb, s_fade.spawn(prof.n_paths))
    p_R, p_I = gold[0], gold[1]
    w, norm = despread_weights(p_R, p_I)

    interferers = []
    I0 = np.full((prof.n_paths, layout.n_interference_blocks), float(params.N0))
    for u, su in enumerate(s_int.spawn(params.users - 1), start=1):
        s_data, s_f = su.spawn(2)
        sym = SYMBOLS[np.random.default_rng(s_data).integers(0, 4, layout.n_symbols)]
        # equal power in every finger
        Cu = sqrt_es * (np.ones((prof.n_paths, t_ib.size), dtype=complex) if not params.fading else
                        np.array([JakesOscillators(params.f_d, s)(t_ib) for s in s_f.spawn(prof.n_paths)]))
        qR, qI = gold[2 * u], gold[2 * u + 1]
        cR = (qR @ w) / norm
        cI = (qI @ w) / norm
        I0 += np.abs(Cu) ** 2 * (cR ** 2 + cI ** 2) / 2
        interferers.append(Interferer(qR, qI, sym, Cu))
    return ChannelRealization(layout, params, p_R, p_I, C, tuple(interferers), I0)


def _path_stream(chips, real: ChannelRealization, path: int, rng) -> np.ndarray:
    lay = real.layout
    g = real.p_R.size
    chips = np.asarray(chips, dtype=complex).reshape(-1, g)
    if chips.shape[0] != lay.n_symbols:
        raise ValueError(f"expected {lay.n_symbols * g} chips, got {chips.size}")
    r = real.C_blocks[path, lay.fading_block][:, None] * chips
    for itf in real.interferers:
        cu = itf.C_blocks[path, lay.interference_block]
        r = r + cu[:, None] * spread(itf.symbols, itf.p_R, itf.p_I).reshape(-1, g)
    w, norm = despread_weights(real.p_R, real.p_I)
    # per-chip variance chosen so the despread noise has E|n|^2 = N0
    sigma2 = real.N0 * norm ** 2 / float(w @ w)
    noise = rng.normal(scale=np.sqrt(sigma2 / 2), size=(2,) + r.shape)
    return (r + noise[0] + 1j * noise[1]).ravel()


def transmit(chips_desired, realization: ChannelRealization, seed=None) -> np.ndarray:
    """Flat-fading received chip stream (first path only)."""
    return _path_stream(chips_desired, realization, 0, np.random.default_rng(seed))


def transmit_multipath(chips_desired, realization: ChannelRealization, seed=None) -> list[np.ndarray]:
    """One chip stream per resolvable path, each aligned to its known delay.

    Finger ``l`` sees path ``l`` of the desired user, every interferer at
    full power with independent fading, and independent noise.
    """
    rng = np.random.default_rng(seed)
    return [_path_stream(chips_desired, realization, l, rng) for l in range(realization.n_paths)]
