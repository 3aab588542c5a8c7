"""Monte Carlo harness: frame generation, per-point BER and throughput,
Wilson intervals and CSV / JSON-lines output."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .channel import LinkParams, MultipathProfile, make_layout, realize_channel, transmit, transmit_multipath
from .estimation import EmConfig
from .ira import build_code, encode
from .receiver import run_frame
from .scenarios import ScenarioConfig
from .waveform import despread, qpsk_map, qpsk_unmap, spread

COLUMNS = ("scenario", "mode", "case", "ebno_db", "trials", "bit_errors", "bits", "ber", "ci95",
           "throughput_bps", "mean_rx_iters", "mean_em_iters")


@dataclass
class ResultRow:
    scenario: str
    mode: str
    case: str
    ebno_db: float
    trials: int
    bit_errors: int
    bits: int
    ber: float
    ci95: float
    throughput_bps: float
    mean_rx_iters: float
    mean_em_iters: float

    def as_dict(self) -> dict:
        return asdict(self)


def wilson_interval(errors: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    z = norm.ppf(0.5 + level / 2)
    p = errors / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(mid - half, 0.0), min(mid + half, 1.0)


def throughput_bps(cfg: ScenarioConfig, ber: float) -> float:
    """Information bits per codeword over the common frame duration, times (1 - BER)."""
    frame_s = cfg.K_base / cfg.info_rate_bps
    return cfg.geometry.K / frame_s * (1.0 - ber)


@lru_cache(maxsize=16)
def _code(K: int, N: int, seed: int):
    return build_code(K, N, seed=seed)


def trial_seed(master: int, trial: int) -> np.random.SeedSequence:
    """Seed of one trial, independent of execution order.

    The same trial index draws the same message, fading and noise at every
    Eb/N0 point and in every receiver mode (common random numbers), so
    curves and mode comparisons are paired.
    """
    return np.random.SeedSequence(master, spawn_key=(trial,))


def frame_params(cfg: ScenarioConfig, ebno_db: float) -> tuple[LinkParams, object]:
    geo = cfg.geometry
    Eb = 1.0
    N0 = Eb / 10 ** (ebno_db / 10)
    Es = Eb * 2 * geo.K / geo.N * geo.energy_scale
    n_data = geo.N // 2
    n_tx = n_data + (n_data // geo.pilot_spacing if geo.pilot_spacing else 0)
    # every case fills the same frame duration
    frame_s = cfg.K_base / cfg.info_rate_bps
    fading = cfg.case != "uncoded"
    mp = MultipathProfile.exponential(cfg.fingers) if cfg.fingers > 1 else MultipathProfile()
    params = LinkParams(Es=Es, N0=N0, g=cfg.g, users=cfg.users, f_d=cfg.f_d, multipath=mp, fading=fading)
    layout = make_layout(n_data, cfg.n_fb, cfg.n_ib, frame_s / n_tx, geo.pilot_spacing)
    return params, layout


def generate_frame(cfg: ScenarioConfig, ebno_db: float, trial: int):
    """Message, received chip stream(s), channel truth and code of one coded trial."""
    geo = cfg.geometry
    s_msg, s_chan, s_noise = trial_seed(cfg.seed, trial).spawn(3)
    params, layout = frame_params(cfg, ebno_db)
    code = _code(geo.K, geo.N, cfg.code_seed)
    msg = np.random.default_rng(s_msg).integers(0, 2, geo.K, dtype=np.uint8)
    tx = np.ones(layout.n_symbols, dtype=complex)
    tx[~layout.pilot_mask] = qpsk_map(encode(msg, code))
    real = realize_channel(params, layout, s_chan)
    chips = spread(tx, real.p_R, real.p_I)
    if cfg.fingers > 1:
        received = transmit_multipath(chips, real, s_noise)
    else:
        received = transmit(chips, real, s_noise)
    return msg, received, real, code


def _uncoded_frame(cfg: ScenarioConfig, ebno_db: float, trial: int):
    s_msg, s_chan, s_noise = trial_seed(cfg.seed, trial).spawn(3)
    params, layout = frame_params(cfg, ebno_db)
    bits = np.random.default_rng(s_msg).integers(0, 2, cfg.geometry.N, dtype=np.uint8)
    real = realize_channel(params, layout, s_chan)
    chips = spread(qpsk_map(bits), real.p_R, real.p_I)
    y = despread(transmit(chips, real, s_noise), real.p_R, real.p_I)
    hard = qpsk_unmap(y * np.conj(real.C_per_symbol()))
    return int(np.count_nonzero(hard != bits)), bits.size, 0, 0.0, None


def simulate_frame(cfg: ScenarioConfig, ebno_db: float, trial: int, trace: bool = False):
    """One trial. Returns ``(bit_errors, bits, rx_iters, em_iters, trace_record)``."""
    if cfg.case == "uncoded":
        return _uncoded_frame(cfg, ebno_db, trial)
    msg, received, real, code = generate_frame(cfg, ebno_db, trial)
    em = EmConfig(cfg.i_max, cfg.stop_fraction, cfg.h, cfg.n_fb, cfg.n_ib, cfg.i0_update)
    dec, diag = run_frame(received, real, code, cfg.mode, em, cfg.j_max, early_exit=cfg.early_exit,
                          bootstrap_iterations=cfg.bootstrap_iterations, trace=trace)
    errors = int(np.count_nonzero(dec != msg))
    diag.bit_errors = errors
    rec = None
    if trace:
        rec = {"scenario": cfg.name, "mode": cfg.label, "case": cfg.case, "ebno_db": ebno_db,
               "trial": trial, **diag.to_record()}
    return errors, msg.size, diag.rx_iters, diag.mean_em_iters, rec


def _run_chunk(args):
    cfg, ebno_db, trials, trace = args
    return [simulate_frame(cfg, ebno_db, t, trace) for t in trials]


def run_point(cfg: ScenarioConfig, ebno_db: float, jobs: int = 1, trace_sink=None) -> ResultRow:
    trace = trace_sink is not None
    idx = list(range(cfg.trials))
    if jobs > 1:
        chunks = [idx[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_run_chunk, [(cfg, ebno_db, c, trace) for c in chunks]))
        results = [None] * cfg.trials
        for c, part in zip(chunks, parts):
            for t, r in zip(c, part):
                results[t] = r
    else:
        results = _run_chunk((cfg, ebno_db, idx, trace))
    errors = sum(r[0] for r in results)
    bits = sum(r[1] for r in results)
    if trace:
        for r in results:
            trace_sink(r[4])
    ber = errors / bits
    lo, hi = wilson_interval(errors, bits)
    return ResultRow(cfg.name, cfg.label, cfg.case, float(ebno_db), cfg.trials, errors, bits, ber,
                     float(hi - lo) / 2, throughput_bps(cfg, ber),
                     float(np.mean([r[2] for r in results])), float(np.mean([r[3] for r in results])))


def run_scenario(cfg: ScenarioConfig, jobs: int = 1, on_row=None, trace_sink=None) -> list[ResultRow]:
    """Every Eb/N0 point of one curve; ``on_row`` sees each row as it finishes."""
    cfg.validate()
    rows = []
    for e in cfg.ebno_db:
        row = run_point(cfg, e, jobs, trace_sink)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


class ResultWriter:
    """Writes rows as they arrive; the file is truncated when opened and
    flushed after every row, so an interrupted run keeps finished points."""

    def __init__(self, path, fmt: str = "csv", stream=None):
        if fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        self.fmt = fmt
        self.fh = open(path, "w", newline="") if path not in (None, "-") else None
        self._stream = self.fh if self.fh is not None else stream
        self._header = False

    def write(self, row: ResultRow, stream=None):
        out = stream or self._stream
        if self.fmt == "json":
            out.write(json.dumps(row.as_dict()) + "\n")
        else:
            w = csv.writer(out, lineterminator="\n")
            if not self._header:
                w.writerow(COLUMNS)
                self._header = True
            w.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
        out.flush()

    def close(self):
        if self.fh is not None:
            self.fh.close()


def emit_results(rows, fmt: str, path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    w = ResultWriter(path, fmt)
    try:
        for r in rows:
            w.write(r)
    finally:
        w.close()


def format_results(rows, fmt: str = "csv") -> str:
    buf = io.StringIO()
    w = ResultWriter(None, fmt)
    for r in rows:
        w.write(r, buf)
    return buf.getvalue()


def read_results(path, fmt: str = "csv") -> list[dict]:
    text = Path(path).read_text()
    if fmt == "json":
        return [json.loads(l) for l in text.splitlines() if l.strip()]
    return list(csv.DictReader(io.StringIO(text)))
