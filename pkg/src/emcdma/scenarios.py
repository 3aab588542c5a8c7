"""Scenario configuration, the built-in figure presets and the key=value file
format read by the CLI."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .channel import doppler_hz
from .receiver import ESTIMATION, ReceiverMode

PILOT_SPACING = 10
CASES = ("A", "B", "C", "pace", "perfect", "uncoded")
DEFAULT_TRIALS = 500
PAPER_TRIALS = 5000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CaseGeometry:
    K: int
    N: int
    pilot_spacing: int | None
    energy_scale: float   # symbol energy relative to Eb * 2K/N


def case_geometry(case: str, K_base: int = 1000) -> CaseGeometry:
    """Code size, pilots and symbol-energy scale for the pilot budget cases.

    The pilot frame carries ``K_base/2`` data symbols plus one pilot per
    ``PILOT_SPACING``. The blind cases spend that budget on more
    information (A), longer symbols (B) or more parity (C).
    """
    n_data = K_base  # rate 1/2: K_base information bits -> K_base QPSK symbols
    extra = n_data // PILOT_SPACING
    if case == "pace":
        return CaseGeometry(K_base, 2 * K_base, PILOT_SPACING, 1.0)
    if case == "perfect":
        return CaseGeometry(K_base, 2 * K_base, None, 1.0)
    if case == "uncoded":
        # every bit is an information bit: Es = 2 Eb
        return CaseGeometry(K_base, 2 * K_base, None, 2.0)
    if case == "A":
        return CaseGeometry(K_base + extra, 2 * (K_base + extra), None, 1.0)
    if case == "B":
        return CaseGeometry(K_base, 2 * K_base, None, (n_data + extra) / n_data)
    if case == "C":
        return CaseGeometry(K_base, 2 * (n_data + extra), None, 1.0)
    raise ConfigError(f"unknown case {case!r}; expected one of {CASES}")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    ebno_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    case: str = "C"
    estimation: str = "blind_I"
    adaptivity: str = "full"
    phase: str = "known"
    fingers: int = 1
    n_fb: int = 40
    n_ib: int = 40
    g: int = 31
    users: int = 1
    velocity_kmh: float = 120.0
    carrier_hz: float = 1.8e9
    trials: int = DEFAULT_TRIALS
    seed: int = 1
    j_max: int = 9
    i_max: int = 10
    h: float = 0.1
    stop_fraction: float = 0.1
    info_rate_bps: float = 100_000.0
    K_base: int = 1000
    early_exit: bool = True
    bootstrap_iterations: int = 20
    code_seed: int = 7
    i0_update: str = "expected"

    def __post_init__(self):
        object.__setattr__(self, "ebno_db", tuple(float(x) for x in np.atleast_1d(self.ebno_db)))
        self.validate()

    def validate(self):
        if not self.ebno_db:
            raise ConfigError("Eb/N0 grid is empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.estimation not in ESTIMATION:
            raise ConfigError(f"unknown estimation {self.estimation!r}")
        if self.case == "pace" and self.estimation != "pace":
            raise ConfigError("case 'pace' requires estimation = pace")
        if self.estimation == "pace" and self.case != "pace":
            raise ConfigError("PACE estimation needs the pilot frame (case = pace)")
        if self.case == "perfect" and self.estimation != "perfect":
            raise ConfigError("case 'perfect' requires estimation = perfect")
        if self.users < 1:
            raise ConfigError("users must be >= 1")
        if self.j_max < 1 or self.i_max < 1:
            raise ConfigError("j_max and i_max must be >= 1")
        if self.n_fb % 2 or self.n_ib % 2 or self.n_ib > self.n_fb or self.n_fb % self.n_ib:
            raise ConfigError("n_fb, n_ib must be even with n_ib dividing n_fb")
        if self.g not in (31, 127):
            raise ConfigError("spreading factor must be 31 or 127")
        if self.fingers not in (1, 2, 3):
            raise ConfigError("fingers must be 1, 2 or 3")
        if self.i0_update not in ("expected", "plugin"):
            raise ConfigError("i0_update must be 'expected' or 'plugin'")
        if not (0 < self.stop_fraction < 1) or self.h <= 0:
            raise ConfigError("need 0 < stop_fraction < 1 and h > 0")
        try:
            self.mode
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @property
    def mode(self) -> ReceiverMode:
        return ReceiverMode(self.estimation, self.adaptivity, self.phase, self.fingers)

    @property
    def geometry(self) -> CaseGeometry:
        return case_geometry(self.case, self.K_base)

    @property
    def f_d(self) -> float:
        return doppler_hz(self.velocity_kmh, self.carrier_hz)

    @property
    def code_rate(self) -> str:
        geo = self.geometry
        return f"{geo.K}/{geo.N}"

    @property
    def label(self) -> str:
        return f"{self.estimation}/{self.adaptivity}/{self.phase}/g{self.g}/u{self.users}/L{self.fingers}/fb{self.n_fb}"

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(key, raw: str):
    t = str(_FIELD_TYPES[key])
    raw = raw.strip()
    if key == "ebno_db":
        return parse_grid(raw)
    if t == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if t == "int":
        return int(raw)
    if t == "float":
        return float(raw)
    return raw


def parse_grid(text: str) -> tuple:
    """``a:b:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ConfigError(f"bad Eb/N0 range {text!r}")
            n = int(np.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 10) for i in range(n))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad Eb/N0 grid {text!r}") from None


def parse_config_text(text: str) -> list[ScenarioConfig]:
    """Flat ``key = value`` lines, ``#`` comments. Returns one scenario."""
    kw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        try:
            kw[key] = _coerce(key, val)
        except ValueError as e:
            raise ConfigError(f"line {n}: {e}") from None
    return [ScenarioConfig(**kw)]


def _curves(base: ScenarioConfig, variants) -> list[ScenarioConfig]:
    return [base.with_(**v) for v in variants]


def builtin_scenarios() -> dict[str, list[ScenarioConfig]]:
    su = ScenarioConfig(name="fig3", ebno_db=tuple(range(0, 13)), phase="known")
    fig3 = _curves(su, [
        dict(case="perfect", estimation="perfect"),
        dict(case="pace", estimation="pace"),
        dict(case="A", estimation="blind_I"),
        dict(case="B", estimation="blind_I"),
        dict(case="C", estimation="blind_I"),
        dict(case="A", estimation="blind_II"),
        dict(case="C", estimation="blind_II"),
    ])
    fig4 = [c.with_(name="fig4") for c in fig3]

    mai = ScenarioConfig(name="fig5", ebno_db=(5.0, 10.0, 15.0, 20.0, 25.0), users=4, phase="unknown")
    fig5 = []
    for ad in ("partial", "full"):
        fig5 += _curves(mai.with_(adaptivity=ad), [
            dict(case="pace", estimation="pace"),
            dict(case="C", estimation="blind_I"),
            dict(case="C", estimation="blind_II"),
        ])
    fig6 = []
    for ad in ("partial", "full"):
        fig6 += _curves(mai.with_(name="fig6", adaptivity=ad), [
            dict(case="pace", estimation="pace"),
            dict(case="A", estimation="blind_I"),
            dict(case="A", estimation="blind_II"),
        ])

    nfb = ScenarioConfig(name="fig7", ebno_db=tuple(range(0, 15, 2)), phase="unknown")
    fig7 = []
    for n in (10, 40):
        fig7 += _curves(nfb.with_(n_fb=n, n_ib=n), [
            dict(case="perfect", estimation="perfect"),
            dict(case="pace", estimation="pace"),
            dict(case="C", estimation="blind_I"),
            dict(case="C", estimation="blind_II"),
            dict(case="A", estimation="blind_I"),
            dict(case="A", estimation="blind_II"),
        ])

    sf = ScenarioConfig(name="fig8", ebno_db=tuple(range(0, 25, 4)), phase="unknown",
                        case="C", estimation="blind_II")
    fig8 = [sf.with_(g=g, users=u, adaptivity=ad)
            for g in (31, 127) for u in (4, 7) for ad in ("partial", "full")]

    rake = ScenarioConfig(name="fig9", ebno_db=tuple(range(0, 21, 4)), phase="unknown",
                          case="C", estimation="blind_II", g=127, fingers=3)
    fig9 = [rake.with_(users=u, adaptivity=ad) for u in (1, 4, 7) for ad in ("partial", "full")]
    fig9 += [rake.with_(users=u, fingers=1) for u in (1, 4)]

    return {"fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6,
            "fig7": fig7, "fig8": fig8, "fig9": fig9}


def get_scenario(name: str) -> list[ScenarioConfig]:
    presets = builtin_scenarios()
    if name not in presets:
        raise ConfigError(f"unknown scenario {name!r}; presets: {', '.join(sorted(presets))}")
    return presets[name]
