"""Simulation configuration and the config-file reader."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


FADING_MODES = ("rician", "los", "nlos")
LOS_MODES = ("running", "frozen")
FUSION_MODES = ("estimate", "unit")
FUSED_NOISE_MODES = ("exact", "printed")


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulated network.

    Powers are in watts, distances in meters. ``blocks`` counts the coherence
    blocks that enter the NMSE average; ``warmup`` blocks are simulated before
    them and only feed the statistics trackers.
    """

    L: int = 3
    N: int = 5
    K: int = 5
    tau_p: int = 5
    p: float = 0.1
    sigma2: float = dbm_to_watt(-92.0)
    eta: float = 0.95
    B: int = 100
    area_m: float = 1000.0
    seed: int = 0
    blocks: int = 300
    warmup: int = 20
    # propagation
    ap_height_m: float = 10.0
    min_distance_m: float = 5.0
    angular_spread_deg: float = 15.0
    fading: str = "rician"
    # estimation knobs
    los_mode: str = "running"
    fusion: str = "estimate"
    fused_noise: str = "exact"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.L < 1 or self.N < 1 or self.K < 0:
            raise ValueError(f"invalid sizes L={self.L}, N={self.N}, K={self.K}")
        if self.tau_p < 2:
            raise ValueError(f"tau_p must be >= 2, got {self.tau_p}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.p < 0 or self.sigma2 < 0 or self.area_m < 0:
            raise ValueError("p, sigma2 and area_m must be nonnegative")
        if self.B < 1 or self.blocks < 1 or self.warmup < 0:
            raise ValueError("B and blocks must be positive, warmup nonnegative")
        for name, allowed in (
            ("fading", FADING_MODES),
            ("los_mode", LOS_MODES),
            ("fusion", FUSION_MODES),
            ("fused_noise", FUSED_NOISE_MODES),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")

    @property
    def fused_dim(self) -> int:
        return self.N + self.L - 1

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


FIG1 = SimConfig(L=3, K=5, N=5, tau_p=5, p=0.1, blocks=300)
FIG2 = SimConfig(L=4, K=7, N=5, tau_p=5, p=0.1, blocks=300)

PRESETS = {
    "fig1": (FIG1, "tau_p", [3, 5, 7, 9]),
    "fig2": (FIG2, "N", [2, 4, 8, 16]),
}


def _coerce(raw: str, kind):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw.strip()


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}
_TYPE_MAP = {"int": int, "float": float, "str": str}


def parse_sim_section(section: dict[str, str], base: SimConfig) -> SimConfig:
    changes = {}
    for key, raw in section.items():
        if key == "sigma2_dbm":
            changes["sigma2"] = dbm_to_watt(float(raw))
            continue
        if key == "p_dbm":
            changes["p"] = dbm_to_watt(float(raw))
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown [sim] key {key!r}")
        changes[key] = _coerce(raw, _TYPE_MAP[_FIELD_TYPES[key]])
    return replace(base, **changes)


def read_config_file(path: str | Path) -> configparser.ConfigParser:
    """Read an INI-style file with optional ``[sim]`` and ``[experiment]`` sections."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep L, N, K case-sensitive
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    unknown = set(parser.sections()) - {"sim", "experiment"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return parser


def parse_values(text: str) -> list:
    """Parse ``"3,5,7"`` into numbers, keeping ints where possible."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        val = float(tok)
        out.append(int(val) if val.is_integer() and "." not in tok and "e" not in tok.lower() else val)
    if not out:
        raise ValueError(f"empty value list {text!r}")
    return out


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.Philox(seed_or_rng))
