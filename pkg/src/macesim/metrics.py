"""NMSE accumulation and fronthaul / complexity accounting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("local", "central", "mace")


@dataclass
class NmseAccumulator:
    """Squared-error accumulator for one scheme.

    ``norm`` may be a scalar or an array (one entry per UE), in which case
    ``sum_sq_err`` is accumulated elementwise.
    """

    scheme: str
    norm: np.ndarray | float
    sum_sq_err: np.ndarray | float = 0.0
    count: int = 0

    def nmse(self):
        if self.count == 0:
            raise ValueError("no blocks accumulated")
        return self.sum_sq_err / (self.count * self.norm)

    def merge(self, other: "NmseAccumulator") -> "NmseAccumulator":
        if other.scheme != self.scheme:
            raise ValueError("cannot merge accumulators of different schemes")
        return NmseAccumulator(self.scheme, self.norm, self.sum_sq_err + other.sum_sq_err,
                               self.count + other.count)


def squared_error(h_true: np.ndarray, h_est: np.ndarray) -> np.ndarray:
    d = h_true - h_est
    return np.sum(d.real**2 + d.imag**2, axis=-1)


def accumulate(acc: NmseAccumulator, h_true: np.ndarray, h_est: np.ndarray) -> NmseAccumulator:
    if h_true.shape != h_est.shape:
        raise ValueError(f"shape mismatch {h_true.shape} vs {h_est.shape}")
    acc.sum_sq_err = acc.sum_sq_err + squared_error(h_true, h_est)
    acc.count += 1
    return acc


@dataclass(frozen=True)
class ResourceReport:
    scheme: str
    fronthaul_scalars: int
    inversion_dim: int


def _check(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def fronthaul(scheme: str, L: int, N: int, tau_p: int) -> int:
    """Complex scalars sent over fronthaul per coherence block for one UE's estimate."""
    _check(scheme)
    if scheme == "local":
        return 0
    if scheme == "central":
        return tau_p * L * N
    return tau_p * (N + L - 1)


def inversion_dim(scheme: str, L: int, N: int) -> int:
    _check(scheme)
    return {"local": N, "central": L * N, "mace": N + L - 1}[scheme]


def resources(scheme: str, L: int, N: int, tau_p: int) -> ResourceReport:
    return ResourceReport(scheme, fronthaul(scheme, L, N, tau_p), inversion_dim(scheme, L, N))


def to_db(x):
    return 10.0 * np.log10(x)


@dataclass
class NmseReport:
    """Per-realization NMSE (averaged over UEs) for every scheme."""

    empirical: dict[str, list[float]] = field(default_factory=lambda: {s: [] for s in SCHEMES})
    theoretical: dict[str, list[float]] = field(default_factory=lambda: {s: [] for s in SCHEMES})

    def add(self, scheme: str, empirical: float, theoretical: float) -> None:
        self.empirical[scheme].append(float(empirical))
        self.theoretical[scheme].append(float(theoretical))
