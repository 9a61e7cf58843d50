"""Network layout, correlated Rician channel statistics and channel sampling.

Propagation follows a log-distance path loss with a distance-dependent Rician
factor. The NLoS correlation uses the local scattering model on a
half-wavelength uniform linear array with a Gaussian angular spread around the
geometric AP-to-UE azimuth.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import SimConfig


class StatsError(RuntimeError):
    """Raised when constructed channel statistics violate their contract."""


@dataclass(frozen=True)
class Positions:
    ap: np.ndarray  # (L, 2)
    ue: np.ndarray  # (K, 2)


@dataclass(frozen=True)
class NetworkStats:
    """Per (AP j, UE k) channel statistics.

    Arrays are indexed ``[j, k, ...]``: ``hbar`` is (L, K, N), ``Rbreve`` is
    (L, K, N, N) and ``beta`` is (L, K).
    """

    positions: Positions
    hbar: np.ndarray
    Rbreve: np.ndarray
    beta: np.ndarray
    kappa: np.ndarray

    @property
    def L(self) -> int:
        return self.hbar.shape[0]

    @property
    def K(self) -> int:
        return self.hbar.shape[1]

    @property
    def N(self) -> int:
        return self.hbar.shape[2]

    @property
    def R(self) -> np.ndarray:
        """Full correlation matrices R_{j,k} = hbar hbar^H + Rbreve, shape (L, K, N, N)."""
        return self.Rbreve + np.einsum("jkm,jkn->jkmn", self.hbar, self.hbar.conj())

    def nlos_factor(self) -> np.ndarray:
        """Square-root factors F with F F^H = Rbreve, shape (L, K, N, N)."""
        if self.Rbreve.size == 0:
            return np.zeros_like(self.Rbreve)
        lam, U = np.linalg.eigh(self.Rbreve)
        tr = np.trace(self.Rbreve, axis1=-2, axis2=-1).real
        floor = -1e-10 * tr / self.N
        if np.any(lam.min(axis=-1) < floor - 1e-300):
            raise StatsError("NLoS correlation matrix is not positive semidefinite")
        return U * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]


@dataclass(frozen=True)
class CollectiveStats:
    hbar: np.ndarray  # (LN,)
    Rbreve: np.ndarray  # (LN, LN), block diagonal
    R: np.ndarray  # (LN, LN)


def place_network(cfg: SimConfig, rng: np.random.Generator) -> Positions:
    ap = rng.uniform(0.0, 1.0, size=(cfg.L, 2)) * cfg.area_m
    ue = rng.uniform(0.0, 1.0, size=(cfg.K, 2)) * cfg.area_m
    return Positions(ap=ap, ue=ue)


def pathloss_db(d3: np.ndarray) -> np.ndarray:
    return -30.5 - 36.7 * np.log10(d3)


def rician_factor(d2: np.ndarray) -> np.ndarray:
    return 10.0 ** (1.3 - 0.003 * d2)


def steering_vector(theta: np.ndarray, N: int) -> np.ndarray:
    """Half-wavelength ULA response exp(i pi n sin(theta)), n = 0..N-1."""
    n = np.arange(N)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(theta), n))


@lru_cache(maxsize=None)
def _hermite_nodes(count: int):
    x, w = np.polynomial.hermite.hermgauss(count)
    return x, w / np.sqrt(np.pi)


def local_scattering(theta: np.ndarray, N: int, spread_rad: float, nodes: int = 120) -> np.ndarray:
    """Normalized local-scattering correlation (unit diagonal) for each nominal angle.

    Entry (m, n) is E[exp(i pi (m - n) sin(theta + d))] with d ~ N(0, spread^2),
    evaluated by Gauss-Hermite quadrature. The result is Toeplitz Hermitian.
    """
    theta = np.asarray(theta, dtype=float)
    x, w = _hermite_nodes(nodes)
    phi = theta[..., None] + np.sqrt(2.0) * spread_rad * x  # (..., Q)
    lags = np.arange(N)
    col = np.einsum("...q,...ql->...l", np.broadcast_to(w, phi.shape),
                    np.exp(1j * np.pi * lags * np.sin(phi)[..., None]))
    diff = lags[:, None] - lags[None, :]
    R = np.where(diff >= 0, col[..., np.abs(diff)], col[..., np.abs(diff)].conj())
    R[..., lags, lags] = 1.0
    return R


def build_stats(positions: Positions, cfg: SimConfig, rng: np.random.Generator) -> NetworkStats:
    """Channel statistics for every (AP, UE) pair.

    ``rng`` supplies the common LoS phase of each pair, drawn once here so the
    LoS component stays fixed across coherence blocks.
    """
    delta = positions.ue[None, :, :] - positions.ap[:, None, :]  # (L, K, 2)
    d2 = np.hypot(delta[..., 0], delta[..., 1])
    if cfg.min_distance_m <= 0 and np.any(d2 == 0):
        raise StatsError("zero AP-UE distance")
    d2 = np.maximum(d2, cfg.min_distance_m)
    d3 = np.sqrt(d2**2 + cfg.ap_height_m**2)
    beta = 10.0 ** (pathloss_db(d3) / 10.0)
    theta = np.arctan2(delta[..., 1], delta[..., 0])
    phase = rng.uniform(0.0, 2.0 * np.pi, size=beta.shape)

    if cfg.fading == "los":
        kappa = np.full(beta.shape, np.inf)
        los_share, nlos_share = np.ones_like(beta), np.zeros_like(beta)
    elif cfg.fading == "nlos":
        kappa = np.zeros_like(beta)
        los_share, nlos_share = np.zeros_like(beta), np.ones_like(beta)
    else:
        kappa = rician_factor(d2)
        los_share, nlos_share = kappa / (kappa + 1.0), 1.0 / (kappa + 1.0)

    a = steering_vector(theta, cfg.N)  # (L, K, N)
    hbar = np.sqrt(beta * los_share)[..., None] * np.exp(1j * phase)[..., None] * a
    Rnorm = local_scattering(theta, cfg.N, np.deg2rad(cfg.angular_spread_deg))
    Rbreve = (beta * nlos_share)[..., None, None] * Rnorm
    return NetworkStats(positions=positions, hbar=hbar, Rbreve=Rbreve, beta=beta, kappa=kappa)


def collective(stats: NetworkStats, k: int) -> CollectiveStats:
    L, N = stats.L, stats.N
    hbar = stats.hbar[:, k, :].reshape(L * N)
    Rbreve = np.zeros((L * N, L * N), dtype=complex)
    for j in range(L):
        Rbreve[j * N:(j + 1) * N, j * N:(j + 1) * N] = stats.Rbreve[j, k]
    return CollectiveStats(hbar=hbar, Rbreve=Rbreve, R=Rbreve + np.outer(hbar, hbar.conj()))


def collective_all(stats: NetworkStats) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched collective statistics for every UE: shapes (K, LN), (K, LN, LN), (K, LN, LN)."""
    L, K, N = stats.L, stats.K, stats.N
    hbar = stats.hbar.transpose(1, 0, 2).reshape(K, L * N)
    Rbreve = np.zeros((K, L * N, L * N), dtype=complex)
    for j in range(L):
        Rbreve[:, j * N:(j + 1) * N, j * N:(j + 1) * N] = stats.Rbreve[j]
    R = Rbreve + np.einsum("km,kn->kmn", hbar, hbar.conj())
    return hbar, Rbreve, R


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    z = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return np.sqrt(var / 2.0) * (z[..., 0] + 1j * z[..., 1])


def sample_channels(stats: NetworkStats, rng: np.random.Generator, factor: np.ndarray | None = None) -> np.ndarray:
    """One block of channel realizations h_{j,k}, shape (L, K, N).

    Pass a precomputed ``factor`` (from :meth:`NetworkStats.nlos_factor`) to
    skip refactoring the correlation matrices every block.
    """
    if factor is None:
        factor = stats.nlos_factor()
    w = complex_normal(rng, stats.hbar.shape)
    return stats.hbar + np.einsum("jkmn,jkn->jkm", factor, w)


def assign_master(stats: NetworkStats, k: int) -> int:
    """Index of the AP with the largest large-scale coefficient for UE k (ties: lowest index)."""
    return int(np.argmax(stats.beta[:, k]))


def assign_masters(stats: NetworkStats) -> np.ndarray:
    return np.argmax(stats.beta, axis=0)
