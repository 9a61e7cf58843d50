"""Randomized pilot transmission: pilot book, per-block assignment, received and despread signals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .geometry import complex_normal


@dataclass(frozen=True)
class PilotBook:
    Phi: np.ndarray  # (tau_p, tau_p), rows are pilots

    @property
    def tau_p(self) -> int:
        return self.Phi.shape[0]


@dataclass(frozen=True)
class PilotAssignment:
    """Pilot indices (0-based) and +-1 signs of the K UEs in one block."""

    t: np.ndarray
    gamma: np.ndarray

    @property
    def K(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class PilotBlock:
    assignment: PilotAssignment
    Y: np.ndarray  # (L, N, tau_p)
    channels: np.ndarray  # (L, K, N)
    noise: np.ndarray  # (L, N, tau_p)


def make_pilot_book(tau_p: int) -> PilotBook:
    """DFT pilot book scaled so that Phi Phi^H = tau_p I."""
    if tau_p < 1:
        raise ValueError("tau_p must be positive")
    n = np.arange(tau_p)
    Phi = np.exp(-2j * np.pi * np.outer(n, n) / tau_p)
    if tau_p <= 2:
        Phi = Phi.real.astype(complex)  # exact +-1 entries
    return PilotBook(Phi=Phi)


def draw_assignment(K: int, tau_p: int, rng: np.random.Generator) -> PilotAssignment:
    t = rng.integers(0, tau_p, size=K)
    gamma = np.where(rng.random(K) < 0.5, -1.0, 1.0)
    return PilotAssignment(t=t, gamma=gamma)


def transmitted(assignment: PilotAssignment, book: PilotBook) -> np.ndarray:
    """Signed pilot rows gamma_k phi_{t_k}, shape (K, tau_p)."""
    return assignment.gamma[:, None] * book.Phi[assignment.t]


def synthesize_received(channels: np.ndarray, assignment: PilotAssignment, book: PilotBook,
                        cfg: SimConfig, rng: np.random.Generator) -> PilotBlock:
    """Received pilot matrices Y_j = sum_i sqrt(p) h_{j,i} gamma_i phi_{t_i}^T + N_j.

    ``channels`` has shape (L, K, N). Noise is drawn fresh from ``rng``.
    """
    L, K, N = channels.shape
    if K != assignment.K:
        raise ValueError(f"channels carry {K} UEs, assignment {assignment.K}")
    noise = complex_normal(rng, (L, N, book.tau_p), cfg.sigma2)
    return assemble_block(channels, assignment, book, cfg.p, noise)


def assemble_block(channels, assignment, book, p, noise) -> PilotBlock:
    S = transmitted(assignment, book)
    Y = np.sqrt(p) * np.einsum("jkn,kt->jnt", channels, S) + noise
    return PilotBlock(assignment=assignment, Y=Y, channels=channels, noise=noise)


def despreaders(assignment: PilotAssignment, book: PilotBook) -> np.ndarray:
    """Columns conj(gamma_k phi_{t_k}) / sqrt(tau_p), shape (tau_p, K)."""
    return transmitted(assignment, book).conj().T / np.sqrt(book.tau_p)


def despread(Y: np.ndarray, assignment: PilotAssignment, book: PilotBook) -> np.ndarray:
    """Despread every UE from received matrices ``Y`` of shape (..., rows, tau_p).

    Returns shape (..., K, rows).
    """
    return np.swapaxes(Y @ despreaders(assignment, book), -1, -2)


def despread_local(Yj: np.ndarray, k: int, assignment: PilotAssignment, book: PilotBook) -> np.ndarray:
    """y_{j,t_k} = Y_j conj(gamma_k phi_{t_k}) / sqrt(tau_p) for one AP."""
    return despread(Yj, assignment, book)[k]


def despread_all_local(block: PilotBlock, book: PilotBook) -> np.ndarray:
    """Local despread signals y_{j,t_k} for all (j, k), shape (L, K, N)."""
    return despread(block.Y, block.assignment, book)


def stack(local: np.ndarray) -> np.ndarray:
    """(L, K, N) per-AP vectors -> (K, LN) collective vectors."""
    L, K, N = local.shape
    return local.transpose(1, 0, 2).reshape(K, L * N)


def despread_central(block: PilotBlock, k: int, book: PilotBook) -> np.ndarray:
    return stack(despread_all_local(block, book))[k]


def stacked_received(block: PilotBlock) -> np.ndarray:
    L, N, T = block.Y.shape
    return block.Y.reshape(L * N, T)


def delta_oracle(assignment: PilotAssignment, i: int, k: int) -> int:
    """Interference coefficient of UE i in the despread signal of UE k."""
    if i == k:
        raise ValueError("delta is defined for i != k only")
    if assignment.t[i] != assignment.t[k]:
        return 0
    return int(assignment.gamma[i] * assignment.gamma[k])


def delta_matrix(assignment: PilotAssignment) -> np.ndarray:
    """All coefficients at once: D[k, i] = delta_i in UE k's despread signal, D[k, k] = 1."""
    same = assignment.t[:, None] == assignment.t[None, :]
    return np.where(same, np.outer(assignment.gamma, assignment.gamma), 0.0)
