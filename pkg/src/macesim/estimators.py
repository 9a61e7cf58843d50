"""Local, centralized and master-assisted LMMSE channel estimation.

All three schemes share one LMMSE kernel,

    h_hat = hbar + sqrt(p tau_p) Rbreve Q_tk^{-1} (y - sqrt(p tau_p) hbar),

applied at dimension N (local), LN (central) or N + L - 1 (master-assisted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .geometry import NetworkStats, collective_all
from .pilots import PilotAssignment, PilotBook, despread, stack
from .tracking import (
    fused,
    fused_noise,
    hermitize,
    solve_hermitian,
    true_q_tk_central,
    true_q_tk_local,
)

SCHEMES = ("local", "central", "mace")


@dataclass(frozen=True)
class LmmseInputs:
    hbar: np.ndarray
    Rbreve: np.ndarray
    Q_tk: np.ndarray
    y: np.ndarray
    p: float
    tau_p: int

    def __post_init__(self):
        n = self.hbar.shape[-1]
        if self.y.shape[-1] != n or self.Rbreve.shape[-2:] != (n, n) or self.Q_tk.shape[-2:] != (n, n):
            raise ValueError("LMMSE inputs have mismatched dimensions")


@dataclass(frozen=True)
class ChannelEstimate:
    vector: np.ndarray
    scheme: str
    ap: int
    ue: int
    block: int | None = None


@dataclass(frozen=True)
class FusionSet:
    """Fusion vectors of the ASAPs of one UE and the resulting block-diagonal operator."""

    vectors: np.ndarray  # (L, N); row `master` is unused
    master: int
    Vdiag: np.ndarray  # (LN, N + L - 1)


def lmmse_gain(Rbreve: np.ndarray, Q_tk: np.ndarray, p: float, tau_p: int,
               scope: str = "", block=None) -> np.ndarray:
    """sqrt(p tau_p) Rbreve Q_tk^{-1}, obtained from a Hermitian solve.

    Since both matrices are Hermitian, Rbreve Q^{-1} = (Q^{-1} Rbreve)^H.
    Stacks whose numerator is exactly zero get a zero gain without solving.
    """
    gain = np.zeros(np.broadcast_shapes(Rbreve.shape, Q_tk.shape), dtype=complex)
    live = np.any(Rbreve != 0, axis=(-2, -1))
    live = np.broadcast_to(live, gain.shape[:-2])
    if not np.any(live):
        return gain
    Rb = np.broadcast_to(Rbreve, gain.shape)
    Qb = np.broadcast_to(Q_tk, gain.shape)
    X = solve_hermitian(Qb[live], Rb[live], scope, block)
    gain[live] = np.sqrt(p * tau_p) * np.swapaxes(X, -1, -2).conj()
    return gain


def apply_gain(gain: np.ndarray, hbar: np.ndarray, y: np.ndarray, p: float, tau_p: int) -> np.ndarray:
    innov = y - np.sqrt(p * tau_p) * hbar
    return hbar + (gain @ innov[..., None])[..., 0]


def lmmse(inputs: LmmseInputs, scope: str = "", block=None) -> np.ndarray:
    g = lmmse_gain(inputs.Rbreve, inputs.Q_tk, inputs.p, inputs.tau_p, scope, block)
    return apply_gain(g, inputs.hbar, inputs.y, inputs.p, inputs.tau_p)


def error_covariance(Rbreve: np.ndarray, gain: np.ndarray, p: float, tau_p: int) -> np.ndarray:
    """Error correlation of the LMMSE estimate: Rbreve - p tau_p Rbreve Q^{-1} Rbreve."""
    return hermitize(Rbreve - np.sqrt(p * tau_p) * gain @ Rbreve)


def theoretical_nmse(Rbreve: np.ndarray, R: np.ndarray, Q_tk: np.ndarray, p: float, tau_p: int,
                     selector: slice | None = None, gain: np.ndarray | None = None) -> np.ndarray:
    """Closed-form NMSE of the LMMSE estimate restricted to the ``selector`` index range.

    ``R`` is the full correlation used for normalization (its selected diagonal
    block is tr(R_{l,k})). Stacked inputs give stacked outputs.
    """
    if gain is None:
        gain = lmmse_gain(Rbreve, Q_tk, p, tau_p, "theory")
    C = error_covariance(Rbreve, gain, p, tau_p)
    sel = selector if selector is not None else slice(None)
    err = np.trace(C[..., sel, sel], axis1=-2, axis2=-1).real
    norm = np.trace(R[..., sel, sel], axis1=-2, axis2=-1).real
    if np.any(err < -1e-10 * np.maximum(norm, 1e-300)):
        raise ArithmeticError("error covariance has negative trace; statistics are inconsistent")
    return np.maximum(err, 0.0) / norm


def master_slice(l: int, N: int) -> slice:
    """Rows of the fused vector belonging to the master AP (0-based)."""
    return slice(l, l + N)


def central_slice(l: int, N: int) -> slice:
    return slice(l * N, (l + 1) * N)


# --------------------------------------------------------------------------
# fusion
# --------------------------------------------------------------------------

def fusion_matrix(vectors: np.ndarray, master: int) -> np.ndarray:
    """Block-diagonal operator blkdiag(v_1, ..., v_{l-1}, I_N, v_{l+1}, ..., v_L).

    ``vectors`` has shape (L, N); the master row is ignored.
    """
    L, N = vectors.shape
    V = np.zeros((L * N, N + L - 1), dtype=complex)
    col = 0
    for j in range(L):
        rows = slice(j * N, (j + 1) * N)
        if j == master:
            V[rows, col:col + N] = np.eye(N)
            col += N
        else:
            V[rows, col] = vectors[j]
            col += 1
    return V


def fusion_matrices(local_est: np.ndarray, masters: np.ndarray, normalize: bool = False) -> np.ndarray:
    """Fusion operators of every UE from local estimates (L, K, N); returns (K, LN, N+L-1)."""
    L, K, N = local_est.shape
    vecs = local_est
    if normalize:
        nrm = np.linalg.norm(vecs, axis=-1, keepdims=True)
        vecs = np.divide(vecs, nrm, out=np.zeros_like(vecs), where=nrm > 0)
    return np.stack([fusion_matrix(vecs[:, k, :], int(masters[k])) for k in range(K)]) if K else \
        np.zeros((0, L * N, N + L - 1), dtype=complex)


def build_fusion(local_est: np.ndarray, k: int, l: int, normalize: bool = False) -> FusionSet:
    vecs = local_est[:, k, :]
    if normalize:
        nrm = np.linalg.norm(vecs, axis=-1, keepdims=True)
        vecs = np.divide(vecs, nrm, out=np.zeros_like(vecs), where=nrm > 0)
    return FusionSet(vectors=vecs, master=l, Vdiag=fusion_matrix(vecs, l))


def fuse(V: np.ndarray, Y_stacked: np.ndarray) -> np.ndarray:
    """Fused received matrices (V^H Y), shape (K, N+L-1, tau_p) for stacked V."""
    return np.swapaxes(V, -1, -2).conj() @ Y_stacked


def despread_fused(Ytilde: np.ndarray, assignment: PilotAssignment, book: PilotBook) -> np.ndarray:
    """Despread UE k from its own fused matrix Ytilde[k]; returns (K, N+L-1)."""
    all_ues = despread(Ytilde, assignment, book)  # (K, K, D)
    K = Ytilde.shape[0]
    return all_ues[np.arange(K), np.arange(K)]


# --------------------------------------------------------------------------
# true-statistics estimation for one network
# --------------------------------------------------------------------------

class TrueStatEstimator:
    """All three schemes with exact second-order statistics of one network.

    Gains of the local and central estimators are fixed for the network and
    computed once; the master-assisted gains depend on the fusion vectors and
    are recomputed per block.
    """

    def __init__(self, stats: NetworkStats, cfg: SimConfig, masters: np.ndarray):
        self.stats, self.cfg, self.masters = stats, cfg, np.asarray(masters)
        p, tau = cfg.p, cfg.tau_p
        L, K, N = stats.L, stats.K, stats.N
        self.R_local = stats.R
        self.Qtk_local = true_q_tk_local(stats, cfg)
        self.G_local = lmmse_gain(stats.Rbreve, self.Qtk_local, p, tau, "local")
        self.hbar_c, self.Rbreve_c, self.R_c = collective_all(stats)
        self.Qtk_central = true_q_tk_central(stats, cfg)
        self._qtk_signal = self.Qtk_central - cfg.sigma2 * np.eye(L * N)
        self.G_central = lmmse_gain(self.Rbreve_c, self.Qtk_central, p, tau, "central")
        ks = np.arange(K)
        self.norm = np.trace(self.R_local[self.masters, ks], axis1=-2, axis2=-1).real

    # theoretical values at the (master, UE) pairs -------------------------
    def theory_local(self) -> np.ndarray:
        ks = np.arange(self.stats.K)
        l = self.masters
        return theoretical_nmse(self.stats.Rbreve[l, ks], self.R_local[l, ks], self.Qtk_local[l, ks],
                                self.cfg.p, self.cfg.tau_p, gain=self.G_local[l, ks])

    def theory_central(self) -> np.ndarray:
        N = self.stats.N
        out = np.empty(self.stats.K)
        for k, l in enumerate(self.masters):
            out[k] = theoretical_nmse(self.Rbreve_c[k], self.R_c[k], self.Qtk_central[k], self.cfg.p,
                                      self.cfg.tau_p, central_slice(int(l), N), gain=self.G_central[k])
        return out

    # per-block estimates ------------------------------------------------
    def local(self, ys: np.ndarray) -> np.ndarray:
        """Local estimates for all (j, k) from local despread signals (L, K, N)."""
        return apply_gain(self.G_local, self.stats.hbar, ys, self.cfg.p, self.cfg.tau_p)

    def central(self, yc: np.ndarray) -> np.ndarray:
        """Collective estimates (K, LN) from stacked despread signals."""
        return apply_gain(self.G_central, self.hbar_c, yc, self.cfg.p, self.cfg.tau_p)

    def mace_statistics(self, V: np.ndarray):
        """Fused LoS mean, NLoS correlation and despread correlation of z_{l,kk} given V."""
        cfg = self.cfg
        Vh = np.swapaxes(V, -1, -2).conj()
        zbar = (Vh @ self.hbar_c[..., None])[..., 0]
        Rz, Qz = fused(V, np.stack([self.Rbreve_c, self._qtk_signal]))
        Qz = Qz + cfg.sigma2 * fused_noise(V, cfg)
        return zbar, hermitize(Rz), hermitize(Qz)

    def mace(self, V: np.ndarray, ytilde: np.ndarray, block=None):
        """Master-slice estimates (K, N) and their conditional theoretical NMSE (K,)."""
        cfg, N = self.cfg, self.stats.N
        zbar, Rz, Qz = self.mace_statistics(V)
        G = lmmse_gain(Rz, Qz, cfg.p, cfg.tau_p, "mace", block)
        zhat = apply_gain(G, zbar, ytilde, cfg.p, cfg.tau_p)
        C = error_covariance(Rz, G, cfg.p, cfg.tau_p)
        est = np.empty((len(self.masters), N), dtype=complex)
        theory = np.empty(len(self.masters))
        for k, l in enumerate(self.masters):
            sl = master_slice(int(l), N)
            est[k] = zhat[k, sl]
            theory[k] = max(np.trace(C[k, sl, sl]).real, 0.0) / self.norm[k]
        return est, theory


def local_estimate(ys: np.ndarray, k: int, j: int, stats: NetworkStats, cfg: SimConfig) -> ChannelEstimate:
    """True-statistics local estimate of h_{j,k} from the local despread signals (L, K, N)."""
    Qtk = true_q_tk_local(stats, cfg)[j, k]
    vec = lmmse(LmmseInputs(stats.hbar[j, k], stats.Rbreve[j, k], Qtk, ys[j, k], cfg.p, cfg.tau_p), "local")
    return ChannelEstimate(vector=vec, scheme="local", ap=j, ue=k)


def central_estimate(ys: np.ndarray, k: int, stats: NetworkStats, cfg: SimConfig) -> np.ndarray:
    """True-statistics collective estimate of h_k (length LN); slice with :func:`extract_block`."""
    hbar_c, Rbreve_c, _ = collective_all(stats)
    Qtk = true_q_tk_central(stats, cfg)[k]
    return lmmse(LmmseInputs(hbar_c[k], Rbreve_c[k], Qtk, stack(ys)[k], cfg.p, cfg.tau_p), "central")


def extract_block(collective_est: np.ndarray, l: int, N: int) -> np.ndarray:
    return collective_est[..., central_slice(l, N)]
