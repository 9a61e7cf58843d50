"""Second-order statistics: exponential tracking, NLoS-correlation recovery and
closed-form (true) correlation matrices for every processing scope.

Matrices are handled in stacks: the last two axes are the matrix, leading axes
index APs and/or UEs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import SimConfig
from .geometry import NetworkStats, collective_all

COND_LIMIT = 1e12
REG_EPS = 1e-9


class SingularCovarianceError(np.linalg.LinAlgError):
    def __init__(self, scope: str, block=None):
        where = f" at block {block}" if block is not None else ""
        super().__init__(f"covariance for scope {scope!r} is singular after regularization{where}")
        self.scope = scope
        self.block = block


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2).conj())


def outer(x: np.ndarray) -> np.ndarray:
    """Stacked outer products x x^H over the last axis."""
    return x[..., :, None] * x[..., None, :].conj()


def gram(Y: np.ndarray) -> np.ndarray:
    """Stacked Y Y^H."""
    return hermitize(Y @ np.swapaxes(Y, -1, -2).conj())


def exp_update(prev: np.ndarray, sample_outer: np.ndarray, eta: float) -> np.ndarray:
    return hermitize(eta * prev + (1.0 - eta) * sample_outer)


def psd_project(H: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm: clip negative eigenvalues to zero."""
    lam, U = np.linalg.eigh(hermitize(H))
    if np.all(lam >= 0):
        return hermitize(H)
    lam = np.clip(lam, 0.0, None)
    return hermitize((U * lam[..., None, :]) @ np.swapaxes(U, -1, -2).conj())


def recover_rbreve(Q_tk: np.ndarray, Q: np.ndarray, hbar: np.ndarray, p: float, tau_p: int,
                   project: bool = True) -> np.ndarray:
    """NLoS correlation from the received and (centered) despread correlations.

    Rbreve = (tau_p Q_tk + tau_p p hbar hbar^H - Q) / (p tau_p (tau_p - 1)),
    optionally projected onto the PSD cone. Works at any dimension.
    """
    if tau_p < 2:
        raise ValueError("NLoS recovery needs tau_p >= 2")
    R = (tau_p * Q_tk + tau_p * p * outer(hbar) - Q) / (p * tau_p * (tau_p - 1))
    R = hermitize(R)
    return psd_project(R) if project else R


def solve_hermitian(A: np.ndarray, B: np.ndarray, scope: str = "", block=None) -> np.ndarray:
    """Solve A X = B for stacked Hermitian positive definite A via Cholesky.

    A is first Jacobi-equilibrated (unit diagonal), which leaves the solution
    unchanged but removes the row scaling that fused observations carry.
    Equilibrated matrices with condition number above ``COND_LIMIT`` get a
    ridge of ``REG_EPS * tr / dim``; a matrix that is still not positive
    definite raises :class:`SingularCovarianceError`.
    """
    A = hermitize(A)
    d = np.diagonal(A, axis1=-2, axis2=-1).real
    s = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)
    X = _solve_equilibrated(s[..., :, None] * A * s[..., None, :], s[..., :, None] * B, scope, block)
    return s[..., :, None] * X


def _cholesky_cond(A):
    """Cholesky factors and a cheap condition estimate (squared diagonal ratio)."""
    C = np.linalg.cholesky(A)
    d = np.diagonal(C, axis1=-2, axis2=-1).real
    return C, (d.max(axis=-1) / d.min(axis=-1)) ** 2


def _solve_equilibrated(A, B, scope, block):
    try:
        C, cond = _cholesky_cond(A)
        bad = cond > COND_LIMIT
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(A)
        bad = (lam[..., 0] <= 0) | (lam[..., -1] > COND_LIMIT * lam[..., 0])
    if np.any(bad):
        dim = A.shape[-1]
        ridge = REG_EPS * np.trace(A, axis1=-2, axis2=-1).real / dim
        A = A + np.where(bad, ridge, 0.0)[..., None, None] * np.eye(dim)
        try:
            C, _ = _cholesky_cond(A)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError(scope, block) from None
    W = np.linalg.solve(C, B)
    return np.linalg.solve(np.swapaxes(C, -1, -2).conj(), W)


# --------------------------------------------------------------------------
# closed-form statistics
# --------------------------------------------------------------------------

def true_q_local(stats: NetworkStats, cfg: SimConfig) -> np.ndarray:
    """Q_j = tau_p sum_i p R_{j,i} + tau_p sigma2 I, shape (L, N, N)."""
    I = np.eye(stats.N)
    return cfg.tau_p * cfg.p * stats.R.sum(axis=1) + cfg.tau_p * cfg.sigma2 * I


def true_q_tk_local(stats: NetworkStats, cfg: SimConfig) -> np.ndarray:
    """Q_{j,t_k} = p tau_p Rbreve_{j,k} + sum_{i != k} p R_{j,i} + sigma2 I, shape (L, K, N, N)."""
    R = stats.R
    others = R.sum(axis=1, keepdims=True) - R
    return cfg.p * cfg.tau_p * stats.Rbreve + cfg.p * others + cfg.sigma2 * np.eye(stats.N)


def true_q_central(stats: NetworkStats, cfg: SimConfig) -> np.ndarray:
    _, _, Rc = collective_all(stats)
    dim = stats.L * stats.N
    return cfg.tau_p * cfg.p * Rc.sum(axis=0) + cfg.tau_p * cfg.sigma2 * np.eye(dim)


def true_q_tk_central(stats: NetworkStats, cfg: SimConfig) -> np.ndarray:
    _, Rbc, Rc = collective_all(stats)
    dim = stats.L * stats.N
    others = Rc.sum(axis=0, keepdims=True) - Rc
    return cfg.p * cfg.tau_p * Rbc + cfg.p * others + cfg.sigma2 * np.eye(dim)


def fused(V: np.ndarray, A: np.ndarray) -> np.ndarray:
    """V^H A V for stacked V (..., LN, D) and A (..., LN, LN)."""
    return np.swapaxes(V, -1, -2).conj() @ A @ V


def fused_noise(V: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Noise correlation of the fused despread signal, per unit sigma2."""
    if cfg.fused_noise == "printed":
        return np.broadcast_to(np.eye(V.shape[-1]), V.shape[:-2] + (V.shape[-1],) * 2)
    return np.swapaxes(V, -1, -2).conj() @ V


def true_q_master(stats: NetworkStats, cfg: SimConfig, V: np.ndarray) -> np.ndarray:
    """Fused received correlation for UE k's master, conditioned on the fusion operator.

    ``V`` has shape (K, LN, D); entry k is UE k's block-diagonal fusion operator.
    Returns (K, D, D).
    """
    _, _, Rc = collective_all(stats)
    total = Rc.sum(axis=0)  # sum_i R_i
    return hermitize(cfg.tau_p * cfg.p * fused(V, total[None]) + cfg.tau_p * cfg.sigma2 * fused_noise(V, cfg))


def true_q_tk_master(stats: NetworkStats, cfg: SimConfig, V: np.ndarray) -> np.ndarray:
    _, Rbc, Rc = collective_all(stats)
    others = Rc.sum(axis=0, keepdims=True) - Rc
    sig = cfg.p * cfg.tau_p * Rbc + cfg.p * others
    return hermitize(fused(V, sig) + cfg.sigma2 * fused_noise(V, cfg))


def true_q(stats: NetworkStats, cfg: SimConfig, scope: str, j: int | None = None,
           V: np.ndarray | None = None) -> np.ndarray:
    """Closed-form received-signal correlation at ``scope`` in {local, central, master}."""
    if scope == "local":
        Q = true_q_local(stats, cfg)
        return Q if j is None else Q[j]
    if scope == "central":
        return true_q_central(stats, cfg)
    if scope == "master":
        return true_q_master(stats, cfg, V)
    raise ValueError(f"unknown scope {scope!r}")


def true_q_tk(stats: NetworkStats, cfg: SimConfig, k: int | None, scope: str, j: int | None = None,
              V: np.ndarray | None = None) -> np.ndarray:
    """Closed-form centered despread correlation of UE k (all UEs when k is None)."""
    if scope == "local":
        Q = true_q_tk_local(stats, cfg)
        Q = Q if j is None else Q[j]
    elif scope == "central":
        Q = true_q_tk_central(stats, cfg)
    elif scope == "master":
        Q = true_q_tk_master(stats, cfg, V)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    return Q if k is None else Q[..., k, :, :]


# --------------------------------------------------------------------------
# trackers
# --------------------------------------------------------------------------

class LosMean:
    """Running mean of y / sqrt(p tau_p); optionally frozen after ``B`` blocks."""

    def __init__(self, shape, p: float, tau_p: int, B: int | None = None):
        self.scale = np.sqrt(p * tau_p)
        self.sum = np.zeros(shape, dtype=complex)
        self.count = 0
        self.B = B

    def update(self, y: np.ndarray) -> None:
        if self.B is not None and self.count >= self.B:
            return
        self.sum = self.sum + y
        self.count += 1

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            return self.sum
        return self.sum / (self.count * self.scale)


def los_update(tracker: LosMean, y: np.ndarray) -> np.ndarray:
    tracker.update(y)
    return tracker.mean


class ScopeTracker:
    """Exponentially averaged statistics for one processing scope.

    ``q_shape`` is the stack shape of the received correlation (it must
    broadcast against ``tk_shape``, the stack shape of the per-UE despread
    correlations). ``Qhat`` starts at the noise floor tau_p sigma2 I and
    ``Qhat_tk`` at sigma2 I. The despread correlation is accumulated around
    the running LoS estimate so that it tracks the centered quantity the
    recovery formula expects.

    With ``running=True`` the first block overwrites the initial values and
    later blocks are averaged with equal weights.
    """

    def __init__(self, name: str, q_shape, tk_shape, dim: int, cfg: SimConfig, running: bool = False):
        self.name = name
        self.running = running
        self.cfg = cfg
        self.dim = dim
        I = np.eye(dim, dtype=complex)
        self.Qhat = np.broadcast_to(cfg.tau_p * cfg.sigma2 * I, tuple(q_shape) + (dim, dim)).copy()
        self.Qhat_tk = np.broadcast_to(cfg.sigma2 * I, tuple(tk_shape) + (dim, dim)).copy()
        B = cfg.B if cfg.los_mode == "frozen" else None
        self.los = LosMean(tuple(tk_shape) + (dim,), cfg.p, cfg.tau_p, B)
        self.blocks_seen = 0

    def update(self, Y: np.ndarray, y: np.ndarray) -> None:
        """Feed one block: received matrices ``Y`` (q_shape, dim, tau_p), despread ``y`` (tk_shape, dim)."""
        # running=True replaces the forgetting factor by a plain 1/b average
        eta = self.blocks_seen / (self.blocks_seen + 1) if self.running else self.cfg.eta
        self.Qhat = exp_update(self.Qhat, gram(Y), eta)
        self.los.update(y)
        d = y - self.los.scale * self.los.mean
        self.Qhat_tk = exp_update(self.Qhat_tk, outer(d), eta)
        self.blocks_seen += 1

    @property
    def hbar(self) -> np.ndarray:
        return self.los.mean

    def rbreve(self) -> np.ndarray:
        return recover_rbreve(self.Qhat_tk, self.Qhat, self.hbar, self.cfg.p, self.cfg.tau_p)

    def dump(self, prefix: str | Path) -> None:
        """Write Qhat and Qhat_tk as raw little-endian complex128 plus a JSON shape sidecar."""
        prefix = Path(prefix)
        meta = {}
        for key in ("Qhat", "Qhat_tk"):
            arr = np.ascontiguousarray(getattr(self, key), dtype="<c16")
            path = prefix.with_name(f"{prefix.name}_{self.name}_{key}.bin")
            arr.tofile(path)
            meta[key] = {"file": path.name, "shape": list(arr.shape), "dtype": "complex128-le"}
        meta["blocks_seen"] = self.blocks_seen
        prefix.with_name(f"{prefix.name}_{self.name}.json").write_text(json.dumps(meta, indent=2))
