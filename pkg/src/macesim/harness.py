"""Seeded Monte Carlo experiments over coherence blocks and network realizations.

Random streams
--------------
Every realization ``r`` of an experiment with seed ``s`` owns two Philox
streams derived from ``SeedSequence(s, spawn_key=(r,))``: the first places the
network and draws the LoS phases, the second drives the coherence blocks. Each
block draws, in order, the pilot assignment (indices, then signs), the NLoS
channel innovations and the receiver noise. Because the streams depend only on
``(s, r)``, every sweep value sees the same AP/UE layouts.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .config import SimConfig
from .estimators import (
    TrueStatEstimator,
    apply_gain,
    central_slice,
    despread_fused,
    fuse,
    fusion_matrices,
    lmmse_gain,
    master_slice,
)
from .geometry import assign_masters, build_stats, place_network, sample_channels
from .metrics import SCHEMES, squared_error
from .pilots import despread_all_local, draw_assignment, make_pilot_book, stack, synthesize_received
from .tracking import ScopeTracker

log = logging.getLogger(__name__)

SWEEP_PARAMS = ("tau_p", "N", "L", "K", "eta")
STATS_SOURCES = ("true", "tracked")
CSV_HEADER = ["scheme", "param", "value", "nmse", "nmse_db", "nmse_theory", "fronthaul", "inv_dim",
              "realizations", "blocks", "seed"]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    base: SimConfig
    sweep_param: str
    sweep_values: tuple
    realizations: int = 50
    stats_source: str = "tracked"
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.sweep_param not in SWEEP_PARAMS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
        if self.stats_source not in STATS_SOURCES:
            raise ValueError(f"stats source must be one of {STATS_SOURCES}")
        if self.realizations < 1 or not self.sweep_values:
            raise ValueError("need at least one realization and one sweep value")
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        for v in self.sweep_values:
            self.config_at(v)  # validates

    def config_at(self, value) -> SimConfig:
        kind = float if self.sweep_param == "eta" else int
        return replace(self.base, **{self.sweep_param: kind(value)})


@dataclass
class ResultRow:
    scheme: str
    param: str
    value: float
    nmse: float
    nmse_db: float
    nmse_theory: float
    fronthaul: int
    inv_dim: int
    realizations: int
    blocks: int
    seed: int
    samples: tuple = field(default=(), repr=False)
    theory_samples: tuple = field(default=(), repr=False)

    @property
    def std_error(self) -> float:
        s = np.asarray(self.samples)
        return float(s.std(ddof=1) / np.sqrt(len(s))) if len(s) > 1 else float("nan")


@dataclass
class RealizationResult:
    """Per-UE NMSE at the master AP for every scheme, from one network draw."""

    empirical: dict
    theory: dict
    masters: np.ndarray

    def mean(self, kind: str, scheme: str) -> float:
        return float(np.mean(getattr(self, kind)[scheme]))


def realization_streams(seed: int, realization: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(seed, spawn_key=(realization,))
    net, blocks = ss.spawn(2)
    return np.random.Generator(np.random.Philox(net)), np.random.Generator(np.random.Philox(blocks))


@dataclass
class BlockOutcome:
    """Channels and estimates at the (master, UE) pairs for one accumulated block."""

    block: int
    h: np.ndarray  # (K, N)
    estimates: dict  # scheme -> (K, N)
    mace_theory: np.ndarray  # (K,) conditional on this block's fusion vectors
    y_local: np.ndarray  # (K, N) local despread signal at the master


class NetworkRun:
    """One network draw and its sequence of coherence blocks."""

    def __init__(self, cfg: SimConfig, stats_source: str, realization: int = 0):
        if stats_source not in STATS_SOURCES:
            raise ValueError(f"stats source must be one of {STATS_SOURCES}")
        self.cfg, self.stats_source = cfg, stats_source
        net_rng, self.blk_rng = realization_streams(cfg.seed, realization)
        self.stats = build_stats(place_network(cfg, net_rng), cfg, net_rng)
        self.masters = assign_masters(self.stats)
        self.truth = TrueStatEstimator(self.stats, cfg, self.masters)

    def blocks(self):
        """Yield a :class:`BlockOutcome` for every block after warm-up."""
        cfg, stats, masters, truth = self.cfg, self.stats, self.masters, self.truth
        book = make_pilot_book(cfg.tau_p)
        factor = stats.nlos_factor()
        L, K, N, D = cfg.L, cfg.K, cfg.N, cfg.fused_dim
        p, tau = cfg.p, cfg.tau_p
        ks = np.arange(K)
        normalize = cfg.fusion == "unit"
        tracked = self.stats_source == "tracked"
        if tracked:
            local_tr = ScopeTracker("local", (L, 1), (L, K), N, cfg)
            central_tr = ScopeTracker("central", (1,), (K,), L * N, cfg)
            master_tr = ScopeTracker("master", (K,), (K,), D, cfg)
            self.trackers = (local_tr, central_tr, master_tr)

        for b in range(cfg.warmup + cfg.blocks):
            assignment = draw_assignment(K, tau, self.blk_rng)
            h = sample_channels(stats, self.blk_rng, factor)
            block = synthesize_received(h, assignment, book, cfg, self.blk_rng)
            accumulate = b >= cfg.warmup
            if not (accumulate or tracked):
                continue
            try:
                ys = despread_all_local(block, book)
                Yc = block.Y.reshape(L * N, tau)
                yc = stack(ys)

                # exact statistics: drives the theoretical MACE value in both modes
                true_local = truth.local(ys)
                V_true = fusion_matrices(true_local, masters, normalize)
                if L == 1:
                    yt_true = ys[0]
                else:
                    yt_true = despread_fused(fuse(V_true, Yc), assignment, book)
                true_mace, theory_mace = truth.mace(V_true, yt_true, block=b)

                if tracked:
                    local_tr.update(block.Y[:, None], ys)
                    G = lmmse_gain(local_tr.rbreve(), local_tr.Qhat_tk, p, tau, "local", b)
                    est_local = apply_gain(G, local_tr.hbar, ys, p, tau)

                    central_tr.update(Yc[None], yc)
                    G = lmmse_gain(central_tr.rbreve(), central_tr.Qhat_tk, p, tau, "central", b)
                    est_central = apply_gain(G, central_tr.hbar, yc, p, tau)

                    V = fusion_matrices(est_local, masters, normalize)
                    if L == 1:
                        Yt, yt = np.broadcast_to(block.Y[0], (K, N, tau)), ys[0]
                    else:
                        Yt = fuse(V, Yc)
                        yt = despread_fused(Yt, assignment, book)
                    master_tr.update(Yt, yt)
                    G = lmmse_gain(master_tr.rbreve(), master_tr.Qhat_tk, p, tau, "mace", b)
                    zhat = apply_gain(G, master_tr.hbar, yt, p, tau)
                    est_mace = _at_master(zhat, masters, N, master_slice)
                else:
                    est_local = true_local
                    est_central = truth.central(yc)
                    est_mace = true_mace
            except (np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
                raise SimulationError(f"block {b}: {exc}") from exc

            if accumulate:
                yield BlockOutcome(
                    block=b,
                    h=h[masters, ks],
                    estimates={
                        "local": est_local[masters, ks],
                        "central": _at_master(est_central, masters, N, central_slice),
                        "mace": est_mace,
                    },
                    mace_theory=theory_mace,
                    y_local=ys[masters, ks],
                )


def _at_master(vectors: np.ndarray, masters: np.ndarray, N: int, selector) -> np.ndarray:
    if len(masters) == 0:
        return np.zeros((0, N), dtype=complex)
    return np.stack([vectors[k, selector(int(l), N)] for k, l in enumerate(masters)])


def simulate_network(cfg: SimConfig, stats_source: str, realization: int = 0) -> RealizationResult:
    """Run warm-up and accumulation blocks on one network draw."""
    net = NetworkRun(cfg, stats_source, realization)
    K = cfg.K
    sq = {s: np.zeros(K) for s in SCHEMES}
    mace_theory_sum = np.zeros(K)
    count = 0
    for out in net.blocks():
        for s in SCHEMES:
            sq[s] += squared_error(out.h, out.estimates[s])
        mace_theory_sum += out.mace_theory
        count += 1
    truth = net.truth
    empirical = {s: sq[s] / (count * truth.norm) for s in SCHEMES}
    theory = {
        "local": truth.theory_local(),
        "central": truth.theory_central(),
        "mace": mace_theory_sum / count,
    }
    return RealizationResult(empirical=empirical, theory=theory, masters=net.masters)


def _run_point(args):
    cfg, stats_source, r = args
    return simulate_network(cfg, stats_source, r)


def run_point(cfg: SimConfig, stats_source: str, realizations: int, workers: int = 1) -> list[RealizationResult]:
    jobs = [(cfg, stats_source, r) for r in range(realizations)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_point, jobs))
    return [_run_point(j) for j in jobs]


def run(spec: ExperimentSpec) -> list[ResultRow]:
    """Evaluate every sweep point; rows are ordered by sweep value then scheme."""
    rows = []
    for value in spec.sweep_values:
        cfg = spec.config_at(value)
        log.info("sweep %s=%s: %d realizations", spec.sweep_param, value, spec.realizations)
        if spec.workers > 1:
            results = run_point(cfg, spec.stats_source, spec.realizations, spec.workers)
        else:
            results = []
            for r in range(spec.realizations):
                try:
                    results.append(simulate_network(cfg, spec.stats_source, r))
                except SimulationError as exc:
                    raise SimulationError(f"{spec.sweep_param}={value}, realization {r}, {exc}") from exc
        for scheme in SCHEMES:
            emp = np.array([res.mean("empirical", scheme) for res in results])
            th = np.array([res.mean("theory", scheme) for res in results])
            nmse = float(emp.mean())
            rows.append(ResultRow(
                scheme=scheme,
                param=spec.sweep_param,
                value=value,
                nmse=nmse,
                nmse_db=float(metrics.to_db(nmse)),
                nmse_theory=float(th.mean()),
                fronthaul=metrics.fronthaul(scheme, cfg.L, cfg.N, cfg.tau_p),
                inv_dim=metrics.inversion_dim(scheme, cfg.L, cfg.N),
                realizations=spec.realizations,
                blocks=cfg.blocks,
                seed=cfg.seed,
                samples=tuple(emp),
                theory_samples=tuple(th),
            ))
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and x.is_integer() and abs(x) < 1e15:
        return repr(x)
    return repr(float(x))


def csv_text(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.scheme, r.param, _fmt(r.value), _fmt(r.nmse), _fmt(r.nmse_db), _fmt(r.nmse_theory),
                         r.fronthaul, r.inv_dim, r.realizations, r.blocks, r.seed])
    return buf.getvalue()


def emit_csv(rows: list[ResultRow], path: str | Path) -> Path:
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(rows))
    return path


def emit_plot_data(rows: list[ResultRow], prefix: str | Path) -> list[Path]:
    """Write ``<prefix>_<scheme>.dat`` series and a gnuplot script ``<prefix>.plot``."""
    if not rows:
        raise ValueError("no rows to plot")
    params = {r.param for r in rows}
    if len(params) != 1:
        raise ValueError(f"rows mix sweeps over {sorted(params)}")
    param = params.pop()
    prefix = Path(prefix)
    written = []
    schemes = [s for s in SCHEMES if any(r.scheme == s for r in rows)]
    for scheme in schemes:
        series = sorted((r.value, r.nmse_db) for r in rows if r.scheme == scheme)
        path = prefix.with_name(f"{prefix.name}_{scheme}.dat")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {param} nmse_db\n")
            for value, db in series:
                fh.write(f"{_fmt(value)} {_fmt(db)}\n")
        written.append(path)
    plot = prefix.with_name(f"{prefix.name}.plot")
    curves = ", \\\n     ".join(f"'{p.name}' using 1:2 with linespoints title '{s}'" for p, s in zip(written, schemes))
    plot.write_text(
        f"set xlabel '{param}'\n"
        "set ylabel 'NMSE [dB]'\n"
        "set grid\n"
        "set key top right\n"
        f"plot {curves}\n",
        encoding="utf-8",
    )
    written.append(plot)
    return written
