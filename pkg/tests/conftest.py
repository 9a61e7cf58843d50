import numpy as np
import pytest

from macesim.config import SimConfig
from macesim.geometry import build_stats, place_network


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_network(seed=0, **kw):
    cfg = SimConfig(seed=seed, **kw)
    r = np.random.default_rng(seed)
    stats = build_stats(place_network(cfg, r), cfg, r)
    return cfg, stats


@pytest.fixture
def small():
    """A random L=2, N=2, K=2, tau_p=3 network in a 200 m square."""
    return make_network(seed=3, L=2, N=2, K=2, tau_p=3, area_m=200.0)


class BlockTrace:
    """Per-block outputs of one network run, stacked over blocks."""

    def __init__(self, cfg, stats_source="true", realization=0):
        from macesim.harness import NetworkRun

        self.net = NetworkRun(cfg, stats_source, realization)
        outs = list(self.net.blocks())
        self.h = np.stack([o.h for o in outs])
        self.est = {s: np.stack([o.estimates[s] for o in outs]) for s in outs[0].estimates}
        self.mace_theory = np.stack([o.mace_theory for o in outs])
        self.y_local = np.stack([o.y_local for o in outs])

    def sq_err(self, scheme):
        """Normalized squared error per block and UE, shape (M, K)."""
        d = self.h - self.est[scheme]
        return np.sum(abs(d) ** 2, axis=-1) / self.net.truth.norm

    def theory(self, scheme):
        t = self.net.truth
        if scheme == "local":
            return t.theory_local()
        if scheme == "central":
            return t.theory_central()
        return self.mace_theory.mean(axis=0)


def mean_se(x, axis=0):
    x = np.asarray(x)
    return x.mean(axis=axis), x.std(axis=axis, ddof=1) / np.sqrt(x.shape[axis])


SMALL_MC = dict(L=2, N=2, K=2, tau_p=3, area_m=200.0, warmup=0, blocks=10_000)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
