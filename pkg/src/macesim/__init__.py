"""Monte Carlo simulator for local, centralized and master-assisted channel
estimation in cell-free massive MIMO networks with randomized pilots."""

from .config import FIG1, FIG2, PRESETS, SimConfig
from .harness import ExperimentSpec, ResultRow, emit_csv, emit_plot_data, run, simulate_network

__all__ = [
    "FIG1",
    "FIG2",
    "PRESETS",
    "SimConfig",
    "ExperimentSpec",
    "ResultRow",
    "emit_csv",
    "emit_plot_data",
    "run",
    "simulate_network",
]
