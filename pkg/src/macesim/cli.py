"""Command-line entry point: ``simulate``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import PRESETS, SimConfig, parse_sim_section, parse_values, read_config_file
from .harness import ExperimentSpec, SimulationError, emit_csv, emit_plot_data, run

log = logging.getLogger("macesim")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="simulate",
        description="Compare local, centralized and master-assisted channel estimation in a cell-free network.",
    )
    ap.add_argument("--config", help="INI file with [sim] and [experiment] sections")
    ap.add_argument("--preset", choices=sorted(PRESETS), help="start from a predefined experiment")
    ap.add_argument("--sweep", help="sweep as <param>=<v1,v2,...>, param in tau_p,N,L,K,eta")
    ap.add_argument("--stats", choices=("true", "tracked"), help="statistics used by the estimators")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output path prefix")
    ap.add_argument("--realizations", type=int)
    ap.add_argument("--blocks", type=int)
    ap.add_argument("--workers", type=int, default=1, help="worker processes per sweep point")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_sweep(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ValueError(f"sweep must look like param=v1,v2 (got {text!r})")
    name, values = text.split("=", 1)
    return name.strip(), parse_values(values)


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    base, param, values = SimConfig(), None, None
    experiment = {}
    preset = args.preset
    parser = read_config_file(args.config) if args.config else None
    if parser is not None and parser.has_section("experiment"):
        experiment = dict(parser["experiment"])
        preset = preset or experiment.pop("preset", None)
        experiment.pop("preset", None)
    if preset:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}")
        base, param, values = PRESETS[preset]
    if parser is not None and parser.has_section("sim"):
        base = parse_sim_section(dict(parser["sim"]), base)

    if "sweep" in experiment:
        param, values = parse_sweep(experiment.pop("sweep"))
    if args.sweep:
        param, values = parse_sweep(args.sweep)
    if param is None:
        raise ValueError("no sweep given: use --preset, --sweep, or a sweep key in [experiment]")

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.blocks is not None:
        overrides["blocks"] = args.blocks
    base = replace(base, **overrides)

    realizations = int(experiment.pop("realizations", 50))
    stats_source = experiment.pop("stats", "tracked")
    out = experiment.pop("out", "results")
    if experiment:
        raise ValueError(f"unknown [experiment] keys: {sorted(experiment)}")
    return ExperimentSpec(
        base=base,
        sweep_param=param,
        sweep_values=tuple(values),
        realizations=args.realizations if args.realizations is not None else realizations,
        stats_source=args.stats or stats_source,
        out=args.out or out,
        workers=args.workers,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = build_spec(args)
        rows = run(spec)
        csv_path = emit_csv(rows, f"{spec.out}.csv")
        emit_plot_data(rows, spec.out)
    except (OSError, ValueError, SimulationError) as exc:
        print(f"simulate: error: {exc}", file=sys.stderr)
        return 1
    for r in rows:
        print(f"{r.scheme:8s} {r.param}={r.value:<6g} nmse={r.nmse_db:8.3f} dB  theory={r.nmse_theory:.4g}")
    print(f"wrote {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
