"""
Command-line entry point: ``satim-lab <command> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from satim.lab import commands
from satim.lab.config import ConfigError, LabConfig, dump_config, load_config, validate
from satim.lab.output import write_csv, write_plot_script
from satim.lab.scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="satim-lab",
        description="Saturation characterization, observability sweeps and injection studies.",
    )
    p.add_argument(
        "command", choices=("characterize", "observability", "convergence", "simulate")
    )
    p.add_argument("--config", type=Path, help="flat key = value config file (defaults if omitted)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes")
    p.add_argument(
        "--per-unit", action="store_true", help="observability: scale Os and Os' to per-unit"
    )
    p.add_argument("--waveform", choices=("square", "sine"))
    p.add_argument("--omega-hz", type=float, metavar="F", help="injection frequency (Hz)")
    p.add_argument("--inject-amp", type=float, metavar="V", help="injection amplitude (V)")
    p.add_argument("--scenario", type=Path, help="simulate: scenario file")
    p.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    return p


def apply_overrides(cfg: LabConfig, args: argparse.Namespace) -> LabConfig:
    inj = cfg.injection
    if args.waveform is not None:
        inj = dataclasses.replace(inj, waveform=args.waveform)
    if args.omega_hz is not None:
        inj = dataclasses.replace(inj, omega_hz=args.omega_hz)
    if args.inject_amp is not None:
        inj = dataclasses.replace(inj, amplitude=args.inject_amp)
    try:
        cfg = dataclasses.replace(cfg, injection=inj)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    if args.parallel < 1:
        raise ConfigError("--parallel must be at least 1")
    if args.command == "characterize":
        table = commands.cmd_characterize(cfg, args.parallel)
    elif args.command == "observability":
        table = commands.cmd_observability(cfg, args.parallel, args.per_unit)
    elif args.command == "convergence":
        table = commands.cmd_convergence(cfg, args.parallel)
    else:
        if args.scenario is None:
            raise ConfigError("simulate needs --scenario FILE")
        table = commands.cmd_simulate(cfg, load_scenario(args.scenario))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.used.txt").write_text(dump_config(cfg))
    path = write_csv(table, args.out, cfg, args.command)
    print(f"wrote {path} ({len(table.rows)} rows)")
    if args.plot:
        print(f"wrote {write_plot_script(table, args.out)}")
    for note in table.notes:
        print(note)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"satim-lab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except commands.NumericFailure as exc:
        print(f"satim-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
