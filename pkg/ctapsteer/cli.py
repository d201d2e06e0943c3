"""
cli.py
──────
Command-line entry point.

    python -m ctapsteer --state fock --traj 55000 --seed 1
    python -m ctapsteer --config fig3.ini --mode both --n-total 4 --traj 100000
    python -m ctapsteer --config fig2.ini --check-dt --workers 8

Flags override values read from --config. Exit codes: 0 success,
2 invalid configuration, 3 too many diverged trajectories, 4 I/O failure.
"""

import argparse
import sys
from typing import Optional

from dotenv import load_dotenv

from .simulation.config import ConfigError, load_config
from .simulation.pipeline import ExitCode, SimulationPipeline


# flag dest → (config section, key)
_FLAG_KEYS = {
    "state":     ("model", "state_kind"),
    "chi":       ("model", "chi"),
    "omega":     ("model", "omega"),
    "tp":        ("model", "t_p"),
    "e2":        ("model", "e2"),
    "n_total":   ("model", "n_total"),
    "traj":      ("sim", "n_traj"),
    "dt":        ("sim", "dt"),
    "seed":      ("sim", "seed"),
    "batches":   ("sim", "n_batches"),
    "scheme":    ("sim", "scheme"),
    "mode":      ("run", "mode"),
    "output":    ("output", "path"),
    "format":    ("output", "format"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog        = "ctapsteer",
        description = "Positive-P simulation of three-well CTAP with EPR-steering witnesses.",
    )
    parser.add_argument("--config",   help="INI-style config file")
    parser.add_argument("--state",    choices=["coherent", "fock"], help="initial state of well 1")
    parser.add_argument("--chi",      type=float, help="collisional nonlinearity χ")
    parser.add_argument("--omega",    type=float, help="tunnelling scale Ω")
    parser.add_argument("--tp",       type=float, help="pulse time t_p")
    parser.add_argument("--e2",       type=float, help="middle-well energy E2")
    parser.add_argument("--n-total",  type=int,   dest="n_total", help="mean total atom number")
    parser.add_argument("--traj",     type=int,   help="number of trajectories")
    parser.add_argument("--dt",       type=float, help="integrator step")
    parser.add_argument("--seed",     type=int,   help="master seed")
    parser.add_argument("--batches",  type=int,   help="jackknife batches (must divide --traj)")
    parser.add_argument("--scheme",   choices=["euler", "rk4"], help="integration scheme")
    parser.add_argument("--mode",     choices=["stochastic", "oracle", "both"])
    parser.add_argument("--output",   help="output path stem")
    parser.add_argument("--format",   choices=["csv", "json"])
    parser.add_argument("--check-dt", action="store_true", dest="check_dt", help="rerun at dt/2 and report the change")
    parser.add_argument("--workers",  type=int, help="worker processes (default CTAPSTEER_WORKERS or 1)")
    parser.add_argument("--quiet",    action="store_true", help="no progress output")
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for dest, (section, key) in _FLAG_KEYS.items():
        value = getattr(args, dest)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    if args.check_dt:
        overrides.setdefault("run", {})["check_dt"] = True
    return overrides


def main(argv: Optional[list[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config, overrides_from(args))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return int(ExitCode.VALIDATION)
    except OSError as e:
        print(f"cannot read config: {e}", file=sys.stderr)
        return int(ExitCode.IO)

    pipeline = SimulationPipeline(workers=args.workers, verbose=not args.quiet)
    result   = pipeline.run(config)

    if not result.success:
        print(f"run failed: {result.error}", file=sys.stderr)
    elif not args.quiet:
        print(f"\n{'─' * 50}")
        print(f"Done in {result.duration_seconds:.1f}s: {len(result.files)} files written")
        if result.agreement_passed is not None:
            print(f"Agreement with exact evolution: {'PASS' if result.agreement_passed else 'FAIL'}")
    return int(result.exit_code)
