#!/usr/bin/env python3
"""
Fractional SPDE Lab

Command-line front door: runs the configured experiments (fBm sampling, Young
and mild Young sewing, mild solutions, ergodic rates, averaging and the Wiener
counterexample), writes provenance-stamped CSV artifacts and checks their
acceptance assertions.
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from experiment_config import (
    SUBCOMMAND_KINDS,
    ConfigError,
    RuntimeSettings,
    complete_config,
    default_config,
    load_config,
)
from experiments import ratefit, run_experiment
from utils import setup_logging

# Try to import rich for colored output
try:
    from rich.console import Console
    from rich.panel import Panel
    from rich.table import Table
    console = Console()
    USE_RICH = True
except ImportError:
    USE_RICH = False
    console = None

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ASSERTION = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", "-o", type=str, help="Output directory (overrides output.dir)")
    parser.add_argument("--threads", type=int, help="Worker threads (overrides FRACLAB_THREADS)")
    parser.add_argument(
        "--deterministic", action="store_true", default=None,
        help="Single-threaded reference mode (overrides FRACLAB_DETERMINISTIC)"
    )
    parser.add_argument("--seed", type=int, help="Master seed (overrides mc.seed)")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(
        description="Run fractional SPDE sewing, averaging and counterexample experiments."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the experiment described by a config file")
    run.add_argument("--config", "-c", type=str, required=True, help="JSON experiment config")
    _add_common(run)

    for command, kinds in SUBCOMMAND_KINDS.items():
        family = sub.add_parser(command, help=f"Run a {command} experiment ({', '.join(kinds)})")
        family.add_argument("--config", "-c", type=str, help="JSON experiment config (defaults otherwise)")
        family.add_argument("--kind", choices=kinds, default=kinds[0], help="Experiment kind")
        _add_common(family)

    fit = sub.add_parser("ratefit", help="Log-log fit of two columns of an experiment CSV")
    fit.add_argument("csv", type=str, help="CSV written by an experiment")
    fit.add_argument("x", type=str, help="Abscissa column")
    fit.add_argument("y", type=str, help="Value column")
    fit.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    return parser.parse_args(argv)


def _print_error(message: str) -> None:
    if USE_RICH:
        console.print(Panel(f"[bold red]{message}[/bold red]", title="Error", style="red"))
    else:
        print(f"Error: {message}")


def _print_result(result: Dict[str, Any]) -> None:
    summary = result["summary"]
    if USE_RICH:
        table = Table(title=f"{result['experiment']} ({result['config_hash'][:12]})")
        table.add_column("metric", style="cyan")
        table.add_column("value", style="white")
        for key, value in summary.items():
            table.add_row(key, json.dumps(value) if isinstance(value, (list, dict)) else str(value))
        console.print(table)
        for a in result["assertions"]:
            style = "green" if a["passed"] else "bold red"
            verdict = "PASS" if a["passed"] else "FAIL"
            console.print(f"[{style}]{verdict}[/{style}] {a['metric']} {a['op']} {a['bound']} (value {a['value']})")
        for path in result["files"]:
            console.print(f"[dim]wrote {path}[/dim]")
    else:
        print("=" * 80)
        print(f"{result['experiment']} ({result['config_hash'][:12]})")
        print("=" * 80)
        for key, value in summary.items():
            print(f"{key}: {value}")
        for a in result["assertions"]:
            verdict = "PASS" if a["passed"] else "FAIL"
            print(f"{verdict} {a['metric']} {a['op']} {a['bound']} (value {a['value']})")
        for path in result["files"]:
            print(f"wrote {path}")


def _run_ratefit(args: argparse.Namespace) -> int:
    result = ratefit(args.csv, args.x, args.y)
    if not result["success"]:
        _print_error(result["error"])
        return EXIT_ERROR
    block = json.dumps({k: v for k, v in result.items() if k != "success"}, indent=2)
    if USE_RICH:
        console.print(Panel(
            f"slope {result['slope']:.6g}   R^2 {result['r_squared']:.6g}   points {result['points']}",
            title=f"log {args.y} vs log {args.x}", style="bold green",
        ))
        console.print(block)
    else:
        print(f"slope {result['slope']:.6g}  R^2 {result['r_squared']:.6g}  points {result['points']}")
        print(block)
    return EXIT_OK


def _config_for(args: argparse.Namespace) -> Dict[str, Any]:
    if args.config:
        config = load_config(args.config)
        if args.command != "run" and config["experiment"] not in SUBCOMMAND_KINDS[args.command]:
            raise ConfigError([
                f"experiment: {config['experiment']!r} is not a {args.command} experiment"
            ])
        return config
    return complete_config(default_config(args.kind))


def main(argv: Optional[List[str]] = None) -> int:
    """Main function to run the application."""
    args = parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    if args.command == "ratefit":
        return _run_ratefit(args)

    if USE_RICH:
        console.print(Panel("[bold white]Fractional SPDE Lab[/bold white]", style="bold blue"))
    else:
        print("=" * 80)
        print("Fractional SPDE Lab")
        print("=" * 80)

    try:
        settings = RuntimeSettings(args.threads, args.deterministic)
        config = _config_for(args)
    except (ConfigError, OSError) as e:
        _print_error(str(e))
        return EXIT_ERROR

    result = run_experiment(config, args.out, settings, args.seed)
    if not result["success"]:
        _print_error(result["error"])
        return EXIT_ERROR
    _print_result(result)
    return EXIT_OK if result["passed"] else EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
