#!/usr/bin/env python3
"""
Multimodal Recommendation Benchmark CLI

Runs declarative experiments over interaction logs and per-modality item
embeddings:
- run        full pipeline from a YAML config
- stats      dataset characteristics of an interaction file
- fuse       early/mid fusion of the configured embeddings only
- aggregate  rank fusion of ranked-list files
- report     tradeoff AUCs over a directory of runs
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from src.bench.config import load_config, load_config_with_warnings
from src.bench.reporting import write_report
from src.bench.runner import fuse_only, run_experiment
from src.corpus.interactions import FORMATS, load_interactions
from src.corpus.stats import dataset_stats
from src.fusion.late import DEFAULT_RRF_K, MISSING_RANKS, RULES, fuse_ranked_files, write_ranked_lists
from src.utils.errors import BenchError, StageError
from src.utils.log import console as err_console
from src.utils.log import set_level

# Results go to stdout, diagnostics to stderr
console = Console()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def print_banner():
    """Print the run banner."""
    banner_text = Text()
    banner_text.append("MULTIMODAL RECOMMENDATION BENCHMARK", style="bold cyan")
    banner_text.append("\nAudio, visual and text item features ", style="white")
    banner_text.append("fused early, mid or late", style="bold green")

    err_console.print(Panel(banner_text, border_style="cyan", padding=(1, 2)))


def print_section(title: str):
    """Print a formatted section header."""
    err_console.print(f"\n[bold cyan]{'=' * 80}[/bold cyan]")
    err_console.print(f"[bold yellow] {title}[/bold yellow]")
    err_console.print(f"[bold cyan]{'=' * 80}[/bold cyan]")


def print_error(message: str):
    err_console.print(f"[bold red]✗ Error:[/bold red] {message}")


def _rows_table(title: str, rows, headers=("Metric", "Value")) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for header in headers:
        table.add_column(header)
    for row in rows:
        table.add_row(*(str(cell) for cell in row))
    return table


def _config_or_exit(path: str):
    if not Path(path).is_file():
        print_error(f"config file not found: {path}")
        return None
    return path


def cmd_run(args) -> int:
    if _config_or_exit(args.config) is None:
        return EXIT_USAGE
    config, warnings = load_config_with_warnings(args.config)
    print_banner()
    print_section("RUNNING EXPERIMENT")
    try:
        result = run_experiment(config, warnings)
    except StageError as e:
        print_error(f"stage '{e.stage}' failed: {e.cause}")
        return EXIT_FAILURE

    print_section("RESULTS")
    console.print(_rows_table(f"{config.dataset.name} / {result.report.metadata.get('model')}", result.report.as_table()))
    if result.best is not None:
        console.print(f"[bold white]Best hyper-parameters:[/bold white] {result.best.trial.overrides} "
                      f"({result.best.objective}={result.best.trial.objective:.4f})")
    console.print(f"\n[bold green]✓ Outputs written to:[/bold green] [cyan]{result.run_dir}[/cyan]")
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = dataset_stats(load_interactions(args.data, args.format))
    if args.json:
        print(json.dumps({
            "n_interactions": stats.n_interactions,
            "n_users": stats.n_users,
            "n_items": stats.n_items,
            "avg_per_user": stats.avg_per_user,
            "avg_per_item": stats.avg_per_item,
            "density": stats.density,
        }))
    else:
        console.print(_rows_table(f"Dataset characteristics: {args.data}", stats.as_table(), ("Statistic", "Value")))
    return EXIT_OK


def cmd_fuse(args) -> int:
    if _config_or_exit(args.config) is None:
        return EXIT_USAGE
    config = load_config(args.config)
    features, path = fuse_only(config, args.out)
    console.print(
        f"[bold green]✓ Fused {len(features.item_ids)} items x {features.dim} dims "
        f"({features.operator}, {features.stage}):[/bold green] [cyan]{path}[/cyan]"
    )
    return EXIT_OK


def cmd_aggregate(args) -> int:
    fused, user_ids, item_ids = fuse_ranked_files(
        args.lists,
        rule=args.rule,
        catalog_size=args.catalog_size,
        weights=args.weights,
        rrf_k=args.rrf_k,
        missing_rank=args.missing_rank,
    )
    if args.depth:
        fused = {user: meta.truncated(args.depth) for user, meta in fused.items()}
    write_ranked_lists(args.out, fused, user_ids, item_ids)
    console.print(f"[bold green]✓ Fused {len(args.lists)} systems for {len(fused)} users ({args.rule}):[/bold green] [cyan]{args.out}[/cyan]")
    return EXIT_OK


def cmd_report(args) -> int:
    table = write_report(args.runs, args.out)
    rows = [
        (row.model, row.axis, row.points, "n/a" if pd.isna(row.auc) else f"{row.auc:.4f}")
        for row in table.itertuples(index=False)
    ]
    console.print(_rows_table("Tradeoff AUC (nDCG vs beyond-accuracy)", rows, ("Model", "Axis", "Points", "AUC")))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmbench",
        description="Multimodal recommendation benchmark - fuse item embeddings, train recommenders, score top-N lists",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Full experiment
  python main.py run --config configs/vbpr_pca.yaml

  # Dataset characteristics
  python main.py stats --data ratings.dat --format movielens_dat

  # Fuse embeddings only
  python main.py fuse --config configs/vbpr_pca.yaml --out fused.tsv

  # Reciprocal rank fusion of two ranked-list files
  python main.py aggregate --lists vaecf.tsv vbpr.tsv --rule rrf --out fused.tsv

  # Tradeoff AUCs over finished runs
  python main.py report --runs runs/
        """,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Show debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run the full pipeline from a config")
    run.add_argument("--config", required=True, help="YAML experiment config")
    run.set_defaults(handler=cmd_run)

    stats = sub.add_parser("stats", help="Print dataset characteristics")
    stats.add_argument("--data", required=True, help="Interaction file")
    stats.add_argument("--format", choices=FORMATS, default="tsv", help="Interaction file format")
    stats.add_argument("--json", action="store_true", help="Print JSON instead of a table")
    stats.set_defaults(handler=cmd_stats)

    fuse = sub.add_parser("fuse", help="Fuse the configured embeddings and write the fused table")
    fuse.add_argument("--config", required=True, help="YAML experiment config")
    fuse.add_argument("--out", help="Output TSV (default: <run dir>/fused_features.tsv)")
    fuse.set_defaults(handler=cmd_fuse)

    aggregate = sub.add_parser("aggregate", help="Fuse ranked-list files into a meta-ranking")
    aggregate.add_argument("--lists", nargs="+", required=True, help="Ranked-list files, one per system")
    aggregate.add_argument("--rule", choices=RULES, required=True, help="Fusion rule")
    aggregate.add_argument("--out", default="fused_lists.tsv", help="Output ranked-list file")
    aggregate.add_argument("--weights", nargs="+", type=float, help="Per-system weights (wborda)")
    aggregate.add_argument("--rrf-k", type=int, default=DEFAULT_RRF_K, help="RRF smoothing constant")
    aggregate.add_argument("--catalog-size", type=int, help="Catalogue size (default: union of listed items)")
    aggregate.add_argument("--missing-rank", choices=MISSING_RANKS, default="list", help="Rank given to unlisted items")
    aggregate.add_argument("--depth", type=int, help="Truncate meta-rankings to this length")
    aggregate.set_defaults(handler=cmd_aggregate)

    report = sub.add_parser("report", help="Collect results and compute tradeoff AUCs")
    report.add_argument("--runs", required=True, help="Directory holding run outputs")
    report.add_argument("--out", help="Output CSV (default: <runs>/tradeoff.csv)")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if args.verbose:
        set_level("DEBUG")
    try:
        return args.handler(args)
    except (BenchError, FileNotFoundError) as e:
        print_error(str(e))
        return EXIT_FAILURE
    except KeyboardInterrupt:
        err_console.print("\n[bold yellow]Interrupted[/bold yellow]")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
