#!/usr/bin/env python3
"""
qcvar - solve set-constrained Beltrami equations, check first-order
variations and search for extremals of atomic functionals.
"""

import logging
import sys
from pathlib import Path

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

load_dotenv(Path.home() / '.qcvar' / '.env')

from core.complex_field import l2_norm
from core.config_manager import ConfigManager, RunConfig
from core.error_handler import EXIT_CONFIG, EXIT_OK, error_handler
from core.health_check import run_health_check
from core.router import Router
from tools.field_io import read_field

__version__ = "1.0.0"

console = Console()


def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=verbose)],
        force=True,
    )


@click.group()
@click.version_option(version=__version__, prog_name="qcvar")
@click.option('--verbose', '-v', is_flag=True, help='Log every Neumann term and iteration')
def cli(verbose):
    """qcvar - variations and extremals for constrained Beltrami equations."""
    _setup_logging(verbose)


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--out', '-o', 'out_dir', help='Output directory (overrides output.dir)')
@click.option('--threads', '-t', type=click.IntRange(min=1), help='FFT worker threads')
def run(config_path, out_dir, threads):
    """Run the pipeline described by CONFIG_PATH."""
    try:
        manager = ConfigManager()
        config = manager.load(config_path, out_dir=out_dir, threads=threads)
        for d in config.diagnostics:
            console.print(f"[yellow]⚠️  {d.message}[/yellow]")
        Router(manager).run(config)
    except Exception as e:
        sys.exit(error_handler.handle_error(e, context=f"run {config_path}"))
    sys.exit(EXIT_OK)


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--show', is_flag=True, help='Print the merged settings of a valid config')
def validate(config_path, show):
    """Check CONFIG_PATH without running it."""
    try:
        manager = ConfigManager()
        data = manager.read(config_path)
        diagnostics = manager.validate(data)
    except Exception as e:
        sys.exit(error_handler.handle_error(e, context=f"validate {config_path}"))
    manager.show_diagnostics(diagnostics)
    if any(d.level == 'error' for d in diagnostics):
        sys.exit(EXIT_CONFIG)
    if show:
        manager.show_config(RunConfig(data['mode'], manager.merged(data), Path(config_path), diagnostics))


@cli.command()
def doctor():
    """Run self-checks of the numerical stack."""
    console.print(Panel(
        Text("🩺 Health Check", style="bold cyan"),
        subtitle="Numerical self-tests"
    ))
    if not run_health_check():
        console.print("\n[yellow]Some checks failed. Reinstall with ./install.sh if modules are missing.[/yellow]")
        sys.exit(1)


@cli.command()
@click.argument('field_path', type=click.Path(exists=True, dir_okay=False))
def inspect(field_path):
    """Summarize a CFLD field file."""
    try:
        field = read_field(field_path)
    except Exception as e:
        sys.exit(error_handler.handle_error(e, context=f"inspect {field_path}"))

    spec = field.spec
    mod = field.abs()
    table = Table(title=str(Path(field_path).name))
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("grid", f"n={spec.n}, half_width={spec.half_width:g}, center={spec.center:g}")
    table.add_row("spacing h", f"{spec.h:.6g}")
    table.add_row("sup |v|", f"{mod.max():.6g}")
    table.add_row("nonzero cells", f"{int((mod > 0).sum())} / {spec.n * spec.n}")
    table.add_row("real range", f"[{field.values.real.min():.6g}, {field.values.real.max():.6g}]")
    table.add_row("imag range", f"[{field.values.imag.min():.6g}, {field.values.imag.max():.6g}]")
    table.add_row("L2 norm", f"{l2_norm(field):.6g}")
    console.print(table)


if __name__ == '__main__':
    cli()
