"""
CSV tables and terminal summaries for qcvar runs
CSV files use ',' separators, '.' decimals and a header row; floats are
written with repr so a re-read gives back the same bits.
"""

import csv
from pathlib import Path
from typing import Iterable, List, Sequence

from rich.console import Console
from rich.table import Table

from core.functionals import ExtremalReport, GateauxRow
from core.variation_engine import VariationRow

console = Console()

CONVERGENCE_COLUMNS = ('epsilon', 'zeta_re', 'zeta_im', 'fd_re', 'fd_im', 'v_re', 'v_im', 'abs_err',
                       'vlin_re', 'vlin_im', 'lin_err')
GATEAUX_COLUMNS = ('epsilon', 'quotient', 'predicted', 'abs_err', 'linearized', 'lin_err')
RUN_LOG_COLUMNS = ('iter', 'omega', 'boundary_residual', 'euler_residual', 'step_change')


def _write(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow(['' if x is None else repr(float(x)) if isinstance(x, float) else x
                         for x in row])
    return path


def read_csv(path: Path) -> List[dict]:
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def write_convergence_table(path: Path, rows: Sequence[VariationRow]) -> Path:
    return _write(path, CONVERGENCE_COLUMNS, (
        (r.epsilon, r.zeta.real, r.zeta.imag, r.fd.real, r.fd.imag, r.v.real, r.v.imag, r.abs_err,
         *((None, None) if r.v_lin is None else (r.v_lin.real, r.v_lin.imag)), r.lin_err)
        for r in rows
    ))


def write_gateaux_table(path: Path, rows: Sequence[GateauxRow]) -> Path:
    return _write(path, GATEAUX_COLUMNS, (
        (r.epsilon, r.difference_quotient, r.predicted, r.abs_err, r.linearized, r.lin_err)
        for r in rows
    ))


def write_run_log(path: Path, reports: Sequence[ExtremalReport]) -> Path:
    return _write(path, RUN_LOG_COLUMNS, (
        (r.iteration, r.omega_value, r.boundary_residual, r.euler_residual, r.step_change)
        for r in reports
    ))


def error_ratios(rows: Sequence[VariationRow], column: str = 'abs_err') -> List[float]:
    """err(eps_i) / err(eps_{i+1}) per target, in table order; column is abs_err or lin_err."""
    by_target = {}
    for r in rows:
        err = getattr(r, column)
        if err is not None:
            by_target.setdefault(r.zeta, []).append(err)
    ratios = []
    for errs in by_target.values():
        ratios.extend(a / b for a, b in zip(errs, errs[1:]) if b > 0)
    return ratios


def show_convergence(rows: Sequence[VariationRow]):
    table = Table(title="First-order variation check")
    table.add_column("epsilon", justify="right", style="cyan")
    table.add_column("zeta", style="blue")
    table.add_column("(f_eps - f)/eps", justify="right")
    table.add_column("V", justify="right")
    table.add_column("|error|", justify="right", style="yellow")
    table.add_column("|error| linearized", justify="right", style="green")
    for r in rows:
        lin = "-" if r.lin_err is None else f"{r.lin_err:.3e}"
        table.add_row(f"{r.epsilon:g}", f"{r.zeta:.4g}", f"{r.fd:.6g}", f"{r.v:.6g}", f"{r.abs_err:.3e}", lin)
    console.print(table)


def show_gateaux(rows: Sequence[GateauxRow]):
    table = Table(title="Gateaux derivative check")
    table.add_column("epsilon", justify="right", style="cyan")
    table.add_column("quotient", justify="right")
    table.add_column("predicted", justify="right")
    table.add_column("|error|", justify="right", style="yellow")
    table.add_column("|error| linearized", justify="right", style="green")
    for r in rows:
        lin = "-" if r.lin_err is None else f"{r.lin_err:.3e}"
        table.add_row(f"{r.epsilon:g}", f"{r.difference_quotient:.8g}", f"{r.predicted:.8g}",
                      f"{r.abs_err:.3e}", lin)
    console.print(table)


def show_checks(summary: dict):
    """Pass/fail table for the necessary conditions of an extremal run."""
    table = Table(title="Necessary conditions")
    table.add_column("Check", style="cyan")
    table.add_column("Value", justify="right")
    table.add_column("Limit", justify="right")
    table.add_column("Status")
    for name, check in summary.items():
        status = "[green]✅ pass[/green]" if check['passed'] else "[red]❌ fail[/red]"
        table.add_row(name, f"{check['value']:.3e}", f"{check['limit']:.1e}", status)
    console.print(table)
