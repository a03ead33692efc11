"""
Health check for qcvar
Validates the numerical stack on the current machine with small runs.
"""

import platform
import sys
import tempfile
from pathlib import Path
from typing import Tuple

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .beltrami_solver import Coefficient, solve
from .coefficients import zero
from .complex_field import GridSpec, make_field
from .cz_transforms import beurling_padded, make_plan, padded_l2_norm
from .error_handler import safe_execute
from .variation_engine import kernel_phi

console = Console()

DOCTOR_GRID = GridSpec(0.5, 4.0, 32)


class HealthCheck:
    """Runs quick self-checks and reports them as a table."""

    def __init__(self):
        self.results = []

    def run_full_check(self) -> bool:
        console.print(Panel(
            "[bold]🩺 qcvar Health Check[/bold]\n\n"
            f"Platform: {platform.platform()}\n"
            f"Python: {platform.python_version()}",
            title="System Check"
        ))

        checks = [
            ("Python Environment", self._check_python),
            ("Log Directory", self._check_permissions),
            ("Identity Solve", self._check_identity),
            ("Kernel Arithmetic", self._check_kernel),
            ("Beurling Isometry", self._check_isometry),
            ("CFLD Round Trip", self._check_field_io),
        ]

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console
        ) as progress:
            for check_name, check_func in checks:
                task = progress.add_task(f"Checking {check_name}...", total=1)
                status, message = safe_execute(
                    check_func,
                    context=f"Health Check: {check_name}",
                    default_return=(False, f"{check_name} check raised an error")
                )
                self.results.append({'check': check_name, 'status': status, 'message': message})
                progress.update(task, completed=1)

        self._display_results()
        return all(r['status'] for r in self.results)

    def _check_python(self) -> Tuple[bool, str]:
        version = sys.version_info
        if version < (3, 9):
            return False, f"Python {version.major}.{version.minor} is too old (need 3.9+)"
        missing = []
        for module in ('numpy', 'scipy', 'shapely', 'rich', 'yaml', 'click', 'dotenv'):
            try:
                __import__(module)
            except ImportError:
                missing.append(module)
        if missing:
            return False, f"Missing modules: {', '.join(missing)}"
        return True, f"Python {version.major}.{version.minor}.{version.micro}, numpy {np.__version__}"

    def _check_permissions(self) -> Tuple[bool, str]:
        path = Path.home() / '.qcvar' / 'logs'
        try:
            path.mkdir(parents=True, exist_ok=True)
            marker = path / '.test_write'
            marker.write_text("test")
            marker.unlink()
        except OSError as e:
            return False, f"Cannot write to {path}: {e}"
        return True, f"{path} is writable"

    def _check_identity(self) -> Tuple[bool, str]:
        sol = solve(make_plan(DOCTOR_GRID), Coefficient(zero(DOCTOR_GRID)))
        err = float(np.abs(sol.f.values - DOCTOR_GRID.z).max())
        return err <= 1e-10, f"max |f(z) - z| = {err:.2e}"

    def _check_kernel(self) -> Tuple[bool, str]:
        value = kernel_phi(2, -1)
        err = abs(value - 1.0 / 3.0)
        return err < 1e-15, f"phi(2, -1) = {value.real:.17g}"

    def _check_isometry(self) -> Tuple[bool, str]:
        plan = make_plan(DOCTOR_GRID)
        rng = np.random.default_rng(0)
        mask = DOCTOR_GRID.support_mask()
        data = np.where(mask, rng.standard_normal(DOCTOR_GRID.shape)
                        + 1j * rng.standard_normal(DOCTOR_GRID.shape), 0.0)
        data[mask] -= data[mask].mean()
        h = make_field(DOCTOR_GRID, lambda z: data)
        before = padded_l2_norm(plan, h.values)
        after = padded_l2_norm(plan, beurling_padded(plan, h))
        rel = abs(after - before) / before
        return rel <= 1e-6, f"relative L2 change {rel:.2e}"

    def _check_field_io(self) -> Tuple[bool, str]:
        from tools.field_io import read_field, write_field
        field = make_field(DOCTOR_GRID, lambda z: z * np.conj(z) + 1j)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_field(Path(tmp) / 'roundtrip.cfld', field)
            back = read_field(path)
        same = back.spec == field.spec and np.array_equal(back.values, field.values)
        return same, "bit-identical" if same else "round trip changed the field"

    def _display_results(self):
        table = Table(title="Health Check Results")
        table.add_column("Check", style="cyan")
        table.add_column("Status", style="bold")
        table.add_column("Details", style="dim")
        for result in self.results:
            icon, color = ("✅", "green") if result['status'] else ("❌", "red")
            table.add_row(result['check'], f"[{color}]{icon}[/{color}]", result['message'])
        console.print(table)
        passed = sum(1 for r in self.results if r['status'])
        console.print(f"\n[bold]Overall Status: {passed}/{len(self.results)} checks passed[/bold]")


def run_health_check() -> bool:
    return HealthCheck().run_full_check()
