"""
Centralized error handling for qcvar
Exception hierarchy with exit codes, plus rich rendering of failures for the CLI.
"""

import os
import platform
import traceback
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from rich.console import Console
from rich.panel import Panel

console = Console(stderr=True)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_DEGENERACY = 4
EXIT_EXTREMAL = 5


class QcvarError(Exception):
    """Base exception for qcvar-specific errors."""

    exit_code = EXIT_UNEXPECTED

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = dict(details or {})


class ConfigurationError(QcvarError):
    """Raised when a run configuration is invalid or incomplete."""

    exit_code = EXIT_CONFIG


class FieldError(QcvarError):
    """Raised when a sampled field cannot be built or used."""

    exit_code = EXIT_CONFIG


class GridMismatchError(FieldError):
    """Raised when fields on different grids are combined."""


class SupportError(FieldError):
    """Raised when a field does not vanish on the outer margin of its grid."""


class FieldFormatError(FieldError):
    """Raised when a CFLD file has the wrong magic, version or size."""


class ConstraintError(QcvarError):
    """Raised when a constraint family is invalid or a value leaves it."""

    exit_code = EXIT_CONFIG


class InadmissibleDirectionError(QcvarError):
    """Raised when a variation direction or step leaves the admissible range."""

    exit_code = EXIT_CONFIG


class SolverError(QcvarError):
    """Base for failures of the Beltrami solver and variation integrals."""

    exit_code = EXIT_SOLVER


class CoefficientError(SolverError):
    """Raised when a coefficient violates |mu| < 1."""


class ConvergenceError(SolverError):
    """Raised when the Neumann iteration does not reach its tolerance."""


class NormalizationError(SolverError):
    """Raised when f(1) - f(0) is too small to renormalize."""


class RegularityError(SolverError):
    """Raised when a solution has non-positive Jacobian or vanishing f_z."""


class SingularityError(SolverError):
    """Raised when the variation kernel is evaluated at a pole."""


class DegeneracyError(QcvarError):
    """Raised when a functional degenerates (A vanishes on a set of cells)."""

    exit_code = EXIT_DEGENERACY


class ExtremalConvergenceError(QcvarError):
    """Raised when the extremal fixed-point iteration fails to settle."""

    exit_code = EXIT_EXTREMAL


def format_cells(cells, limit: int = 8) -> str:
    """Render a list of (row, col) cells for error messages."""
    cells = [tuple(int(i) for i in c) for c in cells]
    shown = ", ".join(f"({j},{k})" for j, k in cells[:limit])
    if len(cells) > limit:
        shown += f", ... ({len(cells)} cells)"
    return shown


class ErrorHandler:
    """Maps errors to exit codes and renders them for the terminal."""

    def __init__(self):
        self.log_dir = Path.home() / '.qcvar' / 'logs'

    @property
    def debug_mode(self) -> bool:
        return os.environ.get('QCVAR_DEBUG', '').lower() in ('1', 'true', 'yes')

    def handle_error(self, error: Exception, context: str = "", user_message: str = None) -> int:
        """
        Display an error and return the process exit code for it.

        Args:
            error: The exception that occurred
            context: What was running when it occurred
            user_message: Optional replacement for str(error)
        """
        if isinstance(error, QcvarError):
            exit_code = error.exit_code
            severity = "warning" if exit_code == EXIT_CONFIG else "error"
        else:
            exit_code = EXIT_UNEXPECTED
            severity = "critical"

        self._display_error(error, context, user_message, severity, self._get_guidance(error))

        if self.debug_mode:
            self._log_error(error, context)

        return exit_code

    def _display_error(self, error: Exception, context: str, user_message: Optional[str],
                       severity: str, guidance: str):
        colors = {
            "warning": "yellow",
            "error": "red",
            "critical": "bold red"
        }
        color = colors.get(severity, "red")

        message = user_message or str(error)
        content = f"[{color}]{message}[/{color}]"

        if context:
            content += f"\n[dim]Context: {context}[/dim]"

        if guidance:
            content += f"\n\n[cyan]Hint:[/cyan]\n{guidance}"

        if severity == "critical":
            content += "\n\n[dim]Enable tracebacks: export QCVAR_DEBUG=1[/dim]"

        console.print(Panel(
            content,
            title=f"qcvar {type(error).__name__}",
            border_style=color
        ))

    def _get_guidance(self, error: Exception) -> str:
        """Suggest a next step per error family."""
        if isinstance(error, ConvergenceError):
            history = error.details.get('history') or []
            tail = f" (last increments: {', '.join(f'{x:.2e}' for x in history[-3:])})" if history else ""
            return f"• Lower the coefficient's k_sup or raise solver.max_terms{tail}"
        if isinstance(error, (CoefficientError, RegularityError)):
            return "• Check that |mu| stays below 1 and the grid resolves the coefficient"
        if isinstance(error, SupportError):
            return "• Coefficients must vanish outside the central half of the grid\n• Increase grid.half_width"
        if isinstance(error, FieldFormatError):
            return "• The file is not a CFLD v1 field"
        if isinstance(error, DegeneracyError):
            return "• The functional's A(w) vanishes on many cells; move or reweight atoms"
        if isinstance(error, ExtremalConvergenceError):
            return "• Use a smaller extremal.theta or raise extremal.max_iter"
        if isinstance(error, (ConfigurationError, ConstraintError, InadmissibleDirectionError)):
            return "• Run 'qcvar validate <config>' for a full list of problems"
        if isinstance(error, PermissionError):
            return "• Check write permissions on the output directory"
        return ""

    def _log_error(self, error: Exception, context: str):
        """Append error details to the debug log."""
        try:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            with open(self.log_dir / 'errors.log', 'a', encoding='utf-8') as f:
                f.write(f"\n{'=' * 50}\n")
                f.write(f"Timestamp: {datetime.now().isoformat()}\n")
                f.write(f"Platform: {platform.platform()}\n")
                f.write(f"Context: {context}\n")
                f.write(f"Error: {type(error).__name__}: {error}\n")
                if isinstance(error, QcvarError) and error.details:
                    f.write(f"Details: {sorted(error.details)}\n")
                f.write("Traceback:\n")
                f.write("".join(traceback.format_exception(type(error), error, error.__traceback__)))
        except OSError:
            # Logging must never mask the original failure
            pass


# Global error handler instance
error_handler = ErrorHandler()


def safe_execute(func: Callable, context: str = "", user_message: str = None, default_return=None):
    """Run func, reporting any failure and returning default_return instead."""
    try:
        return func()
    except Exception as e:
        error_handler.handle_error(e, context, user_message)
        return default_return
