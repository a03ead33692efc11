"""
Run output directories for qcvar
A RunSession owns its output directory through a lock file for the duration
of a run, writes artifacts with a backup of any previous version, and
records a summary of what was produced.
"""

import json
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List

from rich.console import Console
from rich.table import Table

from .error_handler import ConfigurationError

console = Console()

LOCK_NAME = '.qcvar.lock'
SUMMARY_NAME = 'summary.json'


class RunSession:
    """Exclusive owner of one run's output directory."""

    def __init__(self, out_dir, mode: str):
        self.out_dir = Path(out_dir)
        self.mode = mode
        self.lock_file = self.out_dir / LOCK_NAME
        self.artifacts: List[Path] = []
        self.summary: Dict[str, Any] = {'mode': mode}
        self._locked = False

    def __enter__(self) -> 'RunSession':
        self.acquire()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.release()
        return False

    def acquire(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock_file, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigurationError(
                f"output directory {self.out_dir} is in use by another run "
                f"(remove {self.lock_file} if that run is gone)"
            )
        with os.fdopen(fd, 'w') as f:
            f.write(f"{os.getpid()}\n")
        self._locked = True
        self.summary['started'] = datetime.now().isoformat()

    def release(self):
        if self._locked:
            self.lock_file.unlink(missing_ok=True)
            self._locked = False

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write(self, name: str, writer: Callable[[Path], Any]) -> Path:
        """
        Produce artifact name with writer(path).

        An existing file is moved to .bak first and restored if the writer
        fails; the backup is dropped once the new file is complete.
        """
        target = self.path(name)
        backup = target.with_name(target.name + '.bak')
        if target.exists():
            target.replace(backup)
        try:
            writer(target)
        except Exception:
            target.unlink(missing_ok=True)
            if backup.exists():
                backup.replace(target)
                console.print(f"[yellow]Restored previous {name} from backup.[/yellow]")
            raise
        backup.unlink(missing_ok=True)
        if target not in self.artifacts:
            self.artifacts.append(target)
        return target

    def record(self, **values):
        self.summary.update(values)

    def finish(self, status: str = 'ok') -> Path:
        self.summary['status'] = status
        self.summary['finished'] = datetime.now().isoformat()
        self.summary['artifacts'] = [p.name for p in self.artifacts]

        def dump(path: Path):
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(self.summary, f, indent=2, default=_jsonable)

        return self.write(SUMMARY_NAME, dump)

    def show(self):
        table = Table(title=f"Run output ({self.mode})")
        table.add_column("Artifact", style="cyan")
        table.add_column("Size", justify="right", style="green")
        for path in self.artifacts:
            size = path.stat().st_size if path.exists() else 0
            table.add_row(path.name, f"{size:,} B")
        console.print(table)
        console.print(f"\n[dim]Written to {self.out_dir.resolve()}[/dim]")


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if hasattr(value, 'item'):
        return value.item()
    if hasattr(value, '__dict__'):
        return vars(value)
    return str(value)
