"""
Configuration management for qcvar
Loads YAML run configurations, applies defaults, validates them into
diagnostics and builds the numerical objects a run needs.
"""

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .beltrami_solver import Coefficient
from .coefficients import (
    PRESET_PARAMETERS, disk_constraint, get_preset, list_presets, polygon_constraint,
)
from .complex_field import ComplexField, GridSpec
from .constraint_sets import UNIT_MARGIN, ConstraintFamily, DiskFamily
from .error_handler import ConfigurationError, QcvarError
from .functionals import Functional
from .variation_engine import EPS_MAX, VariationDirection, make_direction

console = Console()

MODES = ('solve', 'variation_check', 'gateaux_check', 'extremal')

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'grid': {'n': 256, 'half_width': 4.0, 'center': 0.5},
    'coefficient': {'preset': 'zero'},
    'constraints': None,
    'functional': None,
    'variation': {'epsilons': [0.2, 0.1, 0.05], 'targets': [2, [-1, 1], [0.5, 2]],
                  'relative': False},
    'solver': {'tol': 1e-10, 'max_terms': 500, 'threads': 1},
    'extremal': {'theta': 0.5, 'tol': 1e-6, 'max_iter': 50, 'samples': 64,
                 'tol_boundary': 1e-8, 'tol_dir': 1e-6, 'active_tol': 1e-12, 'polish': True},
    'output': {'dir': 'qcvar_out'},
}

SECTION_KEYS = {
    'grid': {'n', 'half_width', 'center'},
    'constraints': {'kind', 'center', 'radius', 'support_radius', 'vertices', 'manifest',
                    'center_file', 'radius_file'},
    'functional': {'atoms', 'sense'},
    'variation': {'nu', 'relative', 'epsilons', 'targets'},
    'solver': {'tol', 'max_terms', 'threads'},
    'extremal': {'theta', 'tol', 'max_iter', 'samples', 'tol_boundary', 'tol_dir',
                 'active_tol', 'polish'},
    'output': {'dir'},
}
TOP_LEVEL = {'mode', 'coefficient'} | set(SECTION_KEYS)

REQUIRED = {
    'solve': ('coefficient',),
    'variation_check': ('coefficient', 'variation.nu'),
    'gateaux_check': ('coefficient', 'variation.nu', 'functional'),
    'extremal': ('constraints', 'functional'),
}


def parse_complex(value: Any, what: str = "value") -> complex:
    """Accept a number, an [re, im] pair or a complex() string."""
    if isinstance(value, bool):
        raise ConfigurationError(f"{what}: expected a complex number, got {value!r}")
    if isinstance(value, (int, float, complex)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(' ', ''))
        except ValueError:
            pass
    raise ConfigurationError(f"{what}: cannot read {value!r} as a complex number")


@dataclass(frozen=True)
class Diagnostic:
    level: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


@dataclass
class RunConfig:
    """A merged, validated run configuration."""

    mode: str
    sections: Dict[str, Any]
    source: Optional[Path] = None
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def section(self, name: str) -> Any:
        return self.sections.get(name)

    @property
    def output_dir(self) -> Path:
        return Path(self.sections['output']['dir'])

    @property
    def threads(self) -> int:
        return int(self.sections['solver']['threads'])

    def grid_spec(self) -> GridSpec:
        grid = self.sections['grid']
        return GridSpec(parse_complex(grid['center'], "grid.center"), grid['half_width'], grid['n'])


class ConfigManager:
    """Reads run configurations; QCVAR_* environment defaults come from ~/.qcvar/.env."""

    def __init__(self, env_file: Optional[Path] = None):
        self.config_dir = Path.home() / '.qcvar'
        self.env_file = env_file or self.config_dir / '.env'
        load_dotenv(self.env_file)

    # -- loading --

    def read(self, path) -> Dict[str, Any]:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"configuration file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path}: not valid YAML ({e})")
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a mapping of sections")
        return data

    def merged(self, data: Dict[str, Any]) -> Dict[str, Any]:
        """Defaults overlaid with data, section by section."""
        out = copy.deepcopy(DEFAULTS)
        env_threads = os.getenv('QCVAR_THREADS')
        if env_threads:
            out['solver']['threads'] = int(env_threads)
        for key, value in data.items():
            if key == 'mode' or (value is None and isinstance(out.get(key), dict)):
                continue
            if isinstance(out.get(key), dict) and isinstance(value, dict) and key != 'coefficient':
                out[key].update(value)
            else:
                out[key] = copy.deepcopy(value)
        _coerce_numbers(out)
        return out

    def load(self, path, out_dir: Optional[str] = None, threads: Optional[int] = None) -> RunConfig:
        """Read, merge and validate; raises ConfigurationError on any error diagnostic."""
        data = self.read(path)
        if out_dir is not None:
            data.setdefault('output', {})
            data['output'] = dict(data['output'] or {}, dir=str(out_dir))
        if threads is not None:
            data.setdefault('solver', {})
            data['solver'] = dict(data['solver'] or {}, threads=int(threads))
        diagnostics = self.validate(data)
        errors = [d for d in diagnostics if d.level == 'error']
        if errors:
            raise ConfigurationError(
                f"{path}: {errors[0].message}" + (f" (and {len(errors) - 1} more)" if len(errors) > 1 else ""),
                {'diagnostics': [str(d) for d in diagnostics]}
            )
        return RunConfig(data['mode'], self.merged(data), Path(path), diagnostics)

    # -- validation --

    def validate(self, data: Dict[str, Any]) -> List[Diagnostic]:
        """Full non-mutating validation; a config is runnable iff no diagnostic is an error."""
        diags: List[Diagnostic] = []

        def error(msg):
            diags.append(Diagnostic('error', msg))

        def warning(msg):
            diags.append(Diagnostic('warning', msg))

        for key in sorted(set(data) - TOP_LEVEL):
            error(f"unknown section '{key}'")
        for name, allowed in SECTION_KEYS.items():
            section = data.get(name)
            if section is None:
                continue
            if not isinstance(section, dict):
                error(f"section '{name}' must be a mapping")
                continue
            for key in sorted(set(section) - allowed):
                error(f"unknown key '{name}.{key}'")

        mode = data.get('mode')
        if mode not in MODES:
            error(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
        else:
            for req in REQUIRED[mode]:
                head, _, tail = req.partition('.')
                present = data.get(head)
                if tail:
                    present = present.get(tail) if isinstance(present, dict) else None
                if present is None:
                    error(f"mode '{mode}' needs '{req}'")

        if any(d.level == 'error' for d in diags):
            return diags
        cfg = self.merged(data)

        spec = self._guard(diags, lambda: RunConfig(mode, cfg).grid_spec())
        self._check_numbers(cfg, mode, error)
        if spec is None:
            return diags

        mu = None
        if 'coefficient' in REQUIRED[mode]:
            mu = self._guard(diags, lambda: self.build_coefficient(cfg['coefficient'], spec, "coefficient"))
        if mode in ('variation_check', 'gateaux_check') and mu is not None:
            self._guard(diags, lambda: self.build_direction(cfg['variation'], mu, spec))
        if mode == 'variation_check':
            self._guard(diags, lambda: self._check_points(cfg['variation']['targets'], spec, "variation target"))
        if cfg.get('constraints') is not None:
            self._check_constraints(cfg['constraints'], error)
            if not any(d.level == 'error' for d in diags):
                self._guard(diags, lambda: self.build_family(cfg['constraints'], spec))
        if cfg.get('functional') is not None:
            fn = self._guard(diags, lambda: self.build_functional(cfg['functional']))
            if fn is not None:
                for atom in fn.atoms:
                    if atom.zeta in (0, 1):
                        warning(f"atom at normalization point {atom.zeta.real:g} contributes zero derivative")
                self._guard(diags, lambda: self._check_points(fn.zetas, spec, "functional atom"))
        return diags

    def _guard(self, diags: List[Diagnostic], build):
        try:
            return build()
        except (QcvarError, ValueError, TypeError, KeyError) as e:
            diags.append(Diagnostic('error', str(e)))
            return None

    def _check_numbers(self, cfg: Dict[str, Any], mode: str, error):
        solver = cfg['solver']
        if not _positive(solver.get('tol')):
            error("solver.tol must be positive")
        if not _positive_int(solver.get('max_terms')):
            error("solver.max_terms must be a positive integer")
        if not _positive_int(solver.get('threads')):
            error("solver.threads must be a positive integer")

        if mode in ('variation_check', 'gateaux_check'):
            eps = cfg['variation'].get('epsilons')
            if not isinstance(eps, list) or not eps:
                error("variation.epsilons must be a non-empty list")
            else:
                for e in eps:
                    if not isinstance(e, (int, float)) or isinstance(e, bool):
                        error(f"epsilon {e!r} is not a number")
                    elif e > EPS_MAX:
                        error(f"epsilon {e} exceeds 1/2")
                    elif e <= 0:
                        error(f"epsilon {e} must be positive")
                numeric = [e for e in eps if isinstance(e, (int, float))]
                if any(b >= a for a, b in zip(numeric, numeric[1:])):
                    error("variation.epsilons must be strictly decreasing")

        if mode == 'extremal':
            ext = cfg['extremal']
            theta = ext.get('theta')
            if not isinstance(theta, (int, float)) or not 0 < theta <= 1:
                error(f"extremal.theta must lie in (0, 1], got {theta!r}")
            for key in ('tol', 'tol_boundary', 'tol_dir', 'active_tol'):
                if not _positive(ext.get(key)):
                    error(f"extremal.{key} must be positive")
            for key in ('max_iter', 'samples'):
                if not _positive_int(ext.get(key)):
                    error(f"extremal.{key} must be a positive integer")

    def _check_constraints(self, cons: Dict[str, Any], error):
        kind = cons.get('kind')
        files = {'center_file', 'radius_file'} & set(cons)
        if files:
            if kind != 'disk' or len(files) != 2:
                error("constraints.center_file and constraints.radius_file go together, with kind 'disk'")
            elif {'center', 'radius', 'manifest'} & set(cons):
                error("constraints: give either center_file/radius_file or center/radius, not both")
        elif kind == 'disk' and 'manifest' not in cons:
            try:
                reach = abs(parse_complex(cons.get('center', 0.0), "constraints.center")) + float(cons.get('radius', 0.3))
            except (ConfigurationError, ValueError, TypeError) as e:
                error(str(e))
                return
            if reach >= 1.0 - UNIT_MARGIN:
                error(f"constraint family leaves unit disk (|c| + k = {reach:.6g})")
        elif kind not in ('disk', 'polygon'):
            error(f"constraints.kind must be 'disk' or 'polygon', got {kind!r}")

    def _check_points(self, points, spec: GridSpec, what: str):
        for p in points:
            z = parse_complex(p, what) if not isinstance(p, complex) else p
            if not spec.strictly_contains(z):
                raise ConfigurationError(f"{what} {z:.6g} lies outside the grid")

    # -- builders --

    def build_coefficient(self, entry: Dict[str, Any], spec: GridSpec, what: str) -> ComplexField:
        if not isinstance(entry, dict):
            raise ConfigurationError(f"{what} must be a mapping with 'preset' or 'file'")
        if 'file' in entry:
            if set(entry) != {'file'}:
                raise ConfigurationError(f"{what}: 'file' takes no other keys")
            from tools.field_io import read_field
            field_ = read_field(entry['file'], spec)
        else:
            params = {k: v for k, v in entry.items() if k != 'preset'}
            name = entry.get('preset')
            if name in PRESET_PARAMETERS and 'center' in params:
                params['center'] = parse_complex(params['center'], f"{what}.center")
            field_ = get_preset(name, spec, params)
        Coefficient(field_)
        return field_

    def build_direction(self, variation: Dict[str, Any], mu: ComplexField,
                        spec: GridSpec, family: Optional[ConstraintFamily] = None) -> VariationDirection:
        nu = self.build_coefficient(variation['nu'], spec, "variation.nu")
        if variation.get('relative'):
            nu = mu + nu
        return make_direction(mu, nu, family)

    def build_family(self, cons: Dict[str, Any], spec: GridSpec) -> ConstraintFamily:
        if 'manifest' in cons:
            from tools.field_io import load_family
            fam = load_family(cons['manifest'])
            if fam.spec != spec:
                raise ConfigurationError(f"constraint manifest is stored on {fam.spec}, run grid is {spec}")
            return fam
        if 'center_file' in cons:
            return self._disk_from_files(cons, spec)
        support = float(cons.get('support_radius', 1.0))
        if cons['kind'] == 'disk':
            return disk_constraint(spec, parse_complex(cons.get('center', 0.0), "constraints.center"),
                                   float(cons.get('radius', 0.3)), support)
        vertices = [parse_complex(v, "constraints.vertices") for v in cons.get('vertices') or []]
        return polygon_constraint(spec, vertices, support)

    def _disk_from_files(self, cons: Dict[str, Any], spec: GridSpec) -> DiskFamily:
        from tools.field_io import read_field
        c = read_field(cons['center_file'], spec)
        k = read_field(cons['radius_file'], spec).values
        if np.abs(k.imag).max() > 0:
            raise ConfigurationError(f"radius field must be real ({cons['radius_file']})")
        return DiskFamily(c, k.real)

    def build_functional(self, entry: Dict[str, Any]) -> Functional:
        atoms = entry.get('atoms')
        if not isinstance(atoms, list):
            raise ConfigurationError("functional.atoms must be a list of {zeta, weight}")
        parsed = []
        for i, atom in enumerate(atoms):
            if not isinstance(atom, dict) or set(atom) - {'zeta', 'weight'} or 'zeta' not in atom:
                raise ConfigurationError(f"functional.atoms[{i}] must have keys zeta and weight")
            parsed.append((parse_complex(atom['zeta'], f"atoms[{i}].zeta"),
                           parse_complex(atom.get('weight', 1.0), f"atoms[{i}].weight")))
        return Functional(parsed, entry.get('sense', 'max'))

    def targets(self, config: RunConfig) -> np.ndarray:
        return np.array([parse_complex(t, "variation target")
                         for t in config.sections['variation']['targets']], dtype=np.complex128)

    # -- display --

    def show_config(self, config: RunConfig):
        console.print(Panel(
            f"[bold]Mode:[/bold] {config.mode}\n[dim]Source: {config.source}[/dim]",
            title="⚙️  Run Configuration"
        ))
        table = Table(title="Settings")
        table.add_column("Section", style="cyan")
        table.add_column("Key", style="blue")
        table.add_column("Value", style="green")
        for name in ('grid', 'coefficient', 'constraints', 'functional', 'variation',
                     'solver', 'extremal', 'output'):
            section = config.sections.get(name)
            if not isinstance(section, dict):
                continue
            for key, value in section.items():
                table.add_row(name, key, str(value))
        console.print(table)
        console.print(f"[dim]Coefficient presets: {', '.join(list_presets())}[/dim]")

    def show_diagnostics(self, diagnostics: List[Diagnostic]):
        if not diagnostics:
            console.print("[green]✅ Configuration is valid.[/green]")
            return
        table = Table(title="Diagnostics")
        table.add_column("Level")
        table.add_column("Message")
        for d in diagnostics:
            style = "red" if d.level == 'error' else "yellow"
            table.add_row(f"[{style}]{d.level}[/{style}]", d.message)
        console.print(table)


def _positive(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0


def _positive_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


NUMERIC_KEYS = {
    'grid': ('half_width',),
    'solver': ('tol',),
    'extremal': ('theta', 'tol', 'tol_boundary', 'tol_dir', 'active_tol'),
    'constraints': ('radius', 'support_radius'),
}


def _to_float(value):
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce_numbers(cfg: Dict[str, Any]):
    """YAML reads 1e-10 (no dot) as a string; turn such numeric entries into floats."""
    for name, keys in NUMERIC_KEYS.items():
        section = cfg.get(name)
        if isinstance(section, dict):
            for key in keys:
                if key in section:
                    section[key] = _to_float(section[key])
    variation = cfg.get('variation')
    if isinstance(variation, dict) and isinstance(variation.get('epsilons'), list):
        variation['epsilons'] = [_to_float(e) for e in variation['epsilons']]
