"""
Run dispatch for qcvar
Routes a validated run configuration to its pipeline (solve, variation
check, Gateaux check or extremal search) and persists what it produces.
"""

import logging
from dataclasses import asdict
from typing import Dict

import numpy as np
import scipy.fft
from rich.console import Console
from rich.panel import Panel

from tools import field_io, reports

from .beltrami_solver import Coefficient, solve
from .complex_field import l2_norm
from .config_manager import ConfigManager, RunConfig
from .cz_transforms import make_plan
from .error_handler import QcvarError
from .functionals import (
    ascent_direction, check_directions, check_max_principle, check_normal_inequality, field_B,
    gateaux_check, gateaux_derivative, run_fixed_point, stationarity_defect,
)
from .session import RunSession
from .variation_engine import finite_difference_variation

console = Console()
logger = logging.getLogger(__name__)


class Router:
    """Runs one configuration end to end."""

    def __init__(self, config_manager: ConfigManager = None):
        self.config_manager = config_manager or ConfigManager()
        self.pipelines = {
            'solve': self._run_solve,
            'variation_check': self._run_variation_check,
            'gateaux_check': self._run_gateaux_check,
            'extremal': self._run_extremal,
        }

    def run(self, config: RunConfig) -> Dict:
        """Execute config inside its own output directory; returns the run summary."""
        spec = config.grid_spec()
        console.print(Panel(
            f"[bold]{config.mode}[/bold] on n={spec.n}, half_width={spec.half_width:g}, "
            f"center={spec.center:g} (h = {spec.h:.4g})\n"
            f"[dim]Output: {config.output_dir}  Threads: {config.threads}[/dim]",
            title="🧮 qcvar run"
        ))
        with RunSession(config.output_dir, config.mode) as session:
            session.record(grid={'n': spec.n, 'half_width': spec.half_width,
                                 'center': [spec.center.real, spec.center.imag]})
            try:
                with scipy.fft.set_workers(config.threads):
                    plan = make_plan(spec)
                    self.pipelines[config.mode](config, plan, session)
            except QcvarError as e:
                partial = e.details.get('reports')
                if partial:
                    session.write('run_log.csv', lambda p: reports.write_run_log(p, partial))
                session.record(error=str(e))
                session.finish(status='failed')
                raise
            session.finish()
            session.show()
            return session.summary

    # -- pipelines --

    def _solver_args(self, config: RunConfig):
        solver = config.sections['solver']
        return float(solver['tol']), int(solver['max_terms'])

    def _coefficient(self, config: RunConfig, spec):
        return Coefficient(self.config_manager.build_coefficient(config.sections['coefficient'],
                                                                 spec, "coefficient"))

    def _run_solve(self, config: RunConfig, plan, session: RunSession):
        tol, max_terms = self._solver_args(config)
        with console.status("Solving the Beltrami equation..."):
            sol = solve(plan, self._coefficient(config, plan.spec), tol, max_terms)
        field_io.save_solution(session.out_dir, sol)
        for name in ('mu.cfld', 'f.cfld', 'f_z.cfld', 'f_zbar.cfld', 'solution.json'):
            session.artifacts.append(session.path(name))
        session.record(**sol.scalars())
        console.print(f"[green]✅ Solved in {sol.neumann_terms} Neumann terms, "
                      f"residual {sol.residual:.3e}[/green]")

    def _run_variation_check(self, config: RunConfig, plan, session: RunSession):
        tol, max_terms = self._solver_args(config)
        coeff = self._coefficient(config, plan.spec)
        direction = self.config_manager.build_direction(config.sections['variation'], coeff.mu, plan.spec)
        epsilons = config.sections['variation']['epsilons']
        targets = self.config_manager.targets(config)
        with console.status(f"Re-solving for {len(epsilons)} values of epsilon..."):
            rows = finite_difference_variation(plan, coeff, direction, epsilons, targets,
                                               tol, max_terms)
        session.write('convergence.csv', lambda p: reports.write_convergence_table(p, rows))
        reports.show_convergence(rows)
        session.record(k_inf=direction.k_inf, error_ratios=reports.error_ratios(rows),
                       linearized_ratios=reports.error_ratios(rows, 'lin_err'))

    def _run_gateaux_check(self, config: RunConfig, plan, session: RunSession):
        tol, max_terms = self._solver_args(config)
        coeff = self._coefficient(config, plan.spec)
        direction = self.config_manager.build_direction(config.sections['variation'], coeff.mu, plan.spec)
        fn = self.config_manager.build_functional(config.sections['functional'])
        epsilons = config.sections['variation']['epsilons']
        with console.status("Checking the Gateaux derivative..."):
            sol = solve(plan, coeff, tol, max_terms)
            rows = gateaux_check(plan, fn, sol, direction, epsilons, tol, max_terms)
        session.write('gateaux.csv', lambda p: reports.write_gateaux_table(p, rows))
        reports.show_gateaux(rows)
        session.record(predicted=rows[0].predicted if rows else None,
                       linearized=rows[0].linearized if rows else None)

    def _run_extremal(self, config: RunConfig, plan, session: RunSession):
        tol, max_terms = self._solver_args(config)
        ext = config.sections['extremal']
        fam = self.config_manager.build_family(config.sections['constraints'], plan.spec)
        fn = self.config_manager.build_functional(config.sections['functional'])

        with console.status("Searching for a fixed point...") as status:
            sol, run_log = run_fixed_point(
                plan, fam, fn, theta=float(ext['theta']), tol=float(ext['tol']),
                max_iter=int(ext['max_iter']), solver_tol=tol, max_terms=max_terms,
                active_tol=float(ext['active_tol']), polish=bool(ext['polish']),
                on_report=lambda r: status.update(
                    f"Iteration {r.iteration}: step {r.step_change:.2e}, omega {r.omega_value:.8g}"),
            )
        session.write('run_log.csv', lambda p: reports.write_run_log(p, run_log))
        session.write('mu.cfld', lambda p: field_io.write_field(p, sol.coeff.mu))
        session.write('f.cfld', lambda p: field_io.write_field(p, sol.f))

        summary = self.extremal_checks(sol, fam, fn, ext)
        reports.show_checks(summary)
        session.record(iterations=len(run_log), final=asdict(run_log[-1]), checks=summary)
        if not all(check['passed'] for check in summary.values()):
            console.print("[yellow]⚠️  Fixed point reached but some necessary conditions fail.[/yellow]")

    def extremal_checks(self, sol, fam, fn, ext) -> Dict[str, Dict]:
        """Boundary, directional, normal and stationarity checks at a solved coefficient."""
        active_tol = float(ext['active_tol'])
        B = field_B(fn, sol, check=True)
        mu = sol.coeff.mu
        boundary = check_max_principle(mu, fam, B, active_tol, float(ext['tol_boundary']))
        directions = check_directions(mu, fam, B, int(ext['samples']), active_tol, float(ext['tol_dir']))
        normals = check_normal_inequality(mu, fam, B, active_tol, float(ext['tol_dir']))
        defect = l2_norm(stationarity_defect(mu, fam, sol, B, active_tol), sol.spec)
        fz_scale = float(np.abs(sol.f_z.values).max())
        summary = {
            'boundary_residual': {'value': boundary.max_distance, 'limit': float(ext['tol_boundary']),
                                  'passed': boundary.passed},
            'directional_min': {'value': directions.min_value,
                                'limit': -float(ext['tol_dir']) * directions.scale,
                                'passed': directions.passed},
            'normal_inequality': {'value': normals.min_value,
                                  'limit': -float(ext['tol_dir']) * normals.scale,
                                  'passed': normals.passed, 'max_skew': normals.max_skew,
                                  'tested': normals.tested, 'skipped': normals.skipped},
            'euler_defect': {'value': defect, 'limit': 1e-4 * fz_scale,
                             'passed': defect <= 1e-4 * fz_scale},
        }
        if not directions.passed:
            ascent = ascent_direction(mu, fam, B, active_tol)
            summary['ascent_derivative'] = {'value': gateaux_derivative(fn, sol, ascent),
                                            'limit': 0.0, 'passed': False}
        return summary
