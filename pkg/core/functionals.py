"""
Gateaux-differentiable functionals and necessary conditions for extremals
A functional is a finite atomic measure: Omega(f) = Re sum_j c_j f(zeta_j).
From it come the fields A(w) and B(z) = A(f(z)) f_z^2, the boundary and
directional checks, the Euler equation defect for disk families, and a
damped fixed-point search for coefficients that satisfy them.

All conditions are stated for maximization; min functionals negate weights.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .beltrami_solver import Coefficient, Solution, solve
from .complex_field import ComplexField, interpolate, l2_norm
from .constraint_sets import CONE_TOL, ConstraintFamily, DiskFamily
from .cz_transforms import TransformPlan
from .error_handler import (
    ConfigurationError, ConstraintError, DegeneracyError, ExtremalConvergenceError,
    InadmissibleDirectionError, RegularityError, SolverError,
)
from .variation_engine import (
    VariationDirection, linearized_variation, make_direction, mask_radius, mu_epsilon, phi_values,
    pole_mask, variation_field,
)

logger = logging.getLogger(__name__)

ACTIVE_TOL = 1e-12
DEGENERACY_LEVEL = 1e-12
DEGENERACY_FRACTION = 0.01
FZ_FLOOR = 1e-12
OSCILLATION_RUN = 5
FORM_AGREEMENT = 1e-9


@dataclass(frozen=True)
class Atom:
    zeta: complex
    weight: complex


class Functional:
    """Omega(f) = Re sum_j c_j f(zeta_j) for a finite list of atoms."""

    def __init__(self, atoms: Sequence[Tuple[complex, complex]], sense: str = 'max'):
        if sense not in ('max', 'min'):
            raise ConfigurationError(f"functional sense must be 'max' or 'min', got '{sense}'")
        parsed = [a if isinstance(a, Atom) else Atom(complex(a[0]), complex(a[1])) for a in atoms]
        if not parsed:
            raise ConfigurationError("functional needs at least one atom")
        zetas = [a.zeta for a in parsed]
        if not all(np.isfinite(z) and np.isfinite(a.weight) for z, a in zip(zetas, parsed)):
            raise ConfigurationError("functional atoms must be finite")
        if len(set(zetas)) != len(zetas):
            raise ConfigurationError("functional atoms must sit at distinct points")
        for a in parsed:
            if a.zeta in (0, 1):
                logger.warning("atom at normalization point %g contributes zero derivative", a.zeta.real)
        self.atoms = tuple(parsed)
        self.sense = sense

    @property
    def zetas(self) -> np.ndarray:
        return np.array([a.zeta for a in self.atoms], dtype=np.complex128)

    @property
    def weights(self) -> np.ndarray:
        """Weights in the maximization convention."""
        w = np.array([a.weight for a in self.atoms], dtype=np.complex128)
        return -w if self.sense == 'min' else w

    def __repr__(self):
        body = ", ".join(f"({a.zeta:.4g}, {a.weight:.4g})" for a in self.atoms)
        return f"Functional[{self.sense}]({body})"


def evaluate(fn: Functional, sol: Solution) -> float:
    """Re sum_j c_j f(zeta_j), with f interpolated bilinearly."""
    return float(np.real(np.sum(fn.weights * interpolate(sol.f, fn.zetas))))


def gateaux_derivative(fn: Functional, sol: Solution, direction: VariationDirection) -> float:
    """Re sum_j c_j V(zeta_j): the first-order rate of Omega along direction."""
    V = variation_field(sol, direction, fn.zetas)
    return float(np.real(np.sum(fn.weights * V)))


def field_A(fn: Functional, sol: Solution, w, radius: Optional[float] = None) -> ComplexField:
    """
    A(w) = (1/pi) sum_j c_j phi(w, f(zeta_j)) at the points w (one per cell).
    Cells within radius of a pole of phi are masked.
    """
    spec = sol.spec
    points = w.values if isinstance(w, ComplexField) else np.asarray(w, dtype=np.complex128)
    if radius is None:
        radius = mask_radius(sol)
    images = interpolate(sol.f, fn.zetas)

    keep = np.ones(spec.shape, dtype=bool)
    total = np.zeros(spec.shape, dtype=np.complex128)
    for weight, image in zip(fn.weights, images):
        ok = pole_mask(points, image, radius)
        keep &= ok
        with np.errstate(divide='ignore', invalid='ignore'):
            total += np.where(ok, weight * phi_values(points, image), 0.0)
    return ComplexField(spec, total / np.pi, keep)


def is_degenerate(A: ComplexField) -> bool:
    """|A| <= 1e-12 max|A| on more than 1% of the unmasked cells."""
    valid = A.valid
    count = int(valid.sum())
    if count == 0:
        return True
    mag = A.abs()[valid]
    peak = mag.max()
    if peak == 0:
        return True
    return float((mag <= DEGENERACY_LEVEL * peak).sum()) > DEGENERACY_FRACTION * count


def require_nondegenerate(A: ComplexField):
    if is_degenerate(A):
        raise DegeneracyError("functional is degenerate: A vanishes on a set of positive measure",
                              {'peak': A.sup_norm()})


def field_B(fn: Functional, sol: Solution, check: bool = False) -> ComplexField:
    """B(z) = A(f(z)) f_z^2, masked at the poles of phi and where |f_z| < 1e-12."""
    A = field_A(fn, sol, sol.f)
    if check:
        require_nondegenerate(A)
    f_z = sol.f_z.values
    small = np.abs(f_z) < FZ_FLOOR
    if (small & sol.spec.interior_mask()).all():
        raise RegularityError("f_z vanishes on every interior cell")
    return ComplexField(sol.spec, A.values * f_z ** 2, A.valid & ~small)


def active_cells(B: ComplexField, tol: float = ACTIVE_TOL) -> np.ndarray:
    """Cells where |B| > tol * max|B| and B is not masked."""
    mag = B.abs()
    peak = mag[B.valid].max() if B.valid.any() else 0.0
    return B.valid & (mag > tol * peak)


@dataclass(frozen=True)
class BoundaryReport:
    max_distance: float
    mean_distance: float
    active: int
    passed: bool


def check_max_principle(mu: ComplexField, fam: ConstraintFamily, B: ComplexField,
                        tol: float = ACTIVE_TOL, tol_boundary: float = 1e-8) -> BoundaryReport:
    """Distance from mu(z) to the boundary of M(z) over active cells."""
    active = active_cells(B, tol)
    if not active.any():
        return BoundaryReport(0.0, 0.0, 0, True)
    dist = fam.boundary_distance(mu.values)[active]
    worst = float(dist.max())
    return BoundaryReport(worst, float(dist.mean()), int(active.sum()), worst <= tol_boundary)


@dataclass(frozen=True)
class DirectionReport:
    min_value: float
    worst_cell: Optional[Tuple[int, int]]
    worst_direction: Optional[complex]
    tested: int
    scale: float
    passed: bool


def check_directions(mu: ComplexField, fam: ConstraintFamily, B: ComplexField,
                     samples: int = 64, tol: float = ACTIVE_TOL,
                     tol_dir: float = 1e-6, cone_tol: float = CONE_TOL) -> DirectionReport:
    """
    min over active cells and sampled admissible omega of Re(omega * B(z)).

    A direction counts as admissible when mu + t omega stays in M(z) for some
    t > cone_tol. Passes iff the minimum is >= -tol_dir * max|B|; single-point
    sets have no admissible directions and pass vacuously.
    """
    if samples < 1:
        raise ConfigurationError("samples must be positive")
    active = active_cells(B, tol)
    scale = float(B.abs()[B.valid].max()) if B.valid.any() else 0.0
    best = np.inf
    worst_cell, worst_dir = None, None
    tested = 0
    for j in range(samples):
        omega = complex(np.exp(2j * np.pi * j / samples))
        admissible = active & (fam.ray_distances(mu.values, omega) > cone_tol)
        if not admissible.any():
            continue
        tested += int(admissible.sum())
        scores = np.where(admissible, np.real(omega * B.values), np.inf)
        idx = np.unravel_index(np.argmin(scores), scores.shape)
        if scores[idx] < best:
            best = float(scores[idx])
            worst_cell, worst_dir = (int(idx[0]), int(idx[1])), omega
    if tested == 0:
        return DirectionReport(0.0, None, None, 0, scale, True)
    return DirectionReport(best, worst_cell, worst_dir, tested, scale, best >= -tol_dir * scale)


@dataclass(frozen=True)
class NormalReport:
    min_value: float
    max_skew: float
    tested: int
    skipped: int
    scale: float
    passed: bool


def check_normal_inequality(mu: ComplexField, fam: ConstraintFamily, B: ComplexField,
                            tol: float = ACTIVE_TOL, tol_dir: float = 1e-6) -> NormalReport:
    """
    Re(n(z) B(z)) >= 0 for the inner normal n at smooth boundary points.

    Only active cells where mu sits on a smooth part of the boundary are
    tested; corners and non-boundary cells are counted in `skipped`, point
    sets are ignored. max_skew is max |Im(n B)| / |B|, which is zero when
    n is exactly conj(B)/|B|.
    """
    active = active_cells(B, tol)
    scale = float(B.abs()[B.valid].max()) if B.valid.any() else 0.0
    normals = fam.boundary_normals(mu.values)
    smooth = active & np.isfinite(normals)
    skipped = int((active & ~smooth & ~fam.point_cells()).sum())
    if not smooth.any():
        return NormalReport(0.0, 0.0, 0, skipped, scale, True)
    nb = normals[smooth] * B.values[smooth]
    worst = float(np.real(nb).min())
    skew = float((np.abs(np.imag(nb)) / np.abs(B.values[smooth])).max())
    return NormalReport(worst, skew, int(smooth.sum()), skipped, scale, worst >= -tol_dir * scale)


def euler_defect(mu: ComplexField, fam: ConstraintFamily, sol: Solution, B: ComplexField,
                 tol: float = ACTIVE_TOL) -> np.ndarray:
    """
    |f_zbar - c f_z + k (conj(A o f)/|A o f|) conj(f_z)| on active cells, 0 elsewhere.

    f_zbar is taken as mu * f_z; the equivalent form |mu - c + k conj(B)/|B|| |f_z|
    is computed alongside and must agree to 1e-9 relative.
    """
    if not isinstance(fam, DiskFamily):
        raise ConstraintError("the Euler equation is stated for disk families")
    active = active_cells(B, tol)
    if not B.valid.any() or B.sup_norm() == 0:
        raise DegeneracyError("B vanishes on every cell")
    out = np.zeros(sol.spec.shape)
    if not active.any():
        return out

    f_z = sol.f_z.values[active]
    b = B.values[active]
    m = mu.values[active]
    c = fam.c.values[active]
    k = fam.k[active]
    if (np.abs(b) == 0).any():
        raise DegeneracyError("|B| = 0 on an active cell")

    a_of_f = b / f_z ** 2
    first = np.abs(m * f_z - c * f_z + k * np.conj(a_of_f) / np.abs(a_of_f) * np.conj(f_z))
    second = np.abs(m - c + k * np.conj(b) / np.abs(b)) * np.abs(f_z)
    gap = np.abs(first - second)
    scale = np.maximum(np.maximum(first, second), np.abs(f_z))
    if (gap > FORM_AGREEMENT * scale).any():
        raise RegularityError(f"Euler defect forms disagree by {gap.max():.3e}")
    out[active] = second
    return out


def stationarity_defect(mu: ComplexField, fam: ConstraintFamily, sol: Solution,
                        B: ComplexField, tol: float = ACTIVE_TOL) -> np.ndarray:
    """Euler defect for disks; |mu - argmin_M Re(nu B)| |f_z| for other families."""
    if isinstance(fam, DiskFamily):
        return euler_defect(mu, fam, sol, B, tol)
    active = active_cells(B, tol)
    target = fam.minimize_linear(B.values)
    return np.where(active, np.abs(mu.values - target) * np.abs(sol.f_z.values), 0.0)


def ascent_target(mu: ComplexField, fam: ConstraintFamily, B: ComplexField,
                  tol: float = ACTIVE_TOL) -> np.ndarray:
    """argmin over M(z) of Re(nu B) on active cells, mu elsewhere."""
    return np.where(active_cells(B, tol), fam.minimize_linear(B.values), mu.values)


def ascent_direction(mu: ComplexField, fam: ConstraintFamily, B: ComplexField,
                     tol: float = ACTIVE_TOL) -> VariationDirection:
    """The steepest admissible first-order ascent direction from mu."""
    nu = ComplexField(mu.spec, ascent_target(mu, fam, B, tol))
    return make_direction(mu, nu, fam)


@dataclass(frozen=True)
class ExtremalReport:
    iteration: int
    omega_value: float
    boundary_residual: float
    euler_residual: float
    step_change: float


@dataclass
class _Run:
    reports: List[ExtremalReport] = field(default_factory=list)

    def fail(self, error: SolverError):
        error.details['reports'] = list(self.reports)
        return error


def _boundary_residual(mu: ComplexField, fam: ConstraintFamily, active: np.ndarray) -> float:
    if not active.any():
        return 0.0
    return float(fam.boundary_distance(mu.values)[active].max())


def run_fixed_point(plan: TransformPlan, fam: ConstraintFamily, fn: Functional,
                    theta: float = 0.5, tol: float = 1e-6, max_iter: int = 50,
                    solver_tol: float = 1e-10, max_terms: int = 500,
                    active_tol: float = ACTIVE_TOL, polish: bool = True,
                    on_report: Optional[Callable[[ExtremalReport], None]] = None
                    ) -> Tuple[Solution, List[ExtremalReport]]:
    """
    Damped iteration mu <- (1 - theta) mu + theta * argmin_M Re(nu B(mu)),
    started at an interior point of M (the centers c for disk families).

    After the step change drops to tol, one undamped step puts mu on the
    boundary of M(z) at active cells; its report carries the size of a
    further undamped step as step_change.
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigurationError(f"damping theta must lie in (0, 1], got {theta}")
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("fixed-point tol must be positive and max_iter at least 1")
    spec = plan.spec
    run = _Run()

    def _solve(values: np.ndarray) -> Solution:
        try:
            return solve(plan, Coefficient(ComplexField(spec, values)), solver_tol, max_terms)
        except SolverError as e:
            raise run.fail(e)

    def _record(iteration: int, sol: Solution, B: ComplexField, applied: np.ndarray,
                step: float):
        defect = stationarity_defect(sol.coeff.mu, fam, sol, B, active_tol)
        report = ExtremalReport(iteration, evaluate(fn, sol),
                                _boundary_residual(sol.coeff.mu, fam, applied),
                                l2_norm(defect, spec), step)
        if run.reports and report.omega_value < run.reports[-1].omega_value:
            logger.warning("functional decreased at iteration %d (%.10g -> %.10g)", iteration,
                           run.reports[-1].omega_value, report.omega_value)
        run.reports.append(report)
        logger.debug("iteration %d: omega %.10g, boundary %.3e, euler %.3e, step %.3e",
                     iteration, report.omega_value, report.boundary_residual,
                     report.euler_residual, report.step_change)
        if on_report:
            on_report(report)

    mu = fam.interior_point()
    fam.check_membership(mu, "initial coefficient")
    sol = _solve(mu)
    B = field_B(fn, sol, check=True)

    converged = False
    rising = 0
    iteration = 0
    for iteration in range(1, max_iter + 1):
        applied = active_cells(B, active_tol)
        target = np.where(applied, fam.minimize_linear(B.values), mu)
        new_mu = (1.0 - theta) * mu + theta * target
        step = l2_norm(new_mu - mu, spec)
        mu = new_mu
        sol = _solve(mu)
        B = field_B(fn, sol)
        previous = run.reports[-1].step_change if run.reports else None
        _record(iteration, sol, B, applied, step)

        if step <= tol:
            converged = True
            break
        rising = rising + 1 if previous is not None and step > previous else 0
        if rising >= OSCILLATION_RUN:
            raise ExtremalConvergenceError(
                f"step change increased {OSCILLATION_RUN} iterations in a row at iteration "
                f"{iteration}; try a smaller theta (now {theta})",
                {'reports': list(run.reports)}
            )

    if not converged:
        raise ExtremalConvergenceError(
            f"fixed point not reached in {max_iter} iterations "
            f"(last step {run.reports[-1].step_change:.3e}, tol {tol:.1e})",
            {'reports': list(run.reports)}
        )

    if polish:
        applied = active_cells(B, active_tol)
        mu = np.where(applied, fam.minimize_linear(B.values), mu)
        sol = _solve(mu)
        B = field_B(fn, sol)
        further = ascent_target(sol.coeff.mu, fam, B, active_tol)
        _record(iteration + 1, sol, B, applied, l2_norm(further - mu, spec))

    last = run.reports[-1]
    logger.info("fixed point after %d iterations: omega %.10g, boundary %.3e, euler %.3e",
                last.iteration, last.omega_value, last.boundary_residual, last.euler_residual)
    return sol, run.reports


@dataclass(frozen=True)
class GateauxRow:
    epsilon: float
    difference_quotient: float
    predicted: float
    linearized: Optional[float] = None

    @property
    def abs_err(self) -> float:
        return abs(self.difference_quotient - self.predicted)

    @property
    def lin_err(self) -> Optional[float]:
        return None if self.linearized is None else abs(self.difference_quotient - self.linearized)


def gateaux_check(plan: TransformPlan, fn: Functional, sol: Solution,
                  direction: VariationDirection, epsilons: Sequence[float],
                  tol: float = 1e-10, max_terms: int = 500) -> List[GateauxRow]:
    """Compare [Omega(f_eps) - Omega(f)]/eps (by re-solve) with Re sum c_j V(zeta_j)."""
    if any(not 0.0 < e <= 0.5 for e in epsilons):
        raise InadmissibleDirectionError("epsilons must lie in (0, 1/2]")
    predicted = gateaux_derivative(fn, sol, direction)
    linearized = None
    if sol.density is not None:
        V_lin = linearized_variation(plan, sol, direction, fn.zetas, tol, max_terms)
        linearized = float(np.real(np.sum(fn.weights * V_lin)))
    base = evaluate(fn, sol)
    rows = []
    for eps in epsilons:
        varied = solve(plan, Coefficient(mu_epsilon(direction, float(eps))), tol, max_terms)
        quotient = (evaluate(fn, varied) - base) / eps
        rows.append(GateauxRow(float(eps), quotient, predicted, linearized))
        logger.info("eps=%g: quotient %.6g, predicted %.6g", eps, quotient, predicted)
    return rows
