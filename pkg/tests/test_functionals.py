import logging

import numpy as np
import pytest

from core.coefficients import disk_constraint, disk_indicator, polygon_constraint, zero
from core.complex_field import ComplexField, l2_norm
from core.constraint_sets import DiskFamily
from core.error_handler import (
    ConfigurationError, ConstraintError, ConvergenceError, DegeneracyError,
    ExtremalConvergenceError, InadmissibleDirectionError,
)
from core.functionals import (
    Functional, active_cells, ascent_direction, check_directions, check_max_principle,
    check_normal_inequality, euler_defect, evaluate, field_A, field_B, gateaux_check, gateaux_derivative, is_degenerate,
    run_fixed_point, stationarity_defect,
)
from core.variation_engine import make_direction

RE_F_AT_2 = Functional([(2.0, 1.0)])


@pytest.fixture
def unit_B(spec64):
    return ComplexField(spec64, np.ones(spec64.shape))


@pytest.fixture
def disk_everywhere(spec64):
    return DiskFamily.constant(spec64, 0.0, 0.3)


@pytest.mark.parametrize("atoms, sense", [
    ([], 'max'),
    ([(2.0, 1.0), (2.0, 0.5)], 'max'),
    ([(np.inf, 1.0)], 'max'),
    ([(2.0, 1.0)], 'sideways'),
])
def test_functional_validation(atoms, sense):
    with pytest.raises(ConfigurationError):
        Functional(atoms, sense)


def test_atom_at_normalization_point_warns(caplog):
    with caplog.at_level(logging.WARNING):
        Functional([(1.0, 1.0), (2.0, 1.0)])
    assert "normalization point" in caplog.text


def test_evaluate_on_identity(identity64):
    assert evaluate(RE_F_AT_2, identity64) == pytest.approx(2.0, abs=1e-12)
    assert evaluate(Functional([(2.0, 1.0)], 'min'), identity64) == pytest.approx(-2.0, abs=1e-12)
    assert evaluate(Functional([(-1 + 1j, 1j)]), identity64) == pytest.approx(-1.0, abs=1e-12)


def test_field_A_value(identity64):
    spec = identity64.spec
    A = field_A(RE_F_AT_2, identity64, np.full(spec.shape, -1.0 + 0j))
    assert np.allclose(A.values, -1.0 / (3.0 * np.pi), atol=1e-12)
    assert A.valid.all()


def test_field_B_masks_the_poles(identity64):
    B = field_B(RE_F_AT_2, identity64, check=True)
    spec = identity64.spec
    near = [spec.cell_of(p) for p in (0.0, 1.0, 2.0)]
    assert not any(B.valid[c] for c in near)
    assert B.valid[spec.cell_of(-2.0 + 2.0j)]


def test_zero_weights_are_degenerate(identity64):
    with pytest.raises(DegeneracyError):
        field_B(Functional([(2.0, 0.0)]), identity64, check=True)


def test_is_degenerate(spec64):
    values = np.ones(spec64.shape, dtype=complex)
    assert not is_degenerate(ComplexField(spec64, values))
    values[:10] = 0.0
    assert is_degenerate(ComplexField(spec64, values))
    assert is_degenerate(ComplexField(spec64, values, np.zeros(spec64.shape, dtype=bool)))


def test_active_cells(spec64):
    values = np.ones(spec64.shape, dtype=complex)
    values[0, 0] = 1e-13
    values[2, 2] = 1e-9
    mask = np.ones(spec64.shape, dtype=bool)
    mask[1, 1] = False
    active = active_cells(ComplexField(spec64, values, mask))
    assert not active[0, 0] and not active[1, 1]
    assert active[2, 2]
    assert active.sum() == 64 * 64 - 2


def test_max_principle(spec64, unit_B, disk_everywhere):
    at_center = check_max_principle(zero(spec64), disk_everywhere, unit_B)
    assert not at_center.passed
    assert at_center.max_distance == pytest.approx(0.3)
    on_boundary = ComplexField(spec64, np.full(spec64.shape, -0.3))
    report = check_max_principle(on_boundary, disk_everywhere, unit_B)
    assert report.passed and report.active == 64 * 64


def test_directions_detect_non_extremal_points(spec64, unit_B, disk_everywhere):
    report = check_directions(zero(spec64), disk_everywhere, unit_B, samples=8)
    assert not report.passed
    assert report.min_value == pytest.approx(-1.0)
    assert report.worst_direction == pytest.approx(-1.0)


def test_directions_pass_at_the_linear_minimizer(spec64, unit_B, disk_everywhere):
    mu = ComplexField(spec64, disk_everywhere.minimize_linear(unit_B.values))
    report = check_directions(mu, disk_everywhere, unit_B, samples=64)
    assert report.passed
    assert report.min_value > 0
    assert report.tested > 0


def test_directions_are_vacuous_on_point_sets(spec64, unit_B):
    fam = DiskFamily.constant(spec64, 0.0, 0.0)
    report = check_directions(zero(spec64), fam, unit_B)
    assert report.passed and report.tested == 0


def test_normal_inequality_at_the_linear_minimizer(spec64, disk_everywhere, rng):
    B = ComplexField(spec64, rng.standard_normal(spec64.shape) + 1j * rng.standard_normal(spec64.shape))
    mu = ComplexField(spec64, disk_everywhere.minimize_linear(B.values))
    report = check_normal_inequality(mu, disk_everywhere, B)
    assert report.passed
    assert report.tested == 64 * 64 and report.skipped == 0
    assert report.max_skew < 1e-12
    assert report.min_value == pytest.approx(B.abs().min(), rel=1e-9)


def test_normal_inequality_rejects_the_maximizer(spec64, unit_B, disk_everywhere):
    mu = ComplexField(spec64, np.full(spec64.shape, 0.3 + 0j))
    report = check_normal_inequality(mu, disk_everywhere, unit_B)
    assert not report.passed
    assert report.min_value == pytest.approx(-1.0)
    assert report.max_skew < 1e-12


def test_normal_inequality_skips_corners_and_interior(spec64, unit_B):
    square = polygon_constraint(spec64, [-0.3 - 0.3j, 0.3 - 0.3j, 0.3 + 0.3j, -0.3 + 0.3j],
                                support_radius=1.0)
    values = np.zeros(spec64.shape, dtype=complex)
    inside = ~square.point_cells()
    values[inside] = -0.3 + 0.3j
    edge = tuple(np.argwhere(inside)[0])
    values[edge] = -0.3
    report = check_normal_inequality(ComplexField(spec64, values), square, unit_B)
    assert report.tested == 1
    assert report.skipped == inside.sum() - 1
    assert report.min_value == pytest.approx(1.0)
    assert report.passed


def test_normal_inequality_is_vacuous_on_point_sets(spec64, unit_B):
    fam = DiskFamily.constant(spec64, 0.0, 0.0)
    report = check_normal_inequality(zero(spec64), fam, unit_B)
    assert report.passed and report.tested == 0 and report.skipped == 0


def test_euler_defect_vanishes_at_the_plug_in_point(identity64, disk_everywhere, rng):
    spec = identity64.spec
    B = ComplexField(spec, np.exp(2j * np.pi * rng.uniform(0, 1, spec.shape)))
    mu = ComplexField(spec, disk_everywhere.minimize_linear(B.values))
    defect = euler_defect(mu, disk_everywhere, identity64, B)
    assert defect.max() < 1e-14
    off = euler_defect(zero(spec), disk_everywhere, identity64, B)
    assert np.allclose(off, 0.3)


def test_euler_defect_needs_a_disk_family(identity64, unit_B):
    square = polygon_constraint(identity64.spec, [-0.2 - 0.2j, 0.2 - 0.2j, 0.2 + 0.2j, -0.2 + 0.2j])
    with pytest.raises(ConstraintError):
        euler_defect(zero(identity64.spec), square, identity64, unit_B)
    defect = stationarity_defect(zero(identity64.spec), square, identity64, unit_B)
    inside = ~square.point_cells()
    assert np.allclose(defect[inside], 0.2 * np.sqrt(2))


def test_euler_defect_rejects_vanishing_B(identity64, disk_everywhere):
    spec = identity64.spec
    with pytest.raises(DegeneracyError):
        euler_defect(zero(spec), disk_everywhere, identity64, ComplexField(spec, np.zeros(spec.shape)))


def test_ascent_direction_increases_the_functional(identity64):
    spec = identity64.spec
    fam = disk_constraint(spec, 0.0, 0.3)
    B = field_B(RE_F_AT_2, identity64)
    direction = ascent_direction(identity64.coeff.mu, fam, B)
    rate = gateaux_derivative(RE_F_AT_2, identity64, direction)
    active = active_cells(B) & ~fam.point_cells()
    assert rate > 1e-3
    assert rate == pytest.approx(0.3 * spec.h ** 2 * B.abs()[active].sum(), rel=1e-9)


def test_fixed_point_with_point_constraints(plan64):
    fam = DiskFamily.constant(plan64.spec, 0.0, 0.0)
    sol, reports = run_fixed_point(plan64, fam, RE_F_AT_2)
    assert reports[0].step_change == 0
    assert len(reports) == 2
    assert reports[-1].omega_value == pytest.approx(2.0, abs=1e-12)
    assert not sol.coeff.mu.values.any()


def test_fixed_point_on_a_disk_family(plan64):
    fam = disk_constraint(plan64.spec, 0.0, 0.3)
    seen = []
    sol, reports = run_fixed_point(plan64, fam, RE_F_AT_2, theta=0.5, tol=1e-7, max_iter=200,
                                   on_report=seen.append)
    assert seen == reports
    last = reports[-1]
    assert last.omega_value > 2.0
    assert last.boundary_residual < 1e-12
    assert last.euler_residual < 1e-4
    fam.check_membership(sol.coeff.mu.values, "extremal")


def test_fixed_point_reports_iteration_limit(plan64):
    fam = disk_constraint(plan64.spec, 0.0, 0.3)
    with pytest.raises(ExtremalConvergenceError) as info:
        run_fixed_point(plan64, fam, RE_F_AT_2, tol=1e-12, max_iter=1)
    assert len(info.value.details['reports']) == 1


def test_fixed_point_solver_failure_keeps_the_log(plan64):
    fam = disk_constraint(plan64.spec, 0.0, 0.3)
    with pytest.raises(ConvergenceError) as info:
        run_fixed_point(plan64, fam, RE_F_AT_2, max_terms=1)
    assert info.value.details['reports'] == []


def test_fixed_point_rejects_bad_damping(plan64):
    fam = disk_constraint(plan64.spec, 0.0, 0.3)
    with pytest.raises(ConfigurationError):
        run_fixed_point(plan64, fam, RE_F_AT_2, theta=1.5)


def test_gateaux_check_on_identity(plan64, identity64):
    spec = plan64.spec
    direction = make_direction(zero(spec), disk_indicator(spec, k=0.1))
    rows = gateaux_check(plan64, RE_F_AT_2, identity64, direction, [0.2, 0.1, 0.05])
    errors = [r.lin_err for r in rows]
    assert all(1.5 <= a / b <= 2.5 for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 0.01
    assert rows[0].predicted < 0
    with pytest.raises(InadmissibleDirectionError):
        gateaux_check(plan64, RE_F_AT_2, identity64, direction, [0.6])


def test_fixed_point_does_not_depend_on_damping(plan64):
    fam = disk_constraint(plan64.spec, 0.0, 0.3)
    damped, slow = run_fixed_point(plan64, fam, RE_F_AT_2, theta=0.5, tol=1e-8, max_iter=200)
    full, fast = run_fixed_point(plan64, fam, RE_F_AT_2, theta=1.0, tol=1e-8, max_iter=200)
    assert len(fast) <= len(slow)
    assert l2_norm(damped.coeff.mu.values - full.coeff.mu.values, plan64.spec) <= 1e-6
    assert fast[-1].omega_value == pytest.approx(slow[-1].omega_value, rel=1e-9)
