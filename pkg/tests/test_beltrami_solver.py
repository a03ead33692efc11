import numpy as np
import pytest

from core.beltrami_solver import (
    Coefficient, Solution, chain_rule_check, characteristic, dilatation_field, sample_outer, solve,
)
from core.coefficients import (
    disk_indicator, radial_stretch, radial_stretch_derivatives, radial_stretch_map, zero,
)
from core.complex_field import ComplexField, interpolate, l2_norm, make_field
from core.cz_transforms import cauchy_transform
from core.error_handler import CoefficientError, ConvergenceError, GridMismatchError, SupportError


def test_zero_coefficient_gives_identity(identity64):
    spec = identity64.spec
    assert np.abs(identity64.f.values - spec.z).max() < 1e-12
    assert identity64.neumann_terms == 1
    assert np.allclose(identity64.jacobian(), 1.0, atol=1e-10)
    assert identity64.scalars()['min_jacobian'] == pytest.approx(1.0, abs=1e-10)


def test_normalization(plan64):
    sol = solve(plan64, Coefficient(disk_indicator(plan64.spec, k=0.25, center=0.3j, radius=0.8)))
    assert np.allclose(sol.value_at([0.0, 1.0]), [0.0, 1.0], atol=1e-12)


@pytest.fixture(scope="module")
def stretched(plan128):
    return solve(plan128, Coefficient(radial_stretch(plan128.spec, K=1.5)))


def test_radial_stretch_matches_closed_form(stretched):
    spec = stretched.spec
    exact = radial_stretch_map(spec.z, K=1.5)
    err = np.abs(stretched.f.values - exact)[spec.interior_mask()]
    assert err.max() <= 2 * spec.h
    assert stretched.residual < 1.0


def test_radial_stretch_has_the_prescribed_characteristic(stretched):
    spec = stretched.spec
    mu_f = characteristic(stretched.f_z, stretched.f_zbar).values
    r = np.abs(spec.z)
    annulus = (r > 0.3) & (r < 0.7)
    assert np.median(np.abs(mu_f - stretched.coeff.mu.values)[annulus]) < 0.02


def test_neumann_history_contracts(stretched):
    history = np.array(stretched.history)
    assert history[-1] <= 1e-10 * l2_norm(stretched.coeff.mu)
    assert (history[1:] < history[:-1]).all()


def test_density_reproduces_the_map(plan128, stretched):
    spec = stretched.spec
    raw = spec.z + cauchy_transform(plan128, stretched.density).values
    at_0 = interpolate(raw, [0.0], spec)[0]
    assert np.allclose((raw - at_0) / stretched.scale, stretched.f.values, atol=1e-10)


def test_coefficient_must_stay_below_one(spec64):
    mu = disk_indicator(spec64, k=1.0)
    with pytest.raises(CoefficientError) as info:
        Coefficient(mu)
    assert info.value.details['k_sup'] == pytest.approx(1.0)


def test_coefficient_must_vanish_on_the_margin(spec64):
    values = np.zeros(spec64.shape, dtype=complex)
    values[0, 0] = 0.1
    with pytest.raises(SupportError):
        Coefficient(ComplexField(spec64, values))


def test_convergence_failure_carries_history(plan64):
    coeff = Coefficient(radial_stretch(plan64.spec, K=1.5))
    with pytest.raises(ConvergenceError) as info:
        solve(plan64, coeff, max_terms=1)
    assert len(info.value.details['history']) == 1


def test_solve_checks_grid_and_tolerance(plan64, spec128):
    with pytest.raises(GridMismatchError):
        solve(plan64, Coefficient(zero(spec128)))
    with pytest.raises(ValueError):
        solve(plan64, Coefficient(zero(plan64.spec)), tol=0.0)


def test_dilatation_field(spec64):
    K = dilatation_field(Coefficient(disk_indicator(spec64, k=0.5)))
    inside = np.abs(spec64.z) < 1.0
    assert np.allclose(K[inside], 3.0)
    assert np.allclose(K[~inside], 1.0)


def test_characteristic_where_f_z_vanishes(spec64):
    f_z = make_field(spec64, lambda z: np.where(z.real > 0, 1.0, 0.0))
    f_zbar = make_field(spec64, lambda z: 0.5 * np.ones_like(z))
    mu = characteristic(f_z, f_zbar).values
    right = spec64.z.real > 0
    assert np.allclose(mu[right], 0.5)
    assert not mu[~right].any()


def test_chain_rule_on_identity(identity64):
    outer = sample_outer(lambda w: w * w + 3 * np.conj(w), lambda w: 2 * w, lambda w: 3.0, identity64)
    assert chain_rule_check(outer, identity64) < 1e-9


def test_chain_rule_on_closed_form_stretch(spec128):
    z = spec128.z
    f_z, f_zbar = radial_stretch_derivatives(z, K=1.5)
    inner = Solution(Coefficient(radial_stretch(spec128, K=1.5)),
                     ComplexField(spec128, radial_stretch_map(z, K=1.5)),
                     ComplexField(spec128, f_z), ComplexField(spec128, f_zbar), 0, 0.0)
    outer = sample_outer(lambda w: w * w + 3 * np.conj(w), lambda w: 2 * w, lambda w: 3.0, inner)
    predicted = outer.g_w.values * f_z + 3.0 * np.conj(f_zbar)
    scale = l2_norm(predicted, spec128, spec128.interior_mask())
    assert chain_rule_check(outer, inner) < 0.05 * scale
