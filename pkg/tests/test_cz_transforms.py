import numpy as np
import pytest

from core.coefficients import disk_indicator, gaussian_bump
from core.complex_field import ComplexField, fd_derivatives, interpolate, make_field, zeros
from core.cz_transforms import (
    beurling_padded, beurling_transform, cauchy_transform, padded_l2_norm,
)
from core.error_handler import GridMismatchError, SupportError


def test_cauchy_transform_of_unit_disk(plan128):
    spec = plan128.spec
    T = cauchy_transform(plan128, disk_indicator(spec, k=1.0))
    inside = np.array([0.2 + 0.1j, -0.4 + 0.3j, 0.5j, 0.1 - 0.5j])
    outside = np.array([1.6, -1.7j, 2.0 + 1.0j, -2.5 + 0.5j])
    assert np.allclose(interpolate(T, inside), np.conj(inside), atol=5 * spec.h)
    assert np.allclose(interpolate(T, outside), 1.0 / outside, atol=5 * spec.h)


def test_cauchy_transform_is_linear(plan64, rng):
    spec = plan64.spec
    support = spec.support_mask()
    a = ComplexField(spec, np.where(support, rng.standard_normal(spec.shape), 0.0))
    b = disk_indicator(spec, k=0.5)
    lhs = cauchy_transform(plan64, a * 2.0 + b * 1j).values
    rhs = 2.0 * cauchy_transform(plan64, a).values + 1j * cauchy_transform(plan64, b).values
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_beurling_is_an_isometry_on_mean_zero_data(plan64, rng):
    spec = plan64.spec
    support = spec.support_mask()
    data = np.where(support, rng.standard_normal(spec.shape) + 1j * rng.standard_normal(spec.shape), 0.0)
    data[support] -= data[support].mean()
    h = ComplexField(spec, data)
    before = padded_l2_norm(plan64, h.values)
    after = padded_l2_norm(plan64, beurling_padded(plan64, h))
    assert after == pytest.approx(before, rel=1e-10)


def test_beurling_matches_derivative_of_cauchy(plan128):
    spec = plan128.spec
    bump = gaussian_bump(spec, amplitude=0.2, width=0.3)
    S = beurling_transform(plan128, bump).values
    T_z, _ = fd_derivatives(cauchy_transform(plan128, bump))
    region = np.abs(spec.z) < 1.0
    scale = np.abs(S[region]).max()
    assert np.abs(S[region] - T_z.values[region]).max() < 0.05 * scale


def test_transforms_of_zero(plan64):
    assert not cauchy_transform(plan64, zeros(plan64.spec)).values.any()
    assert not beurling_transform(plan64, zeros(plan64.spec)).values.any()


def test_plan_rejects_other_grids_and_support(plan64, spec128):
    with pytest.raises(GridMismatchError):
        cauchy_transform(plan64, zeros(spec128))
    outside = make_field(plan64.spec, lambda z: np.where(np.abs(z) > 3.5, 1.0, 0.0))
    with pytest.raises(SupportError):
        beurling_transform(plan64, outside)
