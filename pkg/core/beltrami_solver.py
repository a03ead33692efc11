"""
Normalized regular solutions of the Beltrami equation f_zbar = mu * f_z
The principal solution z + T h is built from the Neumann fixed point
h = mu * (1 + S h) and then renormalized affinely so that f(0)=0, f(1)=1.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .complex_field import (
    ComplexField, GridSpec, fd_derivatives, interpolate, l2_norm, require_support,
)
from .cz_transforms import TransformPlan, beurling_transform, cauchy_transform
from .error_handler import (
    CoefficientError, ConvergenceError, GridMismatchError, NormalizationError,
    RegularityError, format_cells,
)

logger = logging.getLogger(__name__)

K_SUP_LIMIT = 1.0 - 1e-6
NORMALIZATION_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Coefficient:
    """A compactly supported Beltrami coefficient with sup |mu| < 1."""

    mu: ComplexField
    k_sup: float = field(init=False)

    def __post_init__(self):
        modulus = self.mu.abs()
        k_sup = float(modulus.max()) if modulus.size else 0.0
        if k_sup >= 1.0:
            cells = np.argwhere(modulus >= 1.0)
            raise CoefficientError(
                f"|mu| >= 1 at cells {format_cells(cells)} (k_sup = {k_sup:.6g})",
                {'cells': cells.tolist(), 'k_sup': k_sup}
            )
        if k_sup > K_SUP_LIMIT:
            raise CoefficientError(f"k_sup = {k_sup:.10f} exceeds the accepted limit {K_SUP_LIMIT}",
                                   {'k_sup': k_sup})
        require_support(self.mu, "coefficient")
        object.__setattr__(self, 'k_sup', k_sup)

    @property
    def spec(self) -> GridSpec:
        return self.mu.spec


@dataclass(frozen=True, eq=False)
class Solution:
    """A solved normalized map with its Wirtinger derivatives.

    density is the Neumann fixed point h with f = (z + T h - F(0)) / scale;
    solutions read back from disk do not carry it.
    """

    coeff: Coefficient
    f: ComplexField
    f_z: ComplexField
    f_zbar: ComplexField
    neumann_terms: int
    residual: float
    history: Tuple[float, ...] = ()
    density: Optional[ComplexField] = None
    scale: complex = 1.0

    @property
    def spec(self) -> GridSpec:
        return self.f.spec

    def jacobian(self) -> np.ndarray:
        return np.abs(self.f_z.values) ** 2 - np.abs(self.f_zbar.values) ** 2

    def value_at(self, points) -> np.ndarray:
        return interpolate(self.f, points)

    def scalars(self) -> dict:
        return {
            'k_sup': self.coeff.k_sup,
            'neumann_terms': self.neumann_terms,
            'residual': self.residual,
            'min_jacobian': float(self.jacobian()[self.spec.interior_mask()].min()),
        }


def solve(plan: TransformPlan, coeff: Coefficient, tol: float = 1e-10,
          max_terms: int = 500) -> Solution:
    """
    Solve f_zbar = mu f_z for the normalized principal solution.

    Raises ConvergenceError if the Neumann increments stay above
    tol * ||mu|| after max_terms terms.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if coeff.spec != plan.spec:
        raise GridMismatchError(f"coefficient on {coeff.spec} does not match plan on {plan.spec}")

    spec = plan.spec
    mu = coeff.mu.values
    mu_norm = l2_norm(mu, spec)
    target = tol * mu_norm

    h_cur = coeff.mu
    history: List[float] = []
    terms = 0
    converged = False
    for terms in range(1, max_terms + 1):
        h_next = ComplexField(spec, mu * (1.0 + beurling_transform(plan, h_cur).values))
        delta = l2_norm(h_next.values - h_cur.values, spec)
        history.append(delta)
        h_cur = h_next
        logger.debug("Neumann term %d: |dh| = %.3e", terms, delta)
        if delta <= target:
            converged = True
            break
        if len(history) >= 3 and history[-1] > 0.99 * history[-2]:
            logger.warning("slow Neumann contraction at term %d (ratio %.4f, k_sup %.6f)",
                           terms, history[-1] / history[-2], coeff.k_sup)

    if not converged:
        raise ConvergenceError(
            f"Neumann series did not converge in {max_terms} terms "
            f"(last increment {history[-1]:.3e}, target {target:.3e})",
            {'history': history}
        )

    f_raw = spec.z + cauchy_transform(plan, h_cur).values
    at_0, at_1 = interpolate(f_raw, [0.0, 1.0], spec)
    scale = at_1 - at_0
    if abs(scale) < NORMALIZATION_FLOOR:
        raise NormalizationError(f"|f(1) - f(0)| = {abs(scale):.3e} is too small to normalize")
    f = ComplexField(spec, (f_raw - at_0) / scale)
    f_z, f_zbar = fd_derivatives(f)

    interior = spec.interior_mask()
    residual = l2_norm(f_zbar.values - mu * f_z.values, spec, interior)

    jac = np.abs(f_z.values) ** 2 - np.abs(f_zbar.values) ** 2
    bad = (jac <= 0) & interior
    if bad.any():
        cells = np.argwhere(bad)
        raise RegularityError(
            f"non-positive Jacobian at cells {format_cells(cells)}",
            {'cells': cells.tolist()}
        )

    logger.info("solved n=%d: %d Neumann terms, Beltrami residual %.3e", spec.n, terms, residual)
    return Solution(coeff, f, f_z, f_zbar, terms, residual, tuple(history), h_cur, complex(scale))


def dilatation_field(coeff: Coefficient) -> np.ndarray:
    """K_mu = (1 + |mu|) / (1 - |mu|) per cell."""
    modulus = coeff.mu.abs()
    return (1.0 + modulus) / (1.0 - modulus)


def characteristic(f_z: ComplexField, f_zbar: ComplexField) -> ComplexField:
    """mu_f = f_zbar / f_z where f_z != 0, and 0 where f_z vanishes."""
    den = f_z.values
    out = np.zeros_like(den)
    nz = den != 0
    out[nz] = f_zbar.values[nz] / den[nz]
    return ComplexField(f_z.spec, out)


@dataclass(frozen=True, eq=False)
class OuterMap:
    """An outer map g sampled along an inner map f: g o f and its derivatives at f."""

    values: ComplexField
    g_w: ComplexField
    g_wbar: ComplexField


def sample_outer(g, g_w, g_wbar, inner: Solution) -> OuterMap:
    """Evaluate callables g, g_w, g_wbar at the samples of inner.f."""
    w = inner.f.values
    spec = inner.spec

    def _sample(func) -> ComplexField:
        out = np.asarray(func(w), dtype=np.complex128)
        return ComplexField(spec, np.broadcast_to(out, spec.shape))

    return OuterMap(_sample(g), _sample(g_w), _sample(g_wbar))


def chain_rule_check(outer: OuterMap, inner: Solution) -> float:
    """
    Discrete L2 defect of (g o f)_z - [(g_w o f) f_z + (g_wbar o f) conj(f_zbar)]
    over interior cells.
    """
    spec = inner.spec
    if outer.values.spec != spec:
        raise GridMismatchError("outer map and inner solution live on different grids")
    composed_z, _ = fd_derivatives(outer.values)
    predicted = outer.g_w.values * inner.f_z.values + outer.g_wbar.values * np.conj(inner.f_zbar.values)
    return l2_norm(composed_z.values - predicted, spec, spec.interior_mask())
