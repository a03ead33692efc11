"""
First-order variations of normalized solutions
Given a solution with coefficient mu and an admissible nu, builds the
direction kappa, the varied coefficient mu_eps = (1-eps) mu + eps nu, the
series kappa_eps, the kernel phi and the variation field V with
f_eps(zeta) ~ f(zeta) + eps V(zeta), and checks V against re-solves.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .beltrami_solver import Coefficient, Solution, solve
from .complex_field import ComplexField, interpolate, l2_norm
from .constraint_sets import ConstraintFamily
from .cz_transforms import TransformPlan, beurling_transform, cauchy_transform
from .error_handler import (
    ConvergenceError, GridMismatchError, InadmissibleDirectionError, RegularityError, SingularityError,
)

logger = logging.getLogger(__name__)

EPS_MAX = 0.5
POLE_TOL = 1e-14
MASK_FACTOR = 3.0
COMPOSITION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class VariationDirection:
    mu: ComplexField
    nu: ComplexField
    kappa: ComplexField
    k_inf: float


def make_direction(mu: ComplexField, nu: ComplexField,
                   family: Optional[ConstraintFamily] = None) -> VariationDirection:
    """kappa = (nu - mu) / (1 - |mu|^2); requires sup |kappa| < 1."""
    if mu.spec != nu.spec:
        raise GridMismatchError("mu and nu live on different grids")
    if (mu.abs() >= 1).any():
        raise InadmissibleDirectionError("|mu| must stay below 1")
    kappa = (nu.values - mu.values) / (1.0 - np.abs(mu.values) ** 2)
    k_inf = float(np.abs(kappa).max())
    if k_inf >= 1.0:
        raise InadmissibleDirectionError(
            f"sup |kappa| = {k_inf:.6g} is not inside the open unit ball",
            {'k_inf': k_inf}
        )
    if family is not None:
        family.check_membership(mu.values, "mu")
        family.check_membership(nu.values, "nu")
    return VariationDirection(mu, nu, ComplexField(mu.spec, kappa), k_inf)


def _check_eps(eps: float):
    if not 0.0 <= eps <= EPS_MAX:
        raise InadmissibleDirectionError(f"epsilon {eps} is outside [0, 1/2]")


def mu_epsilon(direction: VariationDirection, eps: float) -> ComplexField:
    """(1 - eps) mu + eps nu."""
    _check_eps(eps)
    if eps == 0:
        return direction.mu
    return ComplexField(direction.mu.spec,
                        (1.0 - eps) * direction.mu.values + eps * direction.nu.values)


def kappa_epsilon(direction: VariationDirection, eps: float,
                  terms: int = 0) -> Tuple[ComplexField, Optional[ComplexField]]:
    """
    Closed form eps*kappa / (1 - eps*kappa*conj(mu)), and when terms > 0 the
    truncated series sum_{m<=terms} eps*kappa*(eps*kappa*conj(mu))^m.
    """
    _check_eps(eps)
    ek = eps * direction.kappa.values
    ratio = ek * np.conj(direction.mu.values)
    closed = ComplexField(direction.mu.spec, ek / (1.0 - ratio))
    if terms <= 0:
        return closed, None
    acc = np.zeros_like(ek)
    power = np.ones_like(ek)
    for _ in range(terms + 1):
        acc += ek * power
        power = power * ratio
    return closed, ComplexField(direction.mu.spec, acc)


def kappa_epsilon_bound(eps: float, k: float) -> float:
    """eps k / (1 - eps k)."""
    return eps * k / (1.0 - eps * k)


def neumann_bound(k: float) -> float:
    """k / (2 - k), the bound on |kappa_eps| over eps in [0, 1/2]."""
    return k / (2.0 - k)


def phi_values(w: np.ndarray, w_prime: complex) -> np.ndarray:
    return (1.0 / (w - w_prime)) * (w_prime / w) * ((w_prime - 1.0) / (w - 1.0))


def kernel_phi(w: complex, w_prime: complex) -> complex:
    """phi(w, w') = 1/(w - w') * w'/w * (w' - 1)/(w - 1)."""
    w, w_prime = complex(w), complex(w_prime)
    for pole in (w_prime, 0.0, 1.0):
        if abs(w - pole) <= POLE_TOL:
            raise SingularityError(f"phi({w}, {w_prime}) is evaluated at its pole {pole}")
    return complex(phi_values(np.complex128(w), w_prime))


def pole_mask(w: np.ndarray, w_prime: complex, radius: float) -> np.ndarray:
    """True where w is at least radius away from w', 0 and 1."""
    return ((np.abs(w - w_prime) >= radius) & (np.abs(w) >= radius) & (np.abs(w - 1.0) >= radius))


def mask_radius(sol: Solution, factor: float = MASK_FACTOR) -> float:
    return factor * sol.spec.h * float(np.abs(sol.f_z.values).max())


def variation_field(sol: Solution, direction: VariationDirection, targets: Sequence[complex],
                    workers: int = 1) -> np.ndarray:
    """
    V(zeta) = -(1/pi) sum over cells of (nu - mu) phi(f(z), f(zeta)) f_z^2 h^2,
    skipping cells whose image is within 3 h max|f_z| of f(zeta), 0 or 1.
    """
    if direction.mu.spec != sol.spec:
        raise GridMismatchError("direction and solution live on different grids")
    spec = sol.spec
    targets = np.atleast_1d(np.asarray(targets, dtype=np.complex128))
    images = interpolate(sol.f, targets)

    diff = direction.nu.values - direction.mu.values
    support = diff != 0
    w = sol.f.values[support]
    weight = diff[support] * sol.f_z.values[support] ** 2 * spec.h ** 2
    radius = mask_radius(sol)

    def one(w_prime: complex) -> complex:
        keep = pole_mask(w, w_prime, radius)
        if not keep.any():
            return 0j
        return complex(-np.sum(weight[keep] * phi_values(w[keep], w_prime)) / np.pi)

    if workers > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, images))
    else:
        values = [one(wp) for wp in images]
    return np.asarray(values, dtype=np.complex128)


def linearized_variation(plan: TransformPlan, sol: Solution, direction: VariationDirection,
                         targets: Sequence[complex], tol: float = 1e-10,
                         max_terms: int = 500) -> np.ndarray:
    """
    Derivative at eps = 0 of the discrete solution map along direction.

    Solves g = (nu - mu)(1 + S h) + mu S g by the same Neumann iteration as
    the solver, then differentiates the affine renormalization. The result
    differs from variation_field only by discretization error, and
    (f_eps - f)/eps approaches it at first order in eps on any grid.
    """
    if sol.density is None:
        raise ValueError("solution carries no Neumann density; solve it again before linearizing")
    if direction.mu.spec != sol.spec or plan.spec != sol.spec:
        raise GridMismatchError("direction, plan and solution must share one grid")
    spec = sol.spec
    mu = sol.coeff.mu.values
    F_z = 1.0 + beurling_transform(plan, sol.density).values
    rhs = (direction.nu.values - direction.mu.values) * F_z

    targets = np.atleast_1d(np.asarray(targets, dtype=np.complex128))
    target = tol * l2_norm(rhs, spec)
    if target == 0.0:
        return np.zeros(targets.shape, dtype=np.complex128)

    g = ComplexField(spec, rhs)
    for terms in range(1, max_terms + 1):
        g_next = ComplexField(spec, rhs + mu * beurling_transform(plan, g).values)
        delta = l2_norm(g_next.values - g.values, spec)
        g = g_next
        if delta <= target:
            break
    else:
        raise ConvergenceError(f"tangent Neumann series did not converge in {max_terms} terms",
                               {'last_increment': delta})
    logger.debug("tangent solve: %d Neumann terms", terms)

    dF = cauchy_transform(plan, g)
    d0, d1 = interpolate(dF, [0.0, 1.0])
    d_t = interpolate(dF, targets)
    return (d_t - d0 - sol.value_at(targets) * (d1 - d0)) / sol.scale


@dataclass(frozen=True)
class VariationRow:
    epsilon: float
    zeta: complex
    fd: complex
    v: complex
    v_lin: Optional[complex] = None

    @property
    def abs_err(self) -> float:
        return abs(self.fd - self.v)

    @property
    def lin_err(self) -> Optional[float]:
        return None if self.v_lin is None else abs(self.fd - self.v_lin)


def finite_difference_variation(plan: TransformPlan, coeff: Coefficient,
                                direction: VariationDirection, epsilons: Sequence[float],
                                targets: Sequence[complex], tol: float = 1e-10,
                                max_terms: int = 500,
                                base: Optional[Solution] = None) -> List[VariationRow]:
    """
    Re-solve with mu_eps for each eps and compare (f_eps - f)/eps against V,
    and against the linearized variation when the base solution has its density.
    """
    eps_list = [float(e) for e in epsilons]
    for e in eps_list:
        if not 0.0 < e <= EPS_MAX:
            raise InadmissibleDirectionError(f"epsilon {e} is outside (0, 1/2]")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InadmissibleDirectionError("epsilons must be strictly decreasing")

    sol = base if base is not None else solve(plan, coeff, tol, max_terms)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.complex128))
    f_at = sol.value_at(targets)
    V = variation_field(sol, direction, targets)
    V_lin = (linearized_variation(plan, sol, direction, targets, tol, max_terms)
             if sol.density is not None else [None] * len(targets))

    rows: List[VariationRow] = []
    for eps in eps_list:
        varied = solve(plan, Coefficient(mu_epsilon(direction, eps)), tol, max_terms)
        D = (varied.value_at(targets) - f_at) / eps
        for zeta, d, v, v_lin in zip(targets, D, V, V_lin):
            rows.append(VariationRow(eps, complex(zeta), complex(d), complex(v),
                                     None if v_lin is None else complex(v_lin)))
        logger.info("eps=%g: max |D - V| = %.3e", eps, float(np.max(np.abs(D - V))))
    return rows


def gamma_along_f(direction: VariationDirection, eps: float, sol: Solution) -> ComplexField:
    """gamma_eps o f = kappa_eps * f_z / conj(f_z)."""
    f_z = _regular_fz(sol)
    closed, _ = kappa_epsilon(direction, eps)
    return ComplexField(sol.spec, closed.values * f_z / np.conj(f_z))


def composed_characteristic(gamma: ComplexField, sol: Solution,
                            expected: Optional[ComplexField] = None) -> ComplexField:
    """
    Characteristic of g o f from that of g sampled along f:
    (mu + r gamma) / (1 + conj(mu) r gamma) with r = conj(f_z)/f_z.

    When expected is given (normally mu_epsilon), the result must agree with
    it to 1e-10 per cell.
    """
    f_z = _regular_fz(sol)
    mu = sol.coeff.mu.values
    rotated = np.conj(f_z) / f_z * gamma.values
    out = (mu + rotated) / (1.0 + np.conj(mu) * rotated)
    result = ComplexField(sol.spec, out)
    if expected is not None:
        gap = float(np.abs(out - expected.values).max())
        if gap > COMPOSITION_TOL:
            raise RegularityError(f"composed characteristic differs from mu_eps by {gap:.3e}")
    return result


def _regular_fz(sol: Solution) -> np.ndarray:
    f_z = sol.f_z.values
    small = np.abs(f_z) < 1e-12
    if small.any():
        raise RegularityError(f"|f_z| < 1e-12 at {int(small.sum())} cells",
                              {'cells': np.argwhere(small).tolist()})
    return f_z
