"""
Discrete Cauchy and Beurling transforms
Both act on compactly supported fields through FFTs of the field zero-padded
to twice the grid size, so the slowly decaying 1/z kernel never wraps around.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .complex_field import ComplexField, GridSpec, require_support
from .error_handler import GridMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TransformPlan:
    """Precomputed frequency tables for one grid. Immutable and shareable."""

    spec: GridSpec
    cauchy_hat: np.ndarray
    beurling_multiplier: np.ndarray

    @property
    def padded_size(self) -> int:
        return self.cauchy_hat.shape[0]

    def check(self, f: ComplexField, what: str = "field"):
        if f.spec != self.spec:
            raise GridMismatchError(f"plan for {self.spec} cannot transform a field on {f.spec}")
        require_support(f, what)


def make_plan(spec: GridSpec) -> TransformPlan:
    """Build the Cauchy kernel spectrum and the Beurling multiplier for spec."""
    n, h = spec.n, spec.h
    size = 2 * n

    # Offsets d in [-n, n-1] stored at index d mod 2n
    offsets = np.fft.fftfreq(size, d=1.0 / size) * h
    dz = offsets[None, :] + 1j * offsets[:, None]
    kernel = np.zeros((size, size), dtype=np.complex128)
    nonzero = dz != 0
    # Center cell: the cell average of 1/(pi z) over a centered square is 0 by symmetry
    kernel[nonzero] = h * h / (np.pi * dz[nonzero])
    kernel[n, :] = 0.0
    kernel[:, n] = 0.0
    cauchy_hat = scipy.fft.fft2(kernel)

    xi = np.fft.fftfreq(size)
    xi_c = xi[None, :] + 1j * xi[:, None]
    multiplier = np.zeros((size, size), dtype=np.complex128)
    nz = xi_c != 0
    multiplier[nz] = np.conj(xi_c[nz]) / xi_c[nz]

    for table in (cauchy_hat, multiplier):
        table.flags.writeable = False
    logger.debug("transform plan for n=%d (padded %d)", n, size)
    return TransformPlan(spec, cauchy_hat, multiplier)


def _padded(plan: TransformPlan, values: np.ndarray) -> np.ndarray:
    n = plan.spec.n
    buf = np.zeros((plan.padded_size, plan.padded_size), dtype=np.complex128)
    buf[:n, :n] = values
    return buf


def cauchy_transform(plan: TransformPlan, h: ComplexField) -> ComplexField:
    """T h(zeta) = (1/pi) * integral of h(z) / (zeta - z) dm_z."""
    plan.check(h, "Cauchy transform input")
    n = plan.spec.n
    spectrum = scipy.fft.fft2(_padded(plan, h.values))
    out = scipy.fft.ifft2(spectrum * plan.cauchy_hat)[:n, :n]
    return ComplexField(plan.spec, out)


def beurling_padded(plan: TransformPlan, h: ComplexField) -> np.ndarray:
    """Beurling transform on the full zero-padded torus (2n x 2n samples)."""
    plan.check(h, "Beurling transform input")
    spectrum = scipy.fft.fft2(_padded(plan, h.values))
    return scipy.fft.ifft2(spectrum * plan.beurling_multiplier)


def beurling_transform(plan: TransformPlan, h: ComplexField) -> ComplexField:
    """S h = d/dz T h, as the Fourier multiplier conj(xi)/xi."""
    n = plan.spec.n
    return ComplexField(plan.spec, beurling_padded(plan, h)[:n, :n])


def padded_l2_norm(plan: TransformPlan, values: np.ndarray) -> float:
    """Discrete L2 norm of a padded or unpadded array on the plan's grid spacing."""
    return float(plan.spec.h * np.sqrt(np.sum(np.abs(values) ** 2)))
