"""
Named coefficient and constraint presets
Closed-form Beltrami coefficients used by run configurations and tests, the
closed-form maps that solve them where one is known, and constant constraint
families supported on a disk.
"""

import logging
from typing import Callable, Dict, Optional

import numpy as np

from .complex_field import ComplexField, GridSpec, make_field
from .constraint_sets import DiskFamily, PolygonFamily
from .error_handler import ConfigurationError

logger = logging.getLogger(__name__)


def zero(spec: GridSpec) -> ComplexField:
    return make_field(spec, lambda z: np.zeros_like(z))


def radial_stretch(spec: GridSpec, K: float = 1.5, radius: float = 1.0) -> ComplexField:
    """mu = ((K-1)/(K+1)) z / conj(z) on |z| < radius, 0 outside and at z = 0."""
    if K < 1:
        raise ConfigurationError(f"radial_stretch needs K >= 1, got {K}")
    a = (K - 1.0) / (K + 1.0)

    def generator(z):
        r = np.abs(z)
        safe = np.where(r > 0, z, 1.0)
        return np.where((r < radius) & (r > 0), a * safe / np.conj(safe), 0.0)

    return make_field(spec, generator)


def radial_stretch_map(z: np.ndarray, K: float = 1.5, radius: float = 1.0) -> np.ndarray:
    """The normalized solution for radial_stretch with radius 1: z |z|^(K-1) inside, z outside."""
    if radius != 1.0:
        raise ValueError("the closed form is normalized for the unit disk only")
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    return np.where(r < 1.0, z * r ** (K - 1.0), z)


def radial_stretch_derivatives(z: np.ndarray, K: float = 1.5):
    """(f_z, f_zbar) of radial_stretch_map inside the unit disk, (1, 0) outside."""
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    inside = r < 1.0
    safe = np.where(r > 0, z, 1.0)
    f_z = np.where(inside, 0.5 * (K + 1.0) * r ** (K - 1.0), 1.0)
    f_zbar = np.where(inside & (r > 0),
                      0.5 * (K - 1.0) * r ** (K - 1.0) * safe / np.conj(safe), 0.0)
    return f_z, f_zbar


def disk_indicator(spec: GridSpec, k: float = 0.3, radius: float = 1.0,
                   center: complex = 0.0) -> ComplexField:
    """mu = k on |z - center| < radius, 0 outside."""
    return make_field(spec, lambda z: np.where(np.abs(z - center) < radius, complex(k), 0.0))


def gaussian_bump(spec: GridSpec, amplitude: float = 0.2, width: float = 0.3,
                  center: complex = 0.0, cutoff: float = 1.5) -> ComplexField:
    """A smooth bump truncated at |z - center| = cutoff."""
    def generator(z):
        d = np.abs(z - center)
        return np.where(d < cutoff, amplitude * np.exp(-(d / width) ** 2), 0.0)

    return make_field(spec, generator)


def disk_support(spec: GridSpec, radius: float = 1.0, center: complex = 0.0) -> np.ndarray:
    return np.abs(spec.z - center) < radius


PRESETS: Dict[str, Callable[..., ComplexField]] = {
    'zero': zero,
    'radial_stretch': radial_stretch,
    'disk_indicator': disk_indicator,
    'gaussian_bump': gaussian_bump,
}

PRESET_PARAMETERS: Dict[str, tuple] = {
    'zero': (),
    'radial_stretch': ('K', 'radius'),
    'disk_indicator': ('k', 'radius', 'center'),
    'gaussian_bump': ('amplitude', 'width', 'center', 'cutoff'),
}


def get_preset(name: str, spec: GridSpec, variables: Optional[Dict] = None) -> ComplexField:
    """Build a preset coefficient by name with keyword parameters."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown coefficient preset '{name}' (known: {', '.join(PRESETS)})")
    variables = dict(variables or {})
    unknown = set(variables) - set(PRESET_PARAMETERS[name])
    if unknown:
        raise ConfigurationError(f"preset '{name}' does not take {', '.join(sorted(unknown))}")
    logger.debug("preset %s %s", name, variables)
    return PRESETS[name](spec, **variables)


def list_presets():
    return list(PRESETS.keys())


def disk_constraint(spec: GridSpec, center: complex = 0.0, radius: float = 0.3,
                    support_radius: float = 1.0) -> DiskFamily:
    """The disk |nu - center| <= radius on |z| < support_radius, the point {0} elsewhere."""
    return DiskFamily.constant(spec, center, radius, disk_support(spec, support_radius))


def polygon_constraint(spec: GridSpec, vertices, support_radius: float = 1.0) -> PolygonFamily:
    return PolygonFamily.constant(spec, vertices, disk_support(spec, support_radius))
