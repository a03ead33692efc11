"""
Sampled complex fields on a square grid
Grid geometry, pointwise construction, quadrature, finite differences and
bilinear lookups shared by the solver, transforms and variation code.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .error_handler import FieldError, GridMismatchError, SupportError, format_cells

logger = logging.getLogger(__name__)

Scalar = Union[complex, float, int]


@dataclass(frozen=True)
class GridSpec:
    """Square grid of n x n cells covering center +- half_width in x and y."""

    center: complex
    half_width: float
    n: int

    def __post_init__(self):
        object.__setattr__(self, 'center', complex(self.center))
        object.__setattr__(self, 'half_width', float(self.half_width))
        if not float(self.half_width) > 0:
            raise FieldError(f"half_width must be positive, got {self.half_width}")
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise FieldError(f"n must be an even integer >= 8, got {self.n}")
        object.__setattr__(self, 'n', int(self.n))
        for point in (0.0, 1.0):
            if not self.strictly_contains(point):
                raise FieldError(f"grid {self} does not contain the normalization point {point:g}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        """Offsets of cell centers from the grid center along one axis."""
        return -self.half_width + (np.arange(self.n) + 0.5) * self.h

    @cached_property
    def z(self) -> np.ndarray:
        """Cell-center coordinates, z[j, k] = x_k + i y_j."""
        z = (self.center.real + self.axis)[None, :] + 1j * (self.center.imag + self.axis)[:, None]
        z.flags.writeable = False
        return z

    def strictly_contains(self, point: complex) -> bool:
        d = complex(point) - self.center
        return abs(d.real) < self.half_width and abs(d.imag) < self.half_width

    def support_mask(self) -> np.ndarray:
        """Cells where compactly supported data may be nonzero."""
        d = self.z - self.center
        limit = 0.5 * self.half_width
        return (np.abs(d.real) <= limit) & (np.abs(d.imag) <= limit)

    def interior_mask(self) -> np.ndarray:
        """All cells except the outermost ring."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask

    def cell_of(self, point: complex) -> Tuple[int, int]:
        """Index (row, col) of the cell containing point."""
        d = complex(point) - self.center + complex(self.half_width, self.half_width)
        k = int(np.clip(np.floor(d.real / self.h), 0, self.n - 1))
        j = int(np.clip(np.floor(d.imag / self.h), 0, self.n - 1))
        return j, k

    def refined(self, factor: int = 2) -> 'GridSpec':
        return GridSpec(self.center, self.half_width, self.n * factor)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex samples at cell centers; optionally with a validity mask."""

    spec: GridSpec
    values: np.ndarray
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128, copy=True)
        if values.shape != self.spec.shape:
            raise FieldError(f"field has shape {values.shape}, grid expects {self.spec.shape}")
        mask = None
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool, copy=True)
            if mask.shape != self.spec.shape:
                raise FieldError(f"mask has shape {mask.shape}, grid expects {self.spec.shape}")
            values[~mask] = 0.0
            mask.flags.writeable = False
        bad = ~np.isfinite(values)
        if bad.any():
            cells = np.argwhere(bad)
            raise FieldError(f"non-finite samples at cells {format_cells(cells)}",
                             {'cells': cells.tolist()})
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'mask', mask)

    @property
    def valid(self) -> np.ndarray:
        return np.ones(self.spec.shape, dtype=bool) if self.mask is None else self.mask

    @property
    def is_masked(self) -> bool:
        return self.mask is not None

    def _other(self, other) -> Union[np.ndarray, complex]:
        if isinstance(other, ComplexField):
            if other.spec != self.spec:
                raise GridMismatchError(f"cannot combine fields on {self.spec} and {other.spec}")
            return other.values
        if isinstance(other, np.ndarray):
            if other.shape != self.spec.shape:
                raise GridMismatchError(f"array of shape {other.shape} does not match {self.spec.shape}")
            return other
        return complex(other)

    def _merged_mask(self, other) -> Optional[np.ndarray]:
        masks = [m for m in (self.mask, getattr(other, 'mask', None)) if m is not None]
        if not masks:
            return None
        return np.logical_and.reduce(masks)

    def with_values(self, values: np.ndarray, mask: Optional[np.ndarray] = None) -> 'ComplexField':
        return ComplexField(self.spec, values, self.mask if mask is None else mask)

    def __add__(self, other):
        return ComplexField(self.spec, self.values + self._other(other), self._merged_mask(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ComplexField(self.spec, self.values - self._other(other), self._merged_mask(other))

    def __rsub__(self, other):
        return ComplexField(self.spec, self._other(other) - self.values, self._merged_mask(other))

    def __mul__(self, other):
        return ComplexField(self.spec, self.values * self._other(other), self._merged_mask(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ComplexField(self.spec, self.values / self._other(other), self._merged_mask(other))

    def __neg__(self):
        return ComplexField(self.spec, -self.values, self.mask)

    def conj(self) -> 'ComplexField':
        return ComplexField(self.spec, np.conj(self.values), self.mask)

    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __repr__(self):
        masked = f", masked={int((~self.valid).sum())}" if self.is_masked else ""
        return f"ComplexField(n={self.spec.n}, h={self.spec.h:.4g}, sup={self.sup_norm():.4g}{masked})"


def zeros(spec: GridSpec) -> ComplexField:
    return ComplexField(spec, np.zeros(spec.shape, dtype=np.complex128))


def make_field(spec: GridSpec, generator: Callable, vectorized: bool = True) -> ComplexField:
    """
    Sample generator at every cell center.

    The generator is called once with the full coordinate array when
    vectorized is True (falling back to per-cell calls if that fails),
    otherwise once per cell.
    """
    z = spec.z
    values = None
    if vectorized:
        try:
            with np.errstate(all='ignore'):
                out = np.asarray(generator(z), dtype=np.complex128)
            values = np.broadcast_to(out, spec.shape).copy()
        except (TypeError, ValueError):
            logger.debug("generator is not vectorizable, sampling cell by cell")
    if values is None:
        values = np.empty(spec.shape, dtype=np.complex128)
        for (j, k), point in np.ndenumerate(z):
            values[j, k] = complex(generator(complex(point)))

    bad = ~np.isfinite(values)
    if bad.any():
        j, k = np.argwhere(bad)[0]
        raise FieldError(
            f"generator returned {values[j, k]} at cell ({j},{k}), z={complex(z[j, k]):.6g}",
            {'cells': np.argwhere(bad).tolist()}
        )
    return ComplexField(spec, values)


def integrate(f: ComplexField) -> complex:
    """Midpoint quadrature h^2 * sum of samples."""
    return complex(f.spec.h ** 2 * np.sum(f.values))


def l2_norm(values: Union[ComplexField, np.ndarray], spec: Optional[GridSpec] = None,
            region: Optional[np.ndarray] = None) -> float:
    """Discrete L2 norm sqrt(h^2 * sum |v|^2) over region (all cells by default)."""
    if isinstance(values, ComplexField):
        spec = values.spec
        values = values.values
    if spec is None:
        raise FieldError("l2_norm of a raw array needs its grid spec")
    data = np.abs(values) ** 2
    if region is not None:
        data = data[region]
    return float(spec.h * np.sqrt(np.sum(data)))


def fd_derivatives(f: ComplexField) -> Tuple[ComplexField, ComplexField]:
    """
    Wirtinger derivatives by finite differences.

    Central differences inside, one-sided first order on the edges; returns
    (f_z, f_zbar) with f_z = (f_x - i f_y)/2 and f_zbar = (f_x + i f_y)/2.
    """
    if min(f.values.shape) < 3:
        raise FieldError("finite differences need at least 3 samples per axis")
    h = f.spec.h
    f_x = np.gradient(f.values, h, axis=1, edge_order=1)
    f_y = np.gradient(f.values, h, axis=0, edge_order=1)
    return (ComplexField(f.spec, 0.5 * (f_x - 1j * f_y)),
            ComplexField(f.spec, 0.5 * (f_x + 1j * f_y)))


def interpolate(f: Union[ComplexField, np.ndarray], points, spec: Optional[GridSpec] = None) -> np.ndarray:
    """
    Bilinear interpolation of f at arbitrary points inside the grid square.

    Points between the outermost cell centers and the grid edge are
    extrapolated linearly from the edge cells.
    """
    if isinstance(f, ComplexField):
        spec = f.spec
        values = f.values
    else:
        values = np.asarray(f)
    pts = np.atleast_1d(np.asarray(points, dtype=np.complex128))
    outside = [p for p in pts.ravel() if not _covers(spec, p)]
    if outside:
        raise FieldError(f"points outside the grid: {', '.join(f'{complex(p):.6g}' for p in outside[:5])}")

    xs = spec.center.real + spec.axis
    ys = spec.center.imag + spec.axis
    query = np.column_stack([pts.ravel().imag, pts.ravel().real])
    out = np.empty(query.shape[0], dtype=np.complex128)
    for part, target in ((values.real, 'real'), (values.imag, 'imag')):
        interp = RegularGridInterpolator((ys, xs), part, method='linear',
                                         bounds_error=False, fill_value=None)
        if target == 'real':
            out.real = interp(query)
        else:
            out.imag = interp(query)
    return out.reshape(pts.shape)


def _covers(spec: GridSpec, point: complex) -> bool:
    d = complex(point) - spec.center
    return abs(d.real) <= spec.half_width and abs(d.imag) <= spec.half_width


def require_support(f: ComplexField, what: str = "field"):
    """Raise SupportError if f is nonzero outside the compact-support square."""
    offending = (np.abs(f.values) > 0) & ~f.spec.support_mask()
    if offending.any():
        cells = np.argwhere(offending)
        raise SupportError(
            f"{what} is nonzero on the outer margin at cells {format_cells(cells)}",
            {'cells': cells.tolist()}
        )
