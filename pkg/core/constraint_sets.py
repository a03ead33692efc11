"""
Families M(z) of compact convex sets in the unit disk
Disk families (center c(z), radius k(z)) and polygon families (a palette of
convex polygons assigned per cell) with membership, boundary projection,
ray distance, inner normal, cone and linear-minimization queries.

Every query has a vectorized form over whole fields (used by the extremal
checks) and a per-cell form taking a (row, col) index.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import MultiPoint, Polygon
from shapely.geometry.polygon import orient

from .complex_field import ComplexField, GridSpec
from .error_handler import ConstraintError, GridMismatchError, format_cells

logger = logging.getLogger(__name__)

UNIT_MARGIN = 1e-9
MEMBERSHIP_TOL = 1e-12
BOUNDARY_TOL = 1e-6
CONE_TOL = 1e-9

Cell = Tuple[int, int]


@dataclass(frozen=True)
class ConstraintStats:
    q_M: np.ndarray
    Q_M: np.ndarray


class ConstraintFamily(ABC):
    """A family M(z) sampled per grid cell."""

    spec: GridSpec

    # -- vectorized queries over full (n, n) arrays --

    @abstractmethod
    def stats(self) -> ConstraintStats:
        ...

    @abstractmethod
    def contains_all(self, nu: np.ndarray) -> np.ndarray:
        """Boolean per cell: nu[j, k] in M(z_jk)."""

    @abstractmethod
    def project_all(self, nu: np.ndarray) -> np.ndarray:
        """Nearest point of the boundary of M(z) per cell."""

    @abstractmethod
    def boundary_distance(self, nu: np.ndarray) -> np.ndarray:
        """Distance from nu to the boundary of M(z) per cell."""

    @abstractmethod
    def ray_distances(self, mu: np.ndarray, omega: complex) -> np.ndarray:
        """Largest t >= 0 with mu + t*omega in M(z), per cell (mu assumed inside)."""

    @abstractmethod
    def minimize_linear(self, B: np.ndarray) -> np.ndarray:
        """argmin over nu in M(z) of Re(nu * B), per cell."""

    @abstractmethod
    def boundary_normals(self, nu: np.ndarray) -> np.ndarray:
        """Unit inner normal where nu sits on a smooth part of the boundary, NaN elsewhere."""

    @abstractmethod
    def point_cells(self) -> np.ndarray:
        """Cells where M(z) is a single point."""

    @abstractmethod
    def interior_point(self) -> np.ndarray:
        """A point of M(z) per cell, inside it wherever M(z) has interior."""

    # -- per-cell queries --

    def contains(self, cell: Cell, nu: complex) -> bool:
        return bool(self._cell_call(self.contains_all, cell, nu))

    def project_boundary(self, cell: Cell, nu: complex) -> complex:
        self._require_regular(cell)
        return complex(self._cell_call(self.project_all, cell, nu))

    def ray_distance(self, cell: Cell, mu: complex, alpha: float) -> float:
        if not self.contains(cell, mu):
            raise ConstraintError(f"mu = {complex(mu):.6g} is outside M(z) at cell {tuple(cell)}")
        omega = complex(np.exp(1j * alpha))
        return float(self._cell_call(lambda a: self.ray_distances(a, omega), cell, mu))

    def cone_directions(self, cell: Cell, mu: complex, samples: int) -> List[complex]:
        """Sampled admissible directions at mu (empty for a single-point set)."""
        out = []
        for j in range(samples):
            alpha = 2.0 * np.pi * j / samples
            if self.ray_distance(cell, mu, alpha) > CONE_TOL:
                out.append(complex(np.exp(1j * alpha)))
        return out

    @abstractmethod
    def inner_normal(self, cell: Cell, mu_boundary: complex) -> complex:
        ...

    def _cell_call(self, func, cell: Cell, value: complex):
        j, k = cell
        return func(np.full(self.spec.shape, value, dtype=np.complex128))[j, k]

    def _require_regular(self, cell: Cell):
        pass

    # -- checks --

    def check_membership(self, nu: np.ndarray, what: str = "coefficient"):
        outside = ~self.contains_all(nu)
        if outside.any():
            cells = np.argwhere(outside)
            raise ConstraintError(f"{what} leaves M(z) at cells {format_cells(cells)}",
                                  {'cells': cells.tolist()})


class DiskFamily(ConstraintFamily):
    """M(z) = closed disk of center c(z) and radius k(z)."""

    def __init__(self, c: ComplexField, k: np.ndarray):
        k = np.array(np.real(k), dtype=float)
        if k.shape != c.spec.shape:
            raise GridMismatchError(f"radius field of shape {k.shape} does not match {c.spec.shape}")
        if (k < 0).any() or not np.isfinite(k).all():
            cells = np.argwhere((k < 0) | ~np.isfinite(k))
            raise ConstraintError(f"negative or non-finite radius at cells {format_cells(cells)}")
        reach = np.abs(c.values) + k
        outside = reach > 1.0 - UNIT_MARGIN
        if outside.any():
            cells = np.argwhere(outside)
            raise ConstraintError(
                f"constraint family leaves the unit disk at cells {format_cells(cells)} "
                f"(max |c| + k = {reach.max():.12f})",
                {'cells': cells.tolist()}
            )
        k.flags.writeable = False
        self.spec = c.spec
        self.c = c
        self.k = k

    @classmethod
    def constant(cls, spec: GridSpec, center: complex, radius: float,
                 support: Optional[np.ndarray] = None) -> 'DiskFamily':
        """Same disk on support (everywhere by default), the point {0} elsewhere."""
        if support is None:
            support = np.ones(spec.shape, dtype=bool)
        c = np.where(support, complex(center), 0.0)
        k = np.where(support, float(radius), 0.0)
        return cls(ComplexField(spec, c), k)

    def stats(self) -> ConstraintStats:
        q = np.abs(self.c.values) + self.k
        return ConstraintStats(q, (1.0 + q) / (1.0 - q))

    def point_cells(self) -> np.ndarray:
        return self.k == 0

    def interior_point(self) -> np.ndarray:
        return self.c.values.copy()

    def contains_all(self, nu: np.ndarray) -> np.ndarray:
        return np.abs(nu - self.c.values) <= self.k + MEMBERSHIP_TOL

    def project_all(self, nu: np.ndarray) -> np.ndarray:
        d = nu - self.c.values
        r = np.abs(d)
        direction = np.ones_like(d)
        nz = r > 0
        direction[nz] = d[nz] / r[nz]
        return self.c.values + self.k * direction

    def boundary_normals(self, nu: np.ndarray) -> np.ndarray:
        smooth = (self.k > 0) & (self.boundary_distance(nu) <= BOUNDARY_TOL)
        out = np.full(nu.shape, np.nan + 0j, dtype=np.complex128)
        out[smooth] = (self.c.values[smooth] - nu[smooth]) / self.k[smooth]
        return out

    def boundary_distance(self, nu: np.ndarray) -> np.ndarray:
        return np.abs(np.abs(nu - self.c.values) - self.k)

    def ray_distances(self, mu: np.ndarray, omega: complex) -> np.ndarray:
        d = mu - self.c.values
        b = np.real(np.conj(omega) * d)
        disc = b * b - (np.abs(d) ** 2 - self.k ** 2)
        t = -b + np.sqrt(np.maximum(disc, 0.0))
        return np.maximum(t, 0.0)

    def minimize_linear(self, B: np.ndarray) -> np.ndarray:
        mag = np.abs(B)
        out = self.c.values.copy()
        nz = mag > 0
        out[nz] = out[nz] - self.k[nz] * np.conj(B[nz]) / mag[nz]
        return out

    def _require_regular(self, cell: Cell):
        if self.k[cell[0], cell[1]] == 0:
            raise ConstraintError(f"M(z) is the single point {complex(self.c.values[cell]):.6g} "
                                  f"at cell {tuple(cell)}; it has no boundary to project on")

    def inner_normal(self, cell: Cell, mu_boundary: complex) -> complex:
        j, k = cell
        c, r = complex(self.c.values[j, k]), float(self.k[j, k])
        if r == 0:
            raise ConstraintError(f"M(z) is a single point at cell {tuple(cell)}; it has no normal")
        if abs(abs(mu_boundary - c) - r) > BOUNDARY_TOL:
            raise ConstraintError(f"{complex(mu_boundary):.6g} is not on the boundary at cell {tuple(cell)}")
        return (c - mu_boundary) / r


class PolygonFamily(ConstraintFamily):
    """
    M(z) = a convex polygon taken from a palette, per cell.

    index[j, k] selects the polygon; -1 means the single point {0}.
    """

    def __init__(self, spec: GridSpec, polygons: Sequence[Sequence[complex]], index: np.ndarray):
        index = np.array(index, dtype=np.int64)
        if index.shape != spec.shape:
            raise GridMismatchError(f"polygon index of shape {index.shape} does not match {spec.shape}")
        if index.min() < -1 or index.max() >= len(polygons):
            raise ConstraintError("polygon index refers to a missing palette entry")
        self.spec = spec
        self.polygons: List[np.ndarray] = []
        self.degenerate: List[bool] = []
        for p, verts in enumerate(polygons):
            v, degenerate = _normalize_polygon(verts)
            if np.abs(v).max() > 1.0 - UNIT_MARGIN:
                raise ConstraintError(f"constraint family leaves the unit disk (polygon {p})")
            if degenerate:
                logger.warning("polygon %d is degenerate; queries on its cells will fail", p)
            v.flags.writeable = False
            self.polygons.append(v)
            self.degenerate.append(degenerate)
        index.flags.writeable = False
        self.index = index

    @classmethod
    def constant(cls, spec: GridSpec, vertices: Sequence[complex],
                 support: Optional[np.ndarray] = None) -> 'PolygonFamily':
        if support is None:
            support = np.ones(spec.shape, dtype=bool)
        return cls(spec, [vertices], np.where(support, 0, -1))

    def _groups(self):
        for p, verts in enumerate(self.polygons):
            cells = self.index == p
            if cells.any():
                if self.degenerate[p]:
                    raise ConstraintError(f"polygon {p} is degenerate")
                yield verts, cells

    def stats(self) -> ConstraintStats:
        q = np.zeros(self.spec.shape)
        for p, verts in enumerate(self.polygons):
            q[self.index == p] = np.abs(verts).max()
        return ConstraintStats(q, (1.0 + q) / (1.0 - q))

    def point_cells(self) -> np.ndarray:
        return self.index == -1

    def interior_point(self) -> np.ndarray:
        out = np.zeros(self.spec.shape, dtype=np.complex128)
        for verts, cells in self._groups():
            out[cells] = verts.mean()
        return out

    def contains_all(self, nu: np.ndarray) -> np.ndarray:
        out = np.abs(nu) <= MEMBERSHIP_TOL
        for verts, cells in self._groups():
            s = _edge_slacks(verts, nu[cells])
            out[cells] = (s >= -MEMBERSHIP_TOL).all(axis=1)
        return out

    def project_all(self, nu: np.ndarray) -> np.ndarray:
        out = np.zeros_like(nu)
        for verts, cells in self._groups():
            out[cells], _ = _nearest_on_boundary(verts, nu[cells])
        return out

    def boundary_normals(self, nu: np.ndarray) -> np.ndarray:
        out = np.full(nu.shape, np.nan + 0j, dtype=np.complex128)
        for verts, cells in self._groups():
            pts = nu[cells]
            on_edge = np.abs(_edge_slacks(verts, pts)) <= BOUNDARY_TOL
            at_vertex = (np.abs(pts[:, None] - verts[None, :]) <= BOUNDARY_TOL).any(axis=1)
            smooth = (on_edge.sum(axis=1) == 1) & ~at_vertex
            values = np.full(pts.shape, np.nan + 0j, dtype=np.complex128)
            values[smooth] = _inner_normals(verts)[np.argmax(on_edge[smooth], axis=1)]
            out[cells] = values
        return out

    def boundary_distance(self, nu: np.ndarray) -> np.ndarray:
        out = np.abs(nu)
        for verts, cells in self._groups():
            _, out[cells] = _nearest_on_boundary(verts, nu[cells])
        return out

    def ray_distances(self, mu: np.ndarray, omega: complex) -> np.ndarray:
        out = np.zeros(mu.shape)
        for verts, cells in self._groups():
            normals = _inner_normals(verts)
            s = np.maximum(_edge_slacks(verts, mu[cells]), 0.0)
            a = np.real(np.conj(normals) * omega)
            with np.errstate(divide='ignore', invalid='ignore'):
                t = np.where(a[None, :] < 0, s / -a[None, :], np.inf)
            out[cells] = t.min(axis=1)
        return out

    def minimize_linear(self, B: np.ndarray) -> np.ndarray:
        out = np.zeros_like(B)
        for verts, cells in self._groups():
            scores = np.real(verts[None, :] * B[cells][:, None])
            out[cells] = verts[np.argmin(scores, axis=1)]
        return out

    def _require_regular(self, cell: Cell):
        p = self.index[cell[0], cell[1]]
        if p < 0:
            raise ConstraintError(f"M(z) is the single point 0 at cell {tuple(cell)}; it has no boundary to project on")
        if p >= 0 and self.degenerate[p]:
            raise ConstraintError(f"polygon at cell {tuple(cell)} is degenerate")

    def inner_normal(self, cell: Cell, mu_boundary: complex) -> complex:
        p = self.index[cell[0], cell[1]]
        if p < 0:
            raise ConstraintError(f"M(z) is a single point at cell {tuple(cell)}; it has no normal")
        self._require_regular(cell)
        verts = self.polygons[p]
        if (np.abs(verts - mu_boundary) <= BOUNDARY_TOL).any():
            raise ConstraintError(
                f"{complex(mu_boundary):.6g} is a polygon vertex at cell {tuple(cell)}; "
                "the boundary is not smooth there, use cone_directions instead"
            )
        s = _edge_slacks(verts, np.array([mu_boundary]))[0]
        on_edge = np.flatnonzero(np.abs(s) <= BOUNDARY_TOL)
        if on_edge.size != 1:
            raise ConstraintError(f"{complex(mu_boundary):.6g} is not on an edge at cell {tuple(cell)}")
        return complex(_inner_normals(verts)[on_edge[0]])


def _normalize_polygon(verts: Sequence[complex]) -> Tuple[np.ndarray, bool]:
    """Deduplicate, orient counterclockwise and test strict convexity."""
    v = np.asarray([complex(x) for x in verts], dtype=np.complex128)
    keep = [0] + [i for i in range(1, len(v)) if abs(v[i] - v[i - 1]) > 1e-14]
    v = v[keep]
    if len(v) > 1 and abs(v[-1] - v[0]) <= 1e-14:
        v = v[:-1]
    if len(v) < 3:
        return v, True

    poly = Polygon(zip(v.real, v.imag))
    if not poly.is_valid or poly.area <= 1e-15:
        return v, True
    poly = orient(poly, sign=1.0)
    coords = np.asarray(poly.exterior.coords)[:-1]
    v = coords[:, 0] + 1j * coords[:, 1]

    hull = MultiPoint([(x.real, x.imag) for x in v]).convex_hull
    if len(hull.exterior.coords) - 1 != len(v) or abs(hull.area - poly.area) > 1e-12:
        raise ConstraintError("polygon vertices are not in strictly convex position")
    return v, False


def _inner_normals(verts: np.ndarray) -> np.ndarray:
    edges = np.roll(verts, -1) - verts
    return 1j * edges / np.abs(edges)


def _edge_slacks(verts: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Signed distances of points (N,) to each edge line (N, m); >= 0 inside."""
    normals = _inner_normals(verts)
    return np.real(np.conj(normals)[None, :] * (points[:, None] - verts[None, :]))


def _nearest_on_boundary(verts: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = verts[None, :]
    e = (np.roll(verts, -1) - verts)[None, :]
    t = np.real(np.conj(e) * (points[:, None] - a)) / np.abs(e) ** 2
    proj = a + np.clip(t, 0.0, 1.0) * e
    dist = np.abs(points[:, None] - proj)
    best = np.argmin(dist, axis=1)
    rows = np.arange(points.shape[0])
    return proj[rows, best], dist[rows, best]


def check_dilatation_bound(mu: ComplexField, family: ConstraintFamily) -> np.ndarray:
    """Cells where K_mu exceeds Q_M (empty when mu lies in M(z))."""
    modulus = mu.abs()
    K = (1.0 + modulus) / (1.0 - modulus)
    return np.argwhere(K > family.stats().Q_M * (1.0 + 1e-12))
