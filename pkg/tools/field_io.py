"""
Field files for qcvar
CFLD binary fields, solution sidecars and constraint family bundles.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

from core.beltrami_solver import Coefficient, Solution
from core.complex_field import ComplexField, GridSpec
from core.constraint_sets import ConstraintFamily, DiskFamily, PolygonFamily
from core.error_handler import ConstraintError, FieldFormatError

logger = logging.getLogger(__name__)

MAGIC = b'CFLD'
VERSION = 1

HEADER = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('center_re', '<f8'),
    ('center_im', '<f8'),
    ('half_width', '<f8'),
    ('n', '<u4'),
])

PathLike = Union[str, Path]


def encode_field(field: ComplexField) -> bytes:
    spec = field.spec
    header = np.array([(MAGIC, VERSION, spec.center.real, spec.center.imag,
                        spec.half_width, spec.n)], dtype=HEADER)
    return header.tobytes() + np.ascontiguousarray(field.values, dtype='<c16').tobytes()


def decode_field(data: bytes, source: str = "<bytes>") -> ComplexField:
    if len(data) < HEADER.itemsize:
        raise FieldFormatError(f"{source}: truncated header ({len(data)} bytes)")
    header = np.frombuffer(data, dtype=HEADER, count=1)[0]
    if bytes(header['magic']) != MAGIC:
        raise FieldFormatError(f"{source}: bad magic {bytes(header['magic'])!r}")
    if int(header['version']) != VERSION:
        raise FieldFormatError(f"{source}: unsupported version {int(header['version'])}")
    n = int(header['n'])
    expected = HEADER.itemsize + 16 * n * n
    if len(data) != expected:
        raise FieldFormatError(f"{source}: expected {expected} bytes for n={n}, found {len(data)}")
    spec = GridSpec(complex(float(header['center_re']), float(header['center_im'])),
                    float(header['half_width']), n)
    values = np.frombuffer(data, dtype='<c16', offset=HEADER.itemsize).reshape(n, n)
    return ComplexField(spec, values.astype(np.complex128))


def write_field(path: PathLike, field: ComplexField) -> Path:
    path = Path(path)
    path.write_bytes(encode_field(field))
    logger.debug("wrote %s (%s)", path, field)
    return path


def read_field(path: PathLike, spec: GridSpec = None) -> ComplexField:
    """Load a CFLD file; with spec given, the stored grid must match it."""
    path = Path(path)
    if not path.exists():
        raise FieldFormatError(f"field file not found: {path}")
    field = decode_field(path.read_bytes(), str(path))
    if spec is not None and field.spec != spec:
        raise FieldFormatError(f"{path} is stored on {field.spec}, expected {spec}")
    return field


# -- solutions --

def save_solution(directory: PathLike, sol: Solution, prefix: str = "") -> Dict[str, Path]:
    directory = Path(directory)
    paths = {
        'mu': write_field(directory / f"{prefix}mu.cfld", sol.coeff.mu),
        'f': write_field(directory / f"{prefix}f.cfld", sol.f),
        'f_z': write_field(directory / f"{prefix}f_z.cfld", sol.f_z),
        'f_zbar': write_field(directory / f"{prefix}f_zbar.cfld", sol.f_zbar),
    }
    sidecar = directory / f"{prefix}solution.json"
    with open(sidecar, 'w', encoding='utf-8') as f:
        json.dump(sol.scalars(), f, indent=2, sort_keys=True)
    paths['sidecar'] = sidecar
    return paths


def load_solution(directory: PathLike, prefix: str = "") -> Solution:
    directory = Path(directory)
    mu = read_field(directory / f"{prefix}mu.cfld")
    f = read_field(directory / f"{prefix}f.cfld", mu.spec)
    f_z = read_field(directory / f"{prefix}f_z.cfld", mu.spec)
    f_zbar = read_field(directory / f"{prefix}f_zbar.cfld", mu.spec)
    try:
        with open(directory / f"{prefix}solution.json", encoding='utf-8') as fh:
            scalars = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise FieldFormatError(f"cannot read solution sidecar in {directory}: {e}")
    return Solution(Coefficient(mu), f, f_z, f_zbar,
                    int(scalars['neumann_terms']), float(scalars['residual']))


# -- constraint families --

def save_family(directory: PathLike, fam: ConstraintFamily, prefix: str = "constraint") -> Dict[str, Path]:
    directory = Path(directory)
    manifest = directory / f"{prefix}.json"
    if isinstance(fam, DiskFamily):
        paths = {
            'c': write_field(directory / f"{prefix}_c.cfld", fam.c),
            'k': write_field(directory / f"{prefix}_k.cfld", ComplexField(fam.spec, fam.k)),
        }
        body = {'kind': 'disk', 'center_file': paths['c'].name, 'radius_file': paths['k'].name}
    elif isinstance(fam, PolygonFamily):
        index = ComplexField(fam.spec, fam.index.astype(float))
        paths = {'index': write_field(directory / f"{prefix}_index.cfld", index)}
        body = {
            'kind': 'polygon',
            'polygons': [[[v.real, v.imag] for v in verts] for verts in fam.polygons],
            'index_file': paths['index'].name,
        }
    else:
        raise ConstraintError(f"cannot serialize {type(fam).__name__}")
    with open(manifest, 'w', encoding='utf-8') as f:
        json.dump(body, f, indent=2)
    paths['manifest'] = manifest
    return paths


def load_family(manifest: PathLike) -> ConstraintFamily:
    manifest = Path(manifest)
    try:
        with open(manifest, encoding='utf-8') as f:
            body = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FieldFormatError(f"cannot read constraint manifest {manifest}: {e}")
    base = manifest.parent
    kind = body.get('kind')
    if kind == 'disk':
        c = read_field(base / body['center_file'])
        k = read_field(base / body['radius_file'], c.spec)
        if np.abs(k.values.imag).max() > 0:
            raise FieldFormatError(f"{body['radius_file']}: radius field has an imaginary part")
        return DiskFamily(c, k.values.real)
    if kind == 'polygon':
        index = read_field(base / body['index_file'])
        polygons = [[complex(re, im) for re, im in verts] for verts in body['polygons']]
        return PolygonFamily(index.spec, polygons, np.rint(index.values.real).astype(np.int64))
    raise FieldFormatError(f"{manifest}: unknown constraint kind '{kind}'")
