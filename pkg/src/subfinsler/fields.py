"""Rectangular grids, fields over them, extended reals, and bit-exact file I/O.

Everything downstream (symbols, distances, waves) lives on a single
rectangular chart of R^n.  Fields are immutable after construction and safe
to read concurrently.
"""

from __future__ import annotations

import csv
import math
import struct
from itertools import product

import numpy as np

MAGIC = b"SFPF"
FORMAT_VERSION = 1

KIND_SCALAR = 0  # real scalar per node
KIND_VECTOR = 1  # complex vector of length r per node
KIND_MATRIX = 2  # complex s x r matrix per node


class DomainError(ValueError):
    """A point falls outside the grid bounding box."""


class FormatError(ValueError):
    """A field file is malformed (bad magic, truncated payload, bad dims)."""


class Grid:
    """Uniform rectangular grid: node(i) = origin + i * spacing.

    Parameters
    ----------
    origin : sequence of float, length n
    spacing : sequence of float, length n, all > 0
    dims : sequence of int, length n, all >= 2
    """

    __slots__ = ("origin", "spacing", "dims")

    def __init__(self, origin, spacing, dims):
        self.origin = np.asarray(origin, dtype=float).copy()
        self.spacing = np.asarray(spacing, dtype=float).copy()
        self.dims = tuple(int(d) for d in dims)
        if self.origin.ndim != 1:
            raise ValueError("origin must be a 1-d vector")
        n = self.origin.size
        if self.spacing.shape != (n,) or len(self.dims) != n:
            raise ValueError("origin, spacing and dims must share one length")
        if not np.all(self.spacing > 0):
            raise ValueError("spacing must be positive on every axis")
        if any(d < 2 for d in self.dims):
            raise ValueError("dims must be >= 2 on every axis")
        self.origin.setflags(write=False)
        self.spacing.setflags(write=False)

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def n_nodes(self):
        return int(np.prod(self.dims))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def box(self):
        """Bounding box as (lo, hi) corner vectors."""
        lo = self.origin
        hi = self.origin + self.spacing * (np.array(self.dims) - 1)
        return lo, hi

    def axis_coords(self, j):
        return self.origin[j] + self.spacing[j] * np.arange(self.dims[j])

    def node(self, index):
        """Coordinates of the node at a multi-index."""
        return self.origin + self.spacing * np.asarray(index, dtype=float)

    def node_coords(self):
        """All node coordinates, shape (*dims, n)."""
        axes = [self.axis_coords(j) for j in range(self.ndim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def contains(self, x, slack=0.0):
        """Whether points lie inside the bounding box (batched over leading axes)."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.box()
        tol = slack + 1e-12 * np.maximum(np.abs(lo), np.abs(hi)) + 1e-300
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)

    def ravel_index(self, index):
        return int(np.ravel_multi_index(tuple(int(i) for i in index), self.dims))

    def unravel_index(self, flat):
        return tuple(int(i) for i in np.unravel_index(int(flat), self.dims))

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.dims == other.dims
            and np.array_equal(self.origin, other.origin)
            and np.array_equal(self.spacing, other.spacing)
        )

    def __repr__(self):
        return f"Grid(origin={self.origin.tolist()}, spacing={self.spacing.tolist()}, dims={self.dims})"


class ExtReal:
    """Nonnegative extended real: a finite value or +infinity.

    Ordering and addition treat infinity as absorbing.  Use ``ExtReal.finite``
    and ``ExtReal.infinity`` to construct; ``float()`` maps infinity to
    ``math.inf``.
    """

    __slots__ = ("_v",)

    def __init__(self, value):
        v = float(value)
        if math.isnan(v) or v < 0:
            raise ValueError(f"ExtReal needs a nonnegative value, got {value}")
        self._v = v

    @classmethod
    def finite(cls, value):
        v = float(value)
        if math.isinf(v):
            raise ValueError("finite() requires a finite value")
        return cls(v)

    @classmethod
    def infinity(cls):
        return cls(math.inf)

    @property
    def is_finite(self):
        return math.isfinite(self._v)

    @property
    def value(self):
        if not self.is_finite:
            raise ValueError("infinite ExtReal has no finite value")
        return self._v

    def __float__(self):
        return self._v

    def __add__(self, other):
        return ExtReal(self._v + float(other))

    __radd__ = __add__

    def __mul__(self, c):
        c = float(c)
        if c < 0:
            raise ValueError("ExtReal scaling needs a nonnegative factor")
        if c == 0.0 and math.isinf(self._v):
            raise ValueError("0 * infinity is undefined")
        return ExtReal(self._v * c)

    __rmul__ = __mul__

    def __eq__(self, other):
        return self._v == float(other)

    def __lt__(self, other):
        return self._v < float(other)

    def __le__(self, other):
        return self._v <= float(other)

    def __gt__(self, other):
        return self._v > float(other)

    def __ge__(self, other):
        return self._v >= float(other)

    def __hash__(self):
        return hash(self._v)

    def __repr__(self):
        return "ExtReal(inf)" if not self.is_finite else f"ExtReal({self._v!r})"


def _fibre_shape(kind, r, s):
    if kind == KIND_SCALAR:
        return ()
    if kind == KIND_VECTOR:
        return (r,)
    if kind == KIND_MATRIX:
        return (s, r)
    raise ValueError(f"unknown field kind {kind}")


class Field:
    """Values attached to every grid node.

    ``kind`` selects the fibre: real scalar, complex vector of length ``r``,
    or complex ``s x r`` matrix.  ``values`` has shape ``(*grid.dims, *fibre)``.
    """

    __slots__ = ("grid", "kind", "values")

    def __init__(self, grid, kind, values):
        self.grid = grid
        self.kind = int(kind)
        dtype = float if self.kind == KIND_SCALAR else complex
        values = np.asarray(values, dtype=dtype)
        r, s = self._rs_from_shape(grid, self.kind, values.shape)
        expected = grid.dims + _fibre_shape(self.kind, r, s)
        if values.shape != expected:
            raise ValueError(f"values shape {values.shape} != expected {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.values = values
        self.values.setflags(write=False)

    @staticmethod
    def _rs_from_shape(grid, kind, shape):
        extra = shape[grid.ndim:]
        if kind == KIND_SCALAR:
            if extra != ():
                raise ValueError("scalar field takes no fibre axes")
            return 1, 1
        if kind == KIND_VECTOR:
            if len(extra) != 1:
                raise ValueError("vector field needs one fibre axis")
            return extra[0], 1
        if len(extra) != 2:
            raise ValueError("matrix field needs two fibre axes")
        return extra[1], extra[0]

    @classmethod
    def scalar(cls, grid, values):
        return cls(grid, KIND_SCALAR, values)

    @classmethod
    def from_function(cls, grid, fn, kind=KIND_SCALAR):
        """Sample ``fn`` (vectorised over points shaped (..., n)) at all nodes."""
        return cls(grid, kind, fn(grid.node_coords()))

    @property
    def fibre_shape(self):
        return self.values.shape[self.grid.ndim:]

    def sample(self, x):
        """Multilinear interpolation at points ``x`` shaped (..., n) or (n,).

        Exact at nodes and on affine data; raises DomainError outside the box.
        """
        return sample(self, x)

    def __add__(self, other):
        if not isinstance(other, Field) or other.kind != self.kind or other.grid != self.grid:
            raise ValueError("can only add fields of one kind on one grid")
        return Field(self.grid, self.kind, self.values + other.values)

    def scale(self, c):
        return Field(self.grid, self.kind, self.values * c)


def _interp_weights(grid, x):
    """Base multi-indices and per-axis fractional offsets for points x."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != grid.ndim:
        raise ValueError(f"points must have last axis {grid.ndim}")
    if not np.all(grid.contains(x)):
        raise DomainError("sample point outside the grid bounding box")
    t = (x - grid.origin) / grid.spacing
    base = np.floor(t).astype(int)
    base = np.minimum(np.maximum(base, 0), np.array(grid.dims) - 2)
    frac = t - base
    return base, frac


def sample(field, x):
    """Multilinear interpolation of ``field`` at ``x`` (batched)."""
    grid = field.grid
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    pts = x[None, :] if squeeze else x
    base, frac = _interp_weights(grid, pts)
    n = grid.ndim
    fib = field.fibre_shape
    out = np.zeros(pts.shape[:-1] + fib, dtype=field.values.dtype)
    for corner in product((0, 1), repeat=n):
        w = np.ones(pts.shape[:-1])
        for j, c in enumerate(corner):
            w = w * (frac[..., j] if c else 1.0 - frac[..., j])
        idx = tuple(base[..., j] + corner[j] for j in range(n))
        vals = field.values[idx]
        out = out + vals * w.reshape(w.shape + (1,) * len(fib))
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# Binary field format
#
#   magic "SFPF" | version u32 | kind u8 | n u32 | dims n*u32
#   | spacing n*f64 | origin n*f64 | r u32 | s u32 | payload
#
# Payload is little-endian f64, row-major over (*dims, *fibre); complex values
# are written as (re, im) pairs.  A 2x2 scalar grid of zeros occupies
# 4+4+1+4 + 2*4 + 2*8 + 2*8 + 8 = 61 header bytes plus 4*8 payload bytes.
# ---------------------------------------------------------------------------


def save_field(field, path):
    """Write a field; ``load_field`` round-trips bit-identically."""
    grid = field.grid
    n = grid.ndim
    r, s = Field._rs_from_shape(grid, field.kind, field.values.shape)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IB", FORMAT_VERSION, field.kind))
        fh.write(struct.pack("<I", n))
        fh.write(struct.pack(f"<{n}I", *grid.dims))
        fh.write(struct.pack(f"<{n}d", *grid.spacing))
        fh.write(struct.pack(f"<{n}d", *grid.origin))
        fh.write(struct.pack("<II", r, s))
        if field.kind == KIND_SCALAR:
            payload = field.values.astype("<f8", copy=False)
        else:
            flat = field.values.astype("<c16", copy=False)
            payload = flat.view("<f8")
        fh.write(payload.tobytes(order="C"))


def load_field(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise FormatError("bad magic bytes")
    off = 4
    try:
        version, kind = struct.unpack_from("<IB", data, off)
        off += 5
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        if n == 0 or n > 16:
            raise FormatError(f"implausible dimension count {n}")
        dims = struct.unpack_from(f"<{n}I", data, off)
        off += 4 * n
        spacing = struct.unpack_from(f"<{n}d", data, off)
        off += 8 * n
        origin = struct.unpack_from(f"<{n}d", data, off)
        off += 8 * n
        r, s = struct.unpack_from("<II", data, off)
        off += 8
    except struct.error as exc:
        raise FormatError(f"truncated header: {exc}") from exc
    n_nodes = 1
    for d in dims:
        n_nodes *= d
        if n_nodes > 2**40:
            raise FormatError("dimension overflow")
    fib = _fibre_shape(kind, r, s)
    n_values = n_nodes * int(np.prod(fib)) if fib else n_nodes
    n_floats = n_values * (1 if kind == KIND_SCALAR else 2)
    if len(data) - off != 8 * n_floats:
        raise FormatError(
            f"payload length {len(data) - off} does not match header ({8 * n_floats} expected)"
        )
    raw = np.frombuffer(data, dtype="<f8", offset=off)
    grid = Grid(origin, spacing, dims)
    if kind == KIND_SCALAR:
        values = raw.reshape(dims)
    else:
        values = raw.view("<c16").reshape(dims + fib)
    return Field(grid, kind, values)


def export_csv(field, path):
    """CSV export of a 2-d scalar field; rows follow the y index."""
    if field.kind != KIND_SCALAR or field.grid.ndim != 2:
        raise ValueError("CSV export is defined for 2-d scalar fields")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for iy in range(field.grid.dims[1]):
            writer.writerow(field.values[:, iy].tolist())
