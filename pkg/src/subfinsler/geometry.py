"""Curves, lengths, and control-distance fields via anisotropic shortest paths.

The control distance is approximated on the grid graph whose edges join each
node to its neighbours within a stencil radius; each edge costs the dual norm
of the offset at the edge midpoint.  Grid distances are upper approximations
of the continuum distance; no convergence rate is claimed beyond the
tolerances the tests pin down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as _dijkstra

from .fields import KIND_SCALAR, DomainError, ExtReal, Field, export_csv, save_field
from .symbol import dual_norm_batch, seminorm

from . import _fd


class Curve:
    """Time-stamped polyline with strictly increasing times.

    Velocities are the per-segment difference quotients; curves are the
    discrete stand-ins for absolutely continuous paths.
    """

    __slots__ = ("times", "points")

    def __init__(self, times, points):
        times = np.asarray(times, dtype=float)
        points = np.asarray(points, dtype=float)
        if times.ndim != 1 or points.ndim != 2 or points.shape[0] != times.shape[0]:
            raise ValueError("need times (m+1,) and points (m+1, n)")
        if times.shape[0] < 2:
            raise ValueError("a curve needs at least two samples")
        if not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        self.times = times.copy()
        self.points = points.copy()
        self.times.setflags(write=False)
        self.points.setflags(write=False)

    @classmethod
    def from_function(cls, fn, t0, t1, samples):
        ts = np.linspace(t0, t1, samples + 1)
        return cls(ts, np.asarray([fn(t) for t in ts], dtype=float))

    @classmethod
    def constant(cls, point, t0=0.0, t1=1.0):
        p = np.asarray(point, dtype=float)
        return cls([t0, t1], [p, p])

    @property
    def n(self):
        return self.points.shape[1]

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def velocities(self):
        dt = np.diff(self.times)[:, None]
        return np.diff(self.points, axis=0) / dt

    def midpoints(self):
        return 0.5 * (self.points[1:] + self.points[:-1])

    def at(self, t):
        """Linear interpolation along the polyline (batched over t)."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.n,))
        for j in range(self.n):
            out[..., j] = np.interp(t, self.times, self.points[:, j])
        return out

    def resample(self, times):
        times = np.asarray(times, dtype=float)
        return Curve(times, self.at(times))


def _segment_duals(sym, curve, **dual_kw):
    """Dual norm of each segment velocity at the segment midpoint."""
    if not np.all(sym.grid.contains(curve.points)):
        raise DomainError("curve leaves the grid bounding box")
    return dual_norm_batch(sym, curve.midpoints(), curve.velocities(), **dual_kw)


def curve_length(sym, curve, **dual_kw):
    """Length as the quadrature of the dual norm of the velocity.

    Midpoint rule over the polyline segments; infinite as soon as one segment
    velocity has infinite dual norm.  Returns an :class:`ExtReal`.
    """
    duals = _segment_duals(sym, curve, **dual_kw)
    if np.any(np.isinf(duals)):
        return ExtReal.infinity()
    return ExtReal(float(np.sum(duals * np.diff(curve.times))))


def is_subunit(sym, curve, tol=1e-9, **dual_kw):
    """Whether every segment's midpoint dual velocity norm is <= 1 + tol."""
    duals = _segment_duals(sym, curve, **dual_kw)
    return bool(np.all(duals <= 1.0 + tol))


def arclength_reparam(sym, curve, **dual_kw):
    """Reparametrise by accumulated dual-norm length; the result is subunit.

    Zero-speed segments collapse; infinite or zero total length raises.
    """
    duals = _segment_duals(sym, curve, **dual_kw)
    if np.any(np.isinf(duals)):
        raise ValueError("cannot arc-length reparametrise a curve of infinite length")
    increments = duals * np.diff(curve.times)
    total = float(np.sum(increments))
    if total <= 0.0:
        raise ValueError("cannot arc-length reparametrise a zero-length curve")
    r = np.concatenate([[0.0], np.cumsum(increments)])
    keep = np.concatenate([[True], np.diff(r) > 0])
    return Curve(r[keep], curve.points[keep])


@dataclass(frozen=True)
class DistanceField:
    """Per-node extended distance from a source node set.

    ``values`` is shaped like the grid with ``np.inf`` on unreachable nodes;
    zero exactly on the sources.
    """

    grid: object
    sources: np.ndarray  # flat node indices
    values: np.ndarray

    def at_index(self, index):
        return float(self.values[tuple(index)])

    def to_field(self):
        return Field(self.grid, KIND_SCALAR, np.where(np.isfinite(self.values), self.values, 0.0))

    def save(self, path):
        """Binary export; infinity goes out as IEEE +inf."""
        vals = self.values.astype("<f8", copy=True)
        grid = self.grid
        # bypass Field's finiteness invariant: write the raw format directly
        import struct

        from .fields import FORMAT_VERSION, MAGIC

        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IB", FORMAT_VERSION, KIND_SCALAR))
            fh.write(struct.pack("<I", grid.ndim))
            fh.write(struct.pack(f"<{grid.ndim}I", *grid.dims))
            fh.write(struct.pack(f"<{grid.ndim}d", *grid.spacing))
            fh.write(struct.pack(f"<{grid.ndim}d", *grid.origin))
            fh.write(struct.pack("<II", 1, 1))
            fh.write(vals.tobytes(order="C"))

    def export_csv(self, path):
        if self.grid.ndim != 2:
            raise ValueError("CSV export is defined for 2-d distance fields")
        import csv as _csv

        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            for iy in range(self.grid.dims[1]):
                writer.writerow(self.values[:, iy].tolist())


def stencil_offsets(n, radius):
    """Primitive integer offsets with every component in [-radius, radius].

    Collinear multiples are dropped (their paths are concatenations of the
    primitive offset), and only one of each +/- pair is kept since edge costs
    are even in the offset.
    """
    if radius < 1:
        raise ValueError("stencil radius must be >= 1")
    out = []
    rng = range(-radius, radius + 1)
    for off in np.ndindex(*(2 * radius + 1,) * n):
        o = tuple(rng[i] for i in off)
        if all(v == 0 for v in o):
            continue
        if math.gcd(*(abs(v) for v in o)) != 1:
            continue
        # keep one representative of {o, -o}
        first_nonzero = next(v for v in o if v != 0)
        if first_nonzero < 0:
            continue
        out.append(o)
    return out


def distance_field(sym, sources, stencil_radius=2, **dual_kw):
    """Single-source-set shortest-path distances under the dual-norm edge cost.

    ``sources`` is an iterable of node multi-indices (or flat indices).  Edges
    join nodes within the stencil radius; each costs the dual norm of the
    physical offset at the edge midpoint, and infinite-cost edges are pruned
    so genuinely unreachable directions stay infinite.
    """
    grid = sym.grid
    src = _as_flat_indices(grid, sources)
    if src.size == 0:
        raise ValueError("source set must be nonempty")
    dims = np.array(grid.dims)
    n_nodes = grid.n_nodes
    coords = grid.node_coords().reshape(-1, grid.ndim)

    rows, cols, costs = [], [], []
    multi = np.stack(np.unravel_index(np.arange(n_nodes), grid.dims), axis=-1)
    for off in stencil_offsets(grid.ndim, stencil_radius):
        off = np.array(off)
        ok = np.all((multi + off >= 0) & (multi + off < dims), axis=1)
        i_from = np.nonzero(ok)[0]
        if i_from.size == 0:
            continue
        i_to = np.ravel_multi_index(tuple((multi[i_from] + off).T), grid.dims)
        vec = off * grid.spacing
        mids = coords[i_from] + 0.5 * vec
        # P* is positively homogeneous, so P*(offset) is the traversal time
        w = dual_norm_batch(sym, mids, np.broadcast_to(vec, mids.shape), **dual_kw)
        keep = np.isfinite(w)
        rows.append(i_from[keep])
        cols.append(i_to[keep])
        costs.append(w[keep])
    if rows:
        graph = coo_matrix(
            (np.concatenate(costs), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_nodes, n_nodes),
        ).tocsr()
    else:
        graph = coo_matrix((n_nodes, n_nodes)).tocsr()
    dist = _dijkstra(graph, directed=False, indices=src, min_only=True)
    values = dist.reshape(grid.dims)
    values.flags.writeable = True
    for f in src:
        values[np.unravel_index(f, grid.dims)] = 0.0
    values.flags.writeable = False
    return DistanceField(grid=grid, sources=np.sort(src), values=values)


def _as_flat_indices(grid, sources):
    src = []
    for s in np.atleast_1d(np.asarray(sources, dtype=object)):
        if np.isscalar(s) or isinstance(s, (int, np.integer)):
            src.append(int(s))
        else:
            src.append(grid.ravel_index(tuple(int(v) for v in np.asarray(s).ravel())))
    return np.unique(np.asarray(src, dtype=int))


def ball(df, radius):
    """Boolean node mask of the closed ball {d <= radius}; monotone in radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return df.values <= radius


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    argmax_index: tuple
    n_pairs: int
    grad_norm_max: float


def lipschitz_lower_bound(sym, df, test_fn, tol=1e-6):
    """Check the pairing between symbol-Lipschitz functions and the distance.

    ``test_fn`` is a scalar field whose symbol gradient norm must not exceed
    1 + tol anywhere (finite differences supply the gradient).  Verifies
    min_{x in sources} |f(x) - f(y)| <= (1 + tol) d(y) on every finite-distance
    node and reports the largest achieved ratio, a certified lower bound on
    the quality of the distance field.
    """
    grid = df.grid
    if test_fn.grid != grid:
        raise ValueError("test function must live on the distance field's grid")
    f = test_fn.values
    grads = np.stack(
        [_fd.diff_clamped(f, axis=j, h=grid.spacing[j]) for j in range(grid.ndim)], axis=-1
    )
    coords = grid.node_coords()
    p = seminorm(sym, coords.reshape(-1, grid.ndim), grads.reshape(-1, grid.ndim))
    gmax = float(np.max(p))
    if gmax > 1.0 + tol:
        raise ValueError(
            f"test function violates the unit symbol-gradient constraint (max {gmax:.6g})"
        )
    src_vals = f.reshape(-1)[df.sources]
    d = df.values.reshape(-1)
    finite = np.isfinite(d) & (d > 0)
    diffs = np.abs(f.reshape(-1)[finite][None, :] - src_vals[:, None]).min(axis=0)
    ratios = diffs / d[finite]
    bad = ratios > 1.0 + tol
    if np.any(bad):
        worst = np.nonzero(finite)[0][np.argmax(ratios)]
        raise AssertionError(
            f"Lipschitz bound violated at node {np.unravel_index(worst, grid.dims)}: "
            f"ratio {float(np.max(ratios)):.6g}"
        )
    arg = int(np.nonzero(finite)[0][np.argmax(ratios)]) if np.any(finite) else 0
    return LipschitzReport(
        max_ratio=float(np.max(ratios)) if np.any(finite) else 0.0,
        argmax_index=tuple(np.unravel_index(arg, grid.dims)),
        n_pairs=int(np.count_nonzero(finite)),
        grad_norm_max=gmax,
    )
