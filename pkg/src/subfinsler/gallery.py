"""Canonical symbol constructors with documented ground truths.

Each constructor returns a :class:`GalleryEntry` whose ``truths`` record the
closed-form seminorm / dual norm / distance where one is known, so tests and
reports can check against them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fields import Grid
from .symbol import SymbolField


@dataclass(frozen=True)
class GalleryEntry:
    name: str
    params: dict
    symbol: SymbolField
    truths: dict = field(default_factory=dict)


def _constant_coeff_fn(a_const, b_const):
    a_const = np.asarray(a_const, dtype=complex)
    b_const = np.asarray(b_const, dtype=complex)

    def fn(points):
        points = np.asarray(points, dtype=float)
        batch = points.shape[:-1]
        a = np.broadcast_to(a_const, batch + a_const.shape)
        b = np.broadcast_to(b_const, batch + b_const.shape)
        return a, b

    return fn


def default_grid(n, dims=None, spacing=0.25, origin=None):
    """Centered cube grid used by the gallery when none is supplied."""
    if dims is None:
        dims = {1: 257, 2: 65, 3: 17}.get(n, 9)
    dims = (dims,) * n if np.isscalar(dims) else tuple(dims)
    spacing = (spacing,) * n if np.isscalar(spacing) else tuple(spacing)
    if origin is None:
        origin = tuple(-s * (d - 1) / 2 for s, d in zip(spacing, dims))
    return Grid(origin, spacing, dims)


def diagonal_shift(n, grid=None):
    """Componentwise shift operator: fibre C^n, a_j = i E_jj.

    Ground truths: P = sup norm of xi, P* = 1-norm of v, control distance the
    1-norm of the displacement.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid is None:
        grid = default_grid(n)
    if grid.ndim != n:
        raise ValueError("grid dimension must match n")
    a = np.zeros((n, n, n), dtype=complex)
    for j in range(n):
        a[j, j, j] = 1j
    fn = _constant_coeff_fn(np.moveaxis(a, 0, -3), np.zeros((n, n), dtype=complex))
    stacked = np.broadcast_to(a[(slice(None),) + (None,) * n], (n,) + grid.dims + (n, n))
    sym = SymbolField(grid, stacked.copy(), coeff_fn=fn, constant=True)
    return GalleryEntry(
        name="diagonal",
        params={"n": n},
        symbol=sym,
        truths={
            "seminorm": "max_j |xi_j|",
            "dual": "sum_j |v_j|",
            "distance": "l1",
        },
    )


def translate_solution(entry, u0, t):
    """Closed-form evolution of the diagonal shift operator at integer-cell times.

    Component j of the solution of du/dt = iD u is u_j translated by t along
    axis j; ``t`` must be an integer multiple of the spacing so the translate
    is again a node function.  ``u0`` has shape (*dims, n).
    """
    if entry.name != "diagonal":
        raise ValueError("translate_solution is the diagonal-shift ground truth")
    grid = entry.symbol.grid
    u0 = np.asarray(u0)
    out = np.empty_like(u0)
    for j in range(entry.symbol.r):
        cells = t / grid.spacing[j]
        k = int(round(cells))
        if abs(cells - k) > 1e-9:
            raise ValueError("t must be an integer number of cells for the exact translate")
        out[..., j] = np.roll(u0[..., j], k, axis=j)
    return out


def _sym_sqrt(mats):
    """Symmetric PSD square root, batched; raises if not positive definite."""
    w, Q = np.linalg.eigh(mats)
    if np.any(w <= 0):
        raise ValueError("metric must be positive definite at every node")
    return np.einsum("...ij,...j,...kj->...ik", Q, np.sqrt(w), Q)


def riemannian(n, metric=None, grid=None):
    """First-order system whose seminorm is the metric norm |xi|_G.

    ``metric`` may be a constant (n, n) SPD array or a callable
    points -> (..., n, n); identity by default.  Realised as the gradient-type
    operator f -> C grad f with C = G^(1/2), so the operator norm of the
    symbol is exactly the G-norm.
    """
    if grid is None:
        grid = default_grid(n)
    if grid.ndim != n:
        raise ValueError("grid dimension must match n")
    if metric is None:
        metric = np.eye(n)
    if callable(metric):
        metric_fn = metric
    else:
        const = np.asarray(metric, dtype=float)

        def metric_fn(points, _c=const):
            return np.broadcast_to(_c, np.shape(points)[:-1] + _c.shape)

    def coeff_fn(points, _m=metric_fn, _n=n):
        points = np.asarray(points, dtype=float)
        G = np.asarray(_m(points), dtype=float)
        C = _sym_sqrt(G)
        # a_j is the j-th column of C as an (n x 1) block
        a = np.swapaxes(C, -1, -2)[..., :, :, None].astype(complex)
        b = np.zeros(points.shape[:-1] + (_n, 1), dtype=complex)
        return a, b

    sym = SymbolField.from_function(grid, coeff_fn, constant=not callable(metric))
    return GalleryEntry(
        name="riemannian",
        params={"n": n},
        symbol=sym,
        truths={"seminorm": "|xi|_G"},
    )


def subriemannian(fields, grid):
    """Operator f -> (X_1 f, ..., X_r f) from vector fields (callables).

    Seminorm squared is the sum of |<X_j, xi>|^2; fields take points shaped
    (..., n) and return vectors of the same shape.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one vector field")
    n = grid.ndim

    def coeff_fn(points, _fields=fields, _n=n):
        points = np.asarray(points, dtype=float)
        rows = [np.asarray(f(points), dtype=float) for f in _fields]
        for row in rows:
            if row.shape != points.shape:
                raise ValueError("vector field output must match point shape")
        X = np.stack(rows, axis=-2)                    # (..., r_fields, n)
        a = np.swapaxes(X, -1, -2)[..., :, :, None].astype(complex)  # (..., n, r_fields, 1)
        b = np.zeros(points.shape[:-1] + (len(_fields), 1), dtype=complex)
        return a, b

    sym = SymbolField.from_function(grid, coeff_fn)
    return GalleryEntry(
        name="subriemannian",
        params={"r": len(fields)},
        symbol=sym,
        truths={"seminorm": "sqrt(sum_j <X_j, xi>^2)"},
    )


def stern_brocot_rationals(m):
    """First ``m`` rationals of (0, 1) in breadth-first mediant order.

    Deterministic enumeration 1/2, 1/3, 2/3, 1/4, 2/5, 3/5, 3/4, ...; used to
    anchor the rational interval family reproducibly.
    """
    out = []
    level = [(Fraction(0, 1), Fraction(1, 1))]
    while len(out) < m:
        nxt = []
        for lo, hi in level:
            mid = Fraction(lo.numerator + hi.numerator, lo.denominator + hi.denominator)
            out.append(mid)
            nxt.append((lo, mid))
            nxt.append((mid, hi))
        level = nxt
    return out[:m]


def interval_union_measure(intervals, window=None):
    """Exact measure of a union of open intervals, optionally clipped."""
    if window is not None:
        lo, hi = window
        intervals = [(max(a, lo), min(b, hi)) for a, b in intervals]
    intervals = sorted((a, b) for a, b in intervals if b > a)
    total = 0.0
    cur_lo, cur_hi = None, None
    for a, b in intervals:
        if cur_hi is None or a > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = a, b
        else:
            cur_hi = max(cur_hi, b)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def flat_bump(s):
    """exp(-1/(1-s^2)) on |s| < 1, exactly zero outside; vanishes to infinite order."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(s)
    d = 1.0 - s[inside] ** 2
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(-1.0 / d)
    return out


def grushin_rational(m, grid=None):
    """Degenerate structure whose vertical speed dies off the rational intervals.

    The control function u(x, y) = v(x) is a sum of flat bumps on the first
    ``m`` intervals ]q_k - 2^(-k-3), q_k + 2^(-k-3)[ around the Stern-Brocot
    rationals q_k of (0, 1).  The frame

        X = M e_x,   Y = u / (2 sqrt(1+u^2)) M e_y,
        M = [[2, -sqrt(3) u], [sqrt(3) u, 2]] / sqrt(4+3u^2),

    gives seminorm^2 = <xi, H xi> with
    H = [[4+u^2, 2 sqrt(3) u], [2 sqrt(3) u, 4 u^2]] / (4 (1+u^2)).

    Returns ``(entry, intervals)`` with the open interval list for exact
    measure computations.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    qs = stern_brocot_rationals(m)
    intervals = [(float(q) - 2.0 ** (-k - 3), float(q) + 2.0 ** (-k - 3)) for k, q in enumerate(qs)]

    def control(x):
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for (lo, hi) in intervals:
            mid = 0.5 * (lo + hi)
            rad = 0.5 * (hi - lo)
            total = total + flat_bump((x - mid) / rad)
        return total

    def frame(points):
        points = np.asarray(points, dtype=float)
        u = control(points[..., 0])
        s = np.sqrt(4.0 + 3.0 * u * u)
        X = np.stack([2.0 / s, np.sqrt(3.0) * u / s], axis=-1)
        c = u / (2.0 * np.sqrt(1.0 + u * u))
        Y = c[..., None] * np.stack([-np.sqrt(3.0) * u / s, 2.0 / s], axis=-1)
        return X, Y

    if grid is None:
        grid = Grid(origin=(-1.0, -1.0), spacing=(1.0 / 32.0, 1.0 / 32.0), dims=(97, 65))

    def coeff_fn(points, _frame=frame):
        points = np.asarray(points, dtype=float)
        X, Y = _frame(points)
        rows = np.stack([X, Y], axis=-2)                 # (..., 2, n)
        a = np.swapaxes(rows, -1, -2)[..., :, :, None].astype(complex)
        b = np.zeros(points.shape[:-1] + (2, 1), dtype=complex)
        return a, b

    sym = SymbolField.from_function(grid, coeff_fn)
    entry = GalleryEntry(
        name="grushin_rational",
        params={"m": m},
        symbol=sym,
        truths={
            "seminorm": "sqrt(<xi, H xi>), H = [[4+u^2, 2 sqrt3 u], [2 sqrt3 u, 4 u^2]]/(4(1+u^2))",
            "dual_horizontal": "2 where u != 0, 1 where u == 0",
            "dual_vertical": "infinite where u == 0",
            "length_unit_segment": "1 + |A_m cap [0,1]|",
        },
    )
    entry_control = control
    entry_frame = frame
    # expose the scalar control and frame for tests and reports
    object.__setattr__(entry, "control", entry_control)
    object.__setattr__(entry, "frame", entry_frame)
    return entry, intervals


def grushin_h_matrix(u):
    """The quadratic form H(u) whose Rayleigh quotient squares the seminorm."""
    u = np.asarray(u, dtype=float)
    H = np.empty(u.shape + (2, 2))
    H[..., 0, 0] = 4.0 + u * u
    H[..., 0, 1] = H[..., 1, 0] = 2.0 * np.sqrt(3.0) * u
    H[..., 1, 1] = 4.0 * u * u
    return H / (4.0 * (1.0 + u * u))[..., None, None]


GALLERY_BUILDERS = {
    "diagonal": lambda params: diagonal_shift(int(params.get("n", 2))),
    "riemannian": lambda params: riemannian(
        int(params.get("n", 2)),
        metric=np.asarray(params["metric"], dtype=float) if "metric" in params else None,
    ),
    "grushin_rational": lambda params: grushin_rational(int(params.get("m", 8)))[0],
}


def gallery_names():
    return sorted(GALLERY_BUILDERS)


def build(name, params=None):
    """Construct a gallery entry by name (CLI entry point)."""
    if name not in GALLERY_BUILDERS:
        raise KeyError(f"unknown gallery symbol {name!r}; known: {', '.join(gallery_names())}")
    return GALLERY_BUILDERS[name](params or {})
