"""Friedrichs mollifiers on grid fields and the commutator decay checks.

The kernel is a rescaled unit-mass bump supported in the closed ball of
radius epsilon; discretely its weights are renormalised so smoothing a
constant reproduces it exactly away from the boundary margin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .fields import Field
from .symbol import apply_operator


class MarginError(ValueError):
    """The compact set sits too close to the working window for the kernel."""


class UnderResolvedKernelError(ValueError):
    """epsilon smaller than two grid cells in strict mode."""


def radial_bump(y):
    """exp(-1/(1-|y|^2)) inside the unit ball, exactly zero outside."""
    y = np.asarray(y, dtype=float)
    r2 = np.sum(y * y, axis=-1)
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    with np.errstate(over="ignore", under="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


class MollifierKernel:
    """Bump profile plus its discrete renormalised stencils.

    ``profile`` maps points shaped (..., n) to nonnegative values, has unit
    ball support and (after discrete renormalisation) unit mass.
    """

    def __init__(self, profile=None):
        self.profile = profile if profile is not None else radial_bump

    def weights(self, grid, eps):
        """Discrete stencil: offsets o with |o * spacing| < eps, mass exactly 1."""
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        half = [int(np.floor(eps / h)) for h in grid.spacing]
        axes = [np.arange(-k, k + 1) for k in half]
        if all(k == 0 for k in half):
            axes = [np.zeros(1, dtype=int)] * grid.ndim
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        pts = mesh * grid.spacing / eps
        w = self.profile(pts)
        if np.any(w < 0):
            raise ValueError("kernel profile must be nonnegative")
        total = _accumulate(w)
        if total <= 0:
            raise ValueError("kernel has no mass at this resolution")
        w = w / total
        # drive the accumulation-order mass to exactly 1 so constants survive
        for _ in range(4):
            s = _accumulate(w)
            if s == 1.0:
                break
            w = w / s
        offsets = mesh.reshape(-1, grid.ndim)
        return offsets, w.reshape(-1)


def _accumulate(w):
    """Sequential sum in flat order; the convolution accumulates the same way."""
    total = 0.0
    for v in w.reshape(-1):
        total += v
    return total


def _convolve(values, offsets, weights, ndim):
    """Zero-padded stencil convolution, sequential over offsets.

    Keeps exact zeros outside the dilated support and reproduces the
    renormalised mass bit-for-bit on constants.
    """
    pad = [(int(np.max(np.abs(offsets[:, j]))),) * 2 for j in range(ndim)]
    pad += [(0, 0)] * (values.ndim - ndim)
    padded = np.pad(values, pad)
    out = np.zeros_like(values)
    dims = values.shape[:ndim]
    for off, w in zip(offsets, weights):
        if w == 0.0:
            continue
        sl = tuple(
            slice(pad[j][0] - off[j], pad[j][0] - off[j] + dims[j]) for j in range(ndim)
        )
        out += w * padded[sl]
    return out


def mollify(kernel, f, eps, strict=False):
    """Smooth a field by the discrete kernel at scale ``eps``.

    Support grows by at most eps plus one cell; the smoothed field never
    exceeds the original in the L^p sense on fixed compacta.  Warns (or
    raises, with ``strict``) when eps is under-resolved (< 2 cells).
    """
    grid = f.grid
    if eps < 2.0 * float(np.max(grid.spacing)):
        msg = f"epsilon {eps} spans fewer than two grid cells; kernel is under-resolved"
        if strict:
            raise UnderResolvedKernelError(msg)
        warnings.warn(msg, stacklevel=2)
    offsets, w = kernel.weights(grid, eps)
    return Field(grid, f.kind, _convolve(f.values, offsets, w, grid.ndim))


def commutator_apply(sym, kernel, f, eps, strict=False):
    """[D, J_eps] f = D (J_eps f) - J_eps (D f), with centered differences for D.

    Vanishes identically for translation-invariant operators up to rounding,
    and decays in L^p_loc as eps shrinks for smooth coefficients.
    """
    from .fields import KIND_VECTOR

    if f.grid != sym.grid:
        raise ValueError("field and symbol must share a grid")
    vals = f.values if f.values.ndim == sym.n + 1 else f.values[..., None]
    jf = mollify(kernel, Field(sym.grid, KIND_VECTOR, vals), eps, strict=strict)
    d_jf = apply_operator(sym, jf.values)
    df = apply_operator(sym, vals)
    j_df = mollify(kernel, Field(sym.grid, KIND_VECTOR, df), eps, strict=strict)
    return Field(sym.grid, KIND_VECTOR, d_jf - j_df.values)


@dataclass(frozen=True)
class UpperBoundRecord:
    eps: float
    sup_inner: float
    esssup_window: float
    gap: float


@dataclass(frozen=True)
class UpperBoundReport:
    records: tuple
    slack_nonincreasing: bool


def seminorm_upper_bound_check(gauge, kernel, f, eps_sequence, K, W, tol=1e-9):
    """Check sup_K gauge(J_eps f) against esssup_W gauge(f) along shrinking eps.

    ``gauge`` maps field values (batched) to nonnegative reals and is taken
    convex in the value (the Euclidean fibre norm when None); Jensen then
    bounds the mollified gauge by the windowed essential sup, up to a slack
    that must not grow as eps decreases.  ``K`` and ``W`` are boolean node
    masks with K inside W by a margin of at least max(eps).
    """
    grid = f.grid
    K = np.asarray(K, dtype=bool)
    W = np.asarray(W, dtype=bool)
    if K.shape != grid.dims or W.shape != grid.dims:
        raise ValueError("K and W must be boolean node masks on the field's grid")
    if not np.all(W[K]):
        raise ValueError("K must be contained in W")
    eps_sequence = [float(e) for e in eps_sequence]
    if any(b >= a for a, b in zip(eps_sequence, eps_sequence[1:])):
        raise ValueError("eps_sequence must be strictly decreasing")
    coords = grid.node_coords().reshape(-1, grid.ndim)
    outside = coords[~W.reshape(-1)]
    if outside.shape[0]:
        margin = float(cKDTree(outside).query(coords[K.reshape(-1)])[0].min())
        if margin <= max(eps_sequence):
            raise MarginError(
                f"margin {margin:.4g} between K and the window boundary is below max eps"
            )

    if gauge is None:
        def gauge(values):
            flat = values.reshape(values.shape[: grid.ndim] + (-1,))
            return np.linalg.norm(flat, axis=-1)

    base = gauge(f.values)
    ess = float(np.max(base[W]))
    records = []
    for eps in eps_sequence:
        jf = mollify(kernel, f, eps)
        sup = float(np.max(gauge(jf.values)[K]))
        records.append(UpperBoundRecord(eps=eps, sup_inner=sup, esssup_window=ess,
                                        gap=sup - ess))
    slacks = [max(r.gap, 0.0) for r in records]
    monotone = all(b <= a + tol for a, b in zip(slacks, slacks[1:]))
    if not monotone:
        raise AssertionError(f"upper-bound slack grew along the eps sequence: {slacks}")
    return UpperBoundReport(records=tuple(records), slack_nonincreasing=monotone)
