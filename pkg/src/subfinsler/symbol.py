"""Symbol seminorms of first-order operators and their dual extended norms.

A first-order operator D f = sum_j a_j d_j f + b f is represented by its
coefficient matrices over a grid.  The induced seminorm on covectors is the
operator norm of xi -> sum_j xi_j a_j(x); its dual on tangent vectors is an
extended norm that is genuinely infinite in directions no unit covector
reaches.  Kernel detection, formal adjoints, self-adjoint doubling and the
Riemannian approximant family live here too.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import _fd
from .fields import (
    KIND_MATRIX,
    KIND_SCALAR,
    DomainError,
    ExtReal,
    Field,
    Grid,
    load_field,
    save_field,
)


class RefinementError(RuntimeError):
    """Dual-norm refinement failed; carries the best lower bound found."""

    def __init__(self, message, lower_bound):
        super().__init__(message)
        self.lower_bound = lower_bound


class SymbolField:
    """Coefficients of a first-order operator on a grid.

    ``a_values`` has shape ``(n, *dims, s, r)`` and ``b_values`` shape
    ``(*dims, s, r)``: the operator maps sections with fibre C^r to sections
    with fibre C^s.  An optional ``coeff_fn`` supplies exact off-node
    coefficients; without it, sampling interpolates multilinearly.

    ``coeff_fn(points)`` takes points shaped ``(..., n)`` and must return
    ``(a, b)`` with shapes ``(..., n, s, r)`` and ``(..., s, r)``; it should
    accept points slightly outside the grid box (finite differencing of
    coefficients probes there).
    """

    __slots__ = ("grid", "r", "s", "a_values", "b_values", "coeff_fn", "constant")

    def __init__(self, grid, a_values, b_values=None, coeff_fn=None, constant=False):
        self.grid = grid
        a_values = np.asarray(a_values, dtype=complex)
        n = grid.ndim
        if a_values.ndim != n + 3 or a_values.shape[0] != n or a_values.shape[1:n + 1] != grid.dims:
            raise ValueError("a_values must have shape (n, *dims, s, r)")
        s, r = a_values.shape[-2:]
        if b_values is None:
            b_values = np.zeros(grid.dims + (s, r), dtype=complex)
        b_values = np.asarray(b_values, dtype=complex)
        if b_values.shape != grid.dims + (s, r):
            raise ValueError("b_values must have shape (*dims, s, r)")
        if not (np.all(np.isfinite(a_values)) and np.all(np.isfinite(b_values))):
            raise ValueError("symbol coefficients must be finite")
        self.r = int(r)
        self.s = int(s)
        self.a_values = a_values
        self.b_values = b_values
        self.a_values.setflags(write=False)
        self.b_values.setflags(write=False)
        self.coeff_fn = coeff_fn
        # constant-coefficient symbols let pointwise quantities be evaluated once
        self.constant = bool(constant)

    @property
    def n(self):
        return self.grid.ndim

    @classmethod
    def from_function(cls, grid, coeff_fn, constant=False):
        """Materialise node coefficients from an analytic coefficient map."""
        a, b = coeff_fn(grid.node_coords())
        a = np.moveaxis(np.asarray(a, dtype=complex), -3, 0)
        return cls(grid, a, np.asarray(b, dtype=complex), coeff_fn=coeff_fn, constant=constant)

    def coeffs(self, points):
        """First- and zeroth-order coefficients at ``points`` shaped (..., n).

        Returns ``(a, b)`` with shapes ``(..., n, s, r)`` and ``(..., s, r)``.
        Uses the analytic map when present, multilinear interpolation otherwise.
        """
        points = np.asarray(points, dtype=float)
        if self.coeff_fn is not None:
            a, b = self.coeff_fn(points)
            return np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
        if not np.all(self.grid.contains(points)):
            raise DomainError("point outside the grid bounding box")
        stacked = np.moveaxis(self.a_values, 0, -3)  # (*dims, n, s, r)
        both = np.concatenate([stacked, self.b_values[..., None, :, :]], axis=-3)
        f = Field(self.grid, KIND_MATRIX, both.reshape(self.grid.dims + ((self.n + 1) * self.s, self.r)))
        vals = f.sample(points).reshape(points.shape[:-1] + (self.n + 1, self.s, self.r))
        return vals[..., : self.n, :, :], vals[..., self.n, :, :]

    def a_fields(self):
        return [Field(self.grid, KIND_MATRIX, self.a_values[j]) for j in range(self.n)]

    def b_field(self):
        return Field(self.grid, KIND_MATRIX, self.b_values)

    def save(self, directory):
        """Write the coefficient bundle: one binary field per a_j plus b and a manifest."""
        os.makedirs(directory, exist_ok=True)
        files = {}
        for j, f in enumerate(self.a_fields()):
            name = f"a{j}.sfpf"
            save_field(f, os.path.join(directory, name))
            files[f"a{j}"] = name
        save_field(self.b_field(), os.path.join(directory, "b.sfpf"))
        files["b"] = "b.sfpf"
        manifest = {"n": self.n, "r": self.r, "s": self.s, "files": files}
        with open(os.path.join(directory, "symbol.json"), "w") as fh:
            json.dump(manifest, fh, indent=2)

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "symbol.json")) as fh:
            manifest = json.load(fh)
        n = manifest["n"]
        a_fields = [load_field(os.path.join(directory, manifest["files"][f"a{j}"])) for j in range(n)]
        b = load_field(os.path.join(directory, manifest["files"]["b"]))
        a = np.stack([f.values for f in a_fields], axis=0)
        return cls(a_fields[0].grid, a, b.values)


def operator_norm(mat):
    """Largest singular value, batched over leading axes.

    Rank-one shapes reduce to vector norms; exactly diagonal square matrices
    reduce to the largest diagonal modulus (this keeps constant-coefficient
    gauges bit-exact); anything else goes through SVD.
    """
    mat = np.asarray(mat)
    s, r = mat.shape[-2:]
    if s == 1 or r == 1:
        flat = mat.reshape(mat.shape[:-2] + (s * r,))
        return np.linalg.norm(flat, axis=-1)
    if s == r:
        eye = np.eye(s, dtype=bool)
        off = np.abs(mat[..., ~eye])
        diag_mask = np.all(off == 0.0, axis=-1)
        if np.all(diag_mask):
            return np.max(np.abs(mat[..., eye]), axis=-1)
        out = np.empty(mat.shape[:-2])
        out[diag_mask] = np.max(np.abs(mat[..., eye][diag_mask]), axis=-1)
        rest = ~diag_mask
        if np.any(rest):
            out[rest] = np.linalg.svd(mat[rest], compute_uv=False)[..., 0]
        return out
    return np.linalg.svd(mat, compute_uv=False)[..., 0]


def seminorm(sym, x, xi):
    """Symbol seminorm P(x, xi): operator norm of sum_j xi_j a_j(x).

    Batched over leading axes of ``x``/``xi`` (broadcast together).  Positively
    homogeneous and subadditive in ``xi``.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    x, xi = np.broadcast_arrays(x, xi)
    a, _ = sym.coeffs(x)
    sigma = np.einsum("...j,...jsr->...sr", xi, a)
    out = operator_norm(sigma)
    return float(out) if out.ndim == 0 else out


def _stacked_map(a):
    """Real matrix of xi -> vec(sum_j xi_j a_j), shape (..., 2*s*r, n)."""
    n = a.shape[-3]
    sr = a.shape[-2] * a.shape[-1]
    cols = np.moveaxis(a, -3, -1).reshape(a.shape[:-3] + (sr, n))
    return np.concatenate([cols.real, cols.imag], axis=-2)


@dataclass(frozen=True)
class KernelDecomposition:
    """Orthonormal split of covector space at a point.

    ``Z_basis`` spans the null directions of xi -> sum_j xi_j a_j(x) (rows);
    ``F_basis`` spans the orthogonal complement, which under the Euclidean
    pairing is the annihilator carrying the finite dual directions.
    """

    x: np.ndarray
    Z_basis: np.ndarray
    F_basis: np.ndarray


def kernel_decomposition(sym, x, tol_zero=1e-10):
    """Split covectors at ``x`` into seminorm kernel and its complement."""
    x = np.asarray(x, dtype=float)
    a, _ = sym.coeffs(x)
    J = _stacked_map(a)
    _, S, Vt = np.linalg.svd(J, full_matrices=True)
    n = sym.n
    sig = np.zeros(n)
    sig[: S.shape[-1]] = S
    smax = sig[0] if sig.size else 0.0
    finite = sig > tol_zero * smax if smax > 0 else np.zeros(n, dtype=bool)
    return KernelDecomposition(x=x, Z_basis=Vt[~finite], F_basis=Vt[finite])


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(fn, lo, hi, iters=60):
    """Vectorised golden-section maximisation over brackets [lo, hi]."""
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = fn(x1)
    f2 = fn(x2)
    best = np.maximum(f1, f2)
    for _ in range(iters):
        take_left = f1 >= f2
        hi = np.where(take_left, x2, hi)
        lo = np.where(take_left, lo, x1)
        x1 = hi - _INVPHI * (hi - lo)
        x2 = lo + _INVPHI * (hi - lo)
        f1 = fn(x1)
        f2 = fn(x2)
        best = np.maximum(best, np.maximum(f1, f2))
    return best


def _pairing_ratio(eta, v, denom):
    """|<eta, v>| / denom, summed and divided in extended precision.

    The extra bits keep a computed ratio from rounding above its true value,
    which matters when shortest-path sums are checked with zero tolerance.
    """
    num = np.abs(np.einsum("...n,...n->...", eta.astype(np.longdouble), v.astype(np.longdouble)))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / denom.astype(np.longdouble)
    return np.where(denom > 0, out, 0.0).astype(float)


def _dual_sweep_2d(a, V, inv_sig, v, n_sweep, refine_iters):
    """Whitened direction sweep + golden refinement, dim F == 2.

    ``V`` holds the two finite right-singular directions (batch, 2, n) and
    ``inv_sig`` their inverse singular values; sweeping the whitened circle
    bounds the anisotropy of the ratio, so a fixed sweep resolves even badly
    scaled symbols.
    """

    def ratio(theta):
        zeta = np.stack([np.cos(theta), np.sin(theta)], axis=-1)  # (batch, ..., 2)
        coef = zeta * inv_sig[(...,) + (None,) * (zeta.ndim - 2) + (slice(None),)]
        eta = np.einsum("...i,...in->...n", coef, V[(slice(None),) + (None,) * (zeta.ndim - 2)])
        sigma = np.einsum("...n,...nsr->...sr", eta, a[(slice(None),) + (None,) * (zeta.ndim - 2)])
        denom = operator_norm(sigma)
        return _pairing_ratio(eta, v[(slice(None),) + (None,) * (zeta.ndim - 2)], denom)

    batch = a.shape[0]
    thetas = np.linspace(0.0, np.pi, n_sweep, endpoint=False)  # ratio is even in eta
    vals = ratio(np.broadcast_to(thetas, (batch, n_sweep)))
    arg = np.argmax(vals, axis=-1)
    coarse = vals[np.arange(batch), arg]
    step = np.pi / n_sweep
    refined = _golden_max(ratio, thetas[arg] - step, thetas[arg] + step, iters=refine_iters)
    best = np.maximum(coarse, refined)
    if not np.all(np.isfinite(best)):
        raise RefinementError("dual norm refinement produced non-finite values", np.nanmax(coarse))
    return best


def _dual_ascent(a, V, inv_sig, v, n_starts, refine_iters, seed=0):
    """Multi-start ascent on the whitened sphere, dim F >= 3 (single point).

    Cyclic two-plane golden searches from deterministic plus seeded random
    starts; guards against flat facets of non-strictly-convex unit balls.
    """
    k = V.shape[0]

    def ratio_of(zeta):
        coef = zeta * inv_sig
        eta = coef @ V
        sigma = np.einsum("n,nsr->sr", eta, a)
        denom = operator_norm(sigma[None])[0]
        if denom == 0:
            return 0.0
        return abs(float(eta @ v)) / denom

    rng = np.random.default_rng(seed)
    starts = [np.eye(k)[i] for i in range(k)]
    w = np.array([float(row @ v) for row in V]) * inv_sig
    if np.linalg.norm(w) > 0:
        starts.append(w / np.linalg.norm(w))
        starts.append(np.sign(w) / np.sqrt(k))
    for _ in range(n_starts):
        z = rng.normal(size=k)
        starts.append(z / np.linalg.norm(z))

    best = 0.0
    for z0 in starts:
        z = z0.copy()
        val = ratio_of(z)
        for _ in range(24):
            improved = False
            for axis in range(k):
                u = np.zeros(k)
                u[axis] = 1.0
                u -= (u @ z) * z
                nu = np.linalg.norm(u)
                if nu < 1e-12:
                    continue
                u /= nu

                def line(phi, z=z, u=u):
                    zz = np.cos(phi)[..., None] * z + np.sin(phi)[..., None] * u
                    return np.array([ratio_of(p) for p in np.atleast_2d(zz)]).reshape(np.shape(phi))

                phis = np.linspace(-np.pi / 2, np.pi / 2, 33)
                lv = line(phis)
                i = int(np.argmax(lv))
                span = phis[1] - phis[0]
                ref = _golden_max(line, np.array([phis[i] - span]), np.array([phis[i] + span]),
                                  iters=refine_iters)[0]
                phi_best = phis[i]
                cand = max(lv[i], ref)
                if cand > val * (1.0 + 1e-12):
                    # re-locate the maximiser coarsely, then move there
                    fine = np.linspace(phi_best - span, phi_best + span, 65)
                    fv = line(fine)
                    j = int(np.argmax(fv))
                    z = np.cos(fine[j]) * z + np.sin(fine[j]) * u
                    z /= np.linalg.norm(z)
                    val = max(cand, fv[j])
                    improved = True
            if not improved:
                break
        best = max(best, val)
    return best


def dual_norm_batch(sym, points, vs, tol=1e-9, tol_zero=1e-10,
                    n_sweep=720, n_starts=32, refine_iters=60, chunk=2048):
    """Dual extended norm P*(x, v) for batched points/vectors.

    Returns a float array with ``np.inf`` where ``v`` has a component outside
    the finite subspace (relative size > ``tol``).  Finite values come from a
    direction sweep in SVD-whitened covector coordinates plus golden-section
    refinement (n = 2) or multi-start spherical ascent (n >= 3).
    """
    points = np.asarray(points, dtype=float)
    vs = np.asarray(vs, dtype=float)
    points, vs = np.broadcast_arrays(points, vs)
    shape = points.shape[:-1]
    pts = points.reshape(-1, sym.n)
    v = vs.reshape(-1, sym.n).copy()
    if sym.constant and pts.shape[0] > 1:
        # the dual depends only on v; evaluate once per distinct vector
        uniq, inverse = np.unique(v, axis=0, return_inverse=True)
        rep = np.broadcast_to(pts[0], uniq.shape)
        vals = dual_norm_batch(sym, rep, uniq, tol=tol, tol_zero=tol_zero, n_sweep=n_sweep,
                               n_starts=n_starts, refine_iters=refine_iters, chunk=chunk)
        return np.atleast_1d(vals)[inverse].reshape(shape)
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, min(start + chunk, pts.shape[0]))
        out[sl] = _dual_chunk(sym, pts[sl], v[sl], tol, tol_zero, n_sweep, n_starts, refine_iters)
    return out.reshape(shape)


def _dual_chunk(sym, pts, v, tol, tol_zero, n_sweep, n_starts, refine_iters):
    n = sym.n
    a, _ = sym.coeffs(pts)
    J = _stacked_map(a)
    _, S, Vt = np.linalg.svd(J, full_matrices=True)
    B = pts.shape[0]
    sig = np.zeros((B, n))
    sig[:, : S.shape[-1]] = S
    smax = sig[:, 0]
    finite = np.zeros((B, n), dtype=bool)
    pos = smax > 0
    finite[pos] = sig[pos] > tol_zero * smax[pos, None]

    vnorm = np.linalg.norm(v, axis=-1)
    out = np.zeros(B)
    zero_v = vnorm == 0

    # component of v outside the finite subspace -> infinite dual norm
    proj = np.einsum("bkn,bn->bk", Vt, v)
    proj_f = np.where(finite, proj, 0.0)
    v_f = np.einsum("bk,bkn->bn", proj_f, Vt)
    off = np.linalg.norm(v - v_f, axis=-1)
    infinite = (~zero_v) & (off > tol * vnorm)
    out[infinite] = np.inf

    todo = (~zero_v) & (~infinite)
    dims = finite.sum(axis=1)
    out[todo & (dims == 0)] = np.inf  # zero seminorm, nonzero vector

    for k in np.unique(dims[todo]):
        if k == 0:
            continue
        mask = todo & (dims == k)
        idx = np.nonzero(mask)[0]
        Vf = np.stack([Vt[i][finite[i]] for i in idx])            # (g, k, n)
        sf = np.stack([sig[i][finite[i]] for i in idx])           # (g, k)
        if k == 1:
            eta = Vf[:, 0, :]
            denom = operator_norm(np.einsum("gn,gnsr->gsr", eta, a[idx]))
            out[idx] = _pairing_ratio(eta, v[idx], denom)
        elif k == 2:
            out[idx] = _dual_sweep_2d(a[idx], Vf, 1.0 / sf, v[idx], n_sweep, refine_iters)
        else:
            for pos_i, i in enumerate(idx):
                out[i] = _dual_ascent(a[i], Vf[pos_i], 1.0 / sf[pos_i], v[i],
                                      n_starts, refine_iters)

    # canonical candidate directions: v itself and its sign pattern hit the
    # kinks of polyhedral gauges exactly (any direction is a valid lower bound)
    idx = np.nonzero(todo & (dims > 0))[0]
    if idx.size:
        for eta in (v[idx], np.sign(v[idx])):
            denom = operator_norm(np.einsum("gn,gnsr->gsr", eta, a[idx]))
            out[idx] = np.maximum(out[idx], _pairing_ratio(eta, v[idx], denom))
    return out


def dual_norm(sym, x, v, tol=1e-9, tol_zero=1e-10):
    """Dual extended norm at a single point; returns an :class:`ExtReal`."""
    val = dual_norm_batch(sym, np.asarray(x, dtype=float), np.asarray(v, dtype=float),
                          tol=tol, tol_zero=tol_zero)
    return ExtReal(float(val))


def _node_coeff_arrays(sym):
    """(a, b) node arrays shaped ((n, *dims, s, r), (*dims, s, r))."""
    return sym.a_values, sym.b_values


def formal_adjoint(sym):
    """Formal adjoint under Lebesgue measure and the standard fibre products.

    The first-order coefficients become -a_j* and the zeroth-order one
    b* - sum_j d_j(a_j*), with second-order central differences (one-sided at
    the grid boundary) supplying the coefficient derivatives.
    """
    grid = sym.grid
    if any(d < 3 for d in grid.dims):
        raise ValueError("adjoint needs dims >= 3 on every axis to difference coefficients")
    a, b = _node_coeff_arrays(sym)
    a_star = np.conj(np.swapaxes(a, -1, -2))          # (n, *dims, r, s)
    div = np.zeros_like(a_star[0])
    for j in range(sym.n):
        div += _fd.diff_clamped(a_star[j], axis=j, h=grid.spacing[j])
    b_adj = np.conj(np.swapaxes(b, -1, -2)) - div

    coeff_fn = None
    if sym.coeff_fn is not None:
        orig = sym.coeff_fn
        h = grid.spacing

        def coeff_fn(points, _orig=orig, _h=h, _n=sym.n):
            points = np.asarray(points, dtype=float)
            a_p, b_p = _orig(points)
            a_p = np.asarray(a_p, dtype=complex)
            adj_a = -np.conj(np.swapaxes(a_p, -1, -2))
            div_p = 0.0
            for j in range(_n):
                e = np.zeros(_n)
                e[j] = _h[j]
                ap, _ = _orig(points + e)
                am, _ = _orig(points - e)
                ap = np.conj(np.swapaxes(np.asarray(ap, dtype=complex)[..., j, :, :], -1, -2))
                am = np.conj(np.swapaxes(np.asarray(am, dtype=complex)[..., j, :, :], -1, -2))
                div_p = div_p + (ap - am) / (2.0 * _h[j])
            adj_b = np.conj(np.swapaxes(np.asarray(b_p, dtype=complex), -1, -2)) - div_p
            return adj_a, adj_b

    return SymbolField(grid, -a_star, b_adj, coeff_fn=coeff_fn)


def double(sym):
    """Formally self-adjoint doubling (f, g) -> (D+ g, D f) on fibre r + s.

    Shares the seminorm of ``sym`` at every point and is fixed by
    :func:`formal_adjoint` up to finite-difference error.
    """
    adj = formal_adjoint(sym)
    grid = sym.grid
    r, s = sym.r, sym.s
    m = r + s
    a_dbl = np.zeros((sym.n,) + grid.dims + (m, m), dtype=complex)
    b_dbl = np.zeros(grid.dims + (m, m), dtype=complex)
    a_dbl[..., :r, r:] = adj.a_values
    a_dbl[..., r:, :r] = sym.a_values
    b_dbl[..., :r, r:] = adj.b_values
    b_dbl[..., r:, :r] = sym.b_values

    coeff_fn = None
    if sym.coeff_fn is not None and adj.coeff_fn is not None:
        f_orig, f_adj = sym.coeff_fn, adj.coeff_fn

        def coeff_fn(points, _fo=f_orig, _fa=f_adj, _r=r, _s=s):
            a_o, b_o = _fo(points)
            a_a, b_a = _fa(points)
            a_o = np.asarray(a_o, dtype=complex)
            b_o = np.asarray(b_o, dtype=complex)
            a_a = np.asarray(a_a, dtype=complex)
            b_a = np.asarray(b_a, dtype=complex)
            m = _r + _s
            a = np.zeros(a_o.shape[:-2] + (m, m), dtype=complex)
            b = np.zeros(b_o.shape[:-2] + (m, m), dtype=complex)
            a[..., :_r, _r:] = a_a
            a[..., _r:, :_r] = a_o
            b[..., :_r, _r:] = b_a
            b[..., _r:, :_r] = b_o
            return a, b

    return SymbolField(grid, a_dbl, b_dbl, coeff_fn=coeff_fn)


def apply_operator(sym, u, boundary="clamped", order=2):
    """Apply D to node values ``u`` shaped (*dims, r) by centered differences."""
    u = np.asarray(u, dtype=complex)
    grid = sym.grid
    if u.shape != grid.dims + (sym.r,):
        raise ValueError(f"section values must have shape {grid.dims + (sym.r,)}")
    a, b = _node_coeff_arrays(sym)
    out = np.einsum("...sr,...r->...s", b, u)
    for j in range(sym.n):
        if boundary == "periodic":
            du = _fd.diff_periodic(u, axis=j, h=grid.spacing[j], order=order)
        else:
            du = _fd.diff_clamped(u, axis=j, h=grid.spacing[j])
        out += np.einsum("...sr,...r->...s", a[j], du)
    return out


@dataclass(frozen=True)
class RiemannianApproximant:
    """One member of the metric family squeezing down onto the seminorm.

    ``G`` is a symmetric positive-definite matrix field on covectors whose
    norm majorises the seminorm everywhere; along ``omega`` (as the sharpness
    ``k`` grows) it approaches it.
    """

    omega: np.ndarray
    k: int
    base_scale: float
    psi: Field
    G: Field

    def norm(self, x, xi):
        """|xi|_G at points ``x`` (batched, multilinear between nodes)."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        Gx = self.G.sample(x)
        q = np.einsum("...i,...ij,...j->...", xi, Gx.real, xi)
        return np.sqrt(np.maximum(q, 0.0))


def _euclidean_domination_scale(sym, sweep=360, seed=0):
    """max over nodes and a direction sweep of P(unit xi); >=1 means rescale."""
    n = sym.n
    nodes = sym.grid.node_coords().reshape(-1, n)
    if n == 2:
        th = np.linspace(0.0, np.pi, sweep, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(sweep, n))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        dirs = np.concatenate([np.eye(n), dirs], axis=0)
    vals = seminorm(sym, nodes[:, None, :], dirs[None, :, :])
    return float(np.max(vals))


def riemannian_approximant(sym, omega, k, base_scale=None):
    """Build the metric G = (c psi)^2 (w w^T + 2^{2k}(I - w w^T)).

    ``psi = P(omega)/c + (3/2) 2^{-k}`` sits at the midpoint of the admissible
    band.  ``c`` rescales the background metric so it dominates the seminorm;
    it is measured automatically and equals 1 whenever P does not exceed the
    Euclidean norm (all gallery cases), reproducing the plain formula.
    """
    if k < 0:
        raise ValueError("sharpness k must be >= 0")
    omega = np.asarray(omega, dtype=float)
    nrm = np.linalg.norm(omega)
    if nrm == 0:
        raise ValueError("omega must be a nonzero covector")
    omega = omega / nrm
    grid = sym.grid
    n = sym.n
    if base_scale is None:
        c = _euclidean_domination_scale(sym)
        c = 1.0 if c <= 1.0 + 1e-9 else c * (1.0 + 1e-9)
    else:
        c = float(base_scale)
    nodes = grid.node_coords()
    p_omega = seminorm(sym, nodes.reshape(-1, n), omega[None, :]).reshape(grid.dims)
    psi = p_omega / c + 1.5 * 2.0 ** (-k)
    proj = np.outer(omega, omega)
    aniso = proj + (4.0 ** k) * (np.eye(n) - proj)
    G = (c * psi[..., None, None]) ** 2 * aniso
    return RiemannianApproximant(
        omega=omega,
        k=int(k),
        base_scale=c,
        psi=Field(grid, KIND_SCALAR, psi),
        G=Field(grid, KIND_MATRIX, G.astype(complex)),
    )
