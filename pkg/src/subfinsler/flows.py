"""Subunit vector fields, flows, Lie brackets, and flow-concatenation approximation.

The approximation routine follows a block construction: match each velocity
to the first field within a tolerance, re-anchor the matches at block start
points, rearrange increasingly inside each block, and integrate the resulting
schedule.  Its endpoint error obeys an explicit Gronwall-type bound that is
returned alongside the curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Curve
from .symbol import dual_norm_batch, operator_norm


class BoxExitError(RuntimeError):
    """A flow left the grid bounding box; carries the exit time."""

    def __init__(self, message, exit_time):
        super().__init__(message)
        self.exit_time = exit_time


class NoMatchingFieldError(ValueError):
    """No field approximates the curve velocity at some time."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class BoundExceededError(AssertionError):
    """Measured endpoint error exceeded the guaranteed bound."""


def as_callable(f):
    """Vector fields are callables (..., n) -> (..., n); grid fields wrap to one."""
    if callable(f):
        return f
    return lambda pts, _f=f: _f.sample(pts)


class VectorFieldSet:
    """A finite family of subunit candidate fields with measured regularity.

    The Lipschitz constant is the largest finite-difference Jacobian spectral
    norm over the grid; each field's subunit flag records whether its dual
    norm stays below 1 + tol at every node.
    """

    def __init__(self, sym, fields, tol=1e-6, names=None):
        self.sym = sym
        self.grid = sym.grid
        self.fields = [as_callable(f) for f in fields]
        if not self.fields:
            raise ValueError("need at least one field")
        self.names = list(names) if names else [f"X{k}" for k in range(len(self.fields))]
        nodes = self.grid.node_coords()
        flat = nodes.reshape(-1, self.grid.ndim)
        lips = 0.0
        self.subunit = []
        for fn in self.fields:
            vals = np.asarray(fn(nodes), dtype=float)
            jac = np.stack(
                [_grad_axis(vals, j, self.grid.spacing[j]) for j in range(self.grid.ndim)],
                axis=-1,
            )
            lips = max(lips, float(np.max(operator_norm(jac.astype(complex)))))
            duals = dual_norm_batch(sym, flat, vals.reshape(-1, self.grid.ndim))
            self.subunit.append(bool(np.all(duals <= 1.0 + tol)))
        self.lipschitz = lips

    def __len__(self):
        return len(self.fields)

    def __call__(self, k, pts):
        return np.asarray(self.fields[k](np.asarray(pts, dtype=float)), dtype=float)


def _grad_axis(vals, axis, h):
    from ._fd import diff_clamped

    return diff_clamped(vals, axis=axis, h=h)


def _rk4_steps(fn, x0, t0, duration, n_steps, grid=None):
    """Classical one-step integration; local error O(step^5)."""
    xs = [np.asarray(x0, dtype=float)]
    ts = [t0]
    x = xs[0]
    dt = duration / n_steps
    for i in range(n_steps):
        k1 = fn(x)
        k2 = fn(x + 0.5 * dt * k1)
        k3 = fn(x + 0.5 * dt * k2)
        k4 = fn(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * dt
        if grid is not None and not grid.contains(x):
            raise BoxExitError(f"flow left the grid box near t = {t:.6g}", exit_time=t)
        xs.append(x)
        ts.append(t)
    return ts, xs


def flow(X, x0, T, step, grid=None):
    """Flow curve of a vector field from ``x0`` over time ``T``.

    ``X`` is a callable or a grid-backed vector field; raises
    :class:`BoxExitError` if the trajectory leaves the box of ``grid`` (or of
    the field's own grid).
    """
    fn = as_callable(X)
    if grid is None and not callable(X):
        grid = X.grid
    if T <= 0 or step <= 0:
        raise ValueError("T and step must be positive")
    n_steps = max(1, int(np.ceil(T / step)))
    ts, xs = _rk4_steps(fn, x0, 0.0, T, n_steps, grid=grid)
    return Curve(ts, np.asarray(xs))


@dataclass(frozen=True)
class PiecewiseFlowCurve:
    """Concatenated flow segments: breakpoints, active field per piece, samples."""

    breakpoints: np.ndarray
    indices: np.ndarray
    curve: Curve
    diagnostics: dict = field(default_factory=dict)

    def export_csv(self, path):
        import csv

        idx_at = np.searchsorted(self.breakpoints[1:-1], self.curve.times, side="right")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{j}" for j in range(self.curve.n)] + ["field"])
            for i, t in enumerate(self.curve.times):
                piece = min(int(idx_at[i]), len(self.indices) - 1)
                w.writerow([t, *self.curve.points[i].tolist(), int(self.indices[piece])])


def _error_bound(L, T, N, eps, kappa, x_offset):
    """e^{LT} |x - start| + 2 (kappa T / N + eps / L) (e^{LT} - 1), stable as L -> 0."""
    if L > 1e-12:
        growth = np.expm1(L * T)
        return float(np.exp(L * T) * x_offset + 2.0 * (kappa * T / N + eps / L) * growth)
    # expm1(LT)/L -> T as L -> 0
    return float(x_offset + 2.0 * kappa * T / N * np.expm1(L * T) + 2.0 * eps * T)


def approx_by_flows(sym, gamma, fieldset, N, eps, x=None, kappa_samples=256):
    """Approximate a subunit curve by a piecewise flow curve of the field family.

    Selection: nu0 matches the curve velocity to the first field within
    ``eps`` (Euclidean); nu1 re-matches at the block anchors gamma(jd) with
    d = T/N; nu2 rearranges nu1 increasingly inside each block.  The returned
    bound is e^{LT}|x - gamma(0)| + 2(kappa T/N + eps/L)(e^{LT} - 1) with the
    measured Lipschitz constant L and the measured Euclidean-versus-dual
    comparison constant kappa over the traversed region; the endpoint error is
    checked against it before returning.
    """
    if not all(fieldset.subunit):
        bad = [fieldset.names[i] for i, ok in enumerate(fieldset.subunit) if not ok]
        raise ValueError(f"fields {bad} are not subunit for this symbol")
    T = gamma.duration
    if N < 1:
        raise ValueError("N must be >= 1")
    t0 = gamma.times[0]
    if x is None:
        x = gamma.points[0]
    x = np.asarray(x, dtype=float)
    d = T / N

    # pieces: curve segments cut at block boundaries, then capped at d/8
    cuts = np.union1d(gamma.times, t0 + d * np.arange(N + 1))
    refined = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        parts = max(1, int(np.ceil((b - a) / (d / 8.0))))
        refined.extend(np.linspace(a, b, parts + 1)[1:])
    cuts = np.asarray(refined)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    durations = np.diff(cuts)
    gamma_mid = gamma.at(mids)
    # segment velocity at each midpoint
    seg = np.clip(np.searchsorted(gamma.times, mids, side="right") - 1, 0, len(gamma.times) - 2)
    vel = gamma.velocities()[seg]

    n_fields = len(fieldset)
    field_at_mid = np.stack([fieldset(k, gamma_mid) for k in range(n_fields)])  # (K, P, n)
    dist0 = np.linalg.norm(field_at_mid - vel[None], axis=-1)                   # (K, P)
    ok0 = dist0 <= eps
    if not np.all(np.any(ok0, axis=0)):
        bad = int(np.argmin(np.any(ok0, axis=0)))
        raise NoMatchingFieldError(
            f"no field within eps={eps} of the velocity at t={mids[bad]:.6g} "
            f"(closest miss {float(dist0[:, bad].min()):.6g})",
            time=float(mids[bad]),
        )
    nu0 = np.argmax(ok0, axis=0)

    anchors = gamma.at(t0 + np.floor((mids - t0) / d) * d)
    field_at_anchor = np.stack([fieldset(k, anchors) for k in range(n_fields)])  # (K, P, n)
    ref = field_at_anchor[nu0, np.arange(len(mids))]
    dist1 = np.linalg.norm(field_at_anchor - ref[None], axis=-1)
    nu1 = np.argmax(dist1 <= eps, axis=0)  # the reference itself guarantees a match

    # increasing rearrangement of nu1 inside each block: sort the pieces by
    # field index, keeping each piece's duration attached (measure-preserving)
    block = np.clip(((mids - t0) / d).astype(int), 0, N - 1)
    nu2 = nu1.copy()
    durations = durations.copy()
    for j in range(N):
        sel = block == j
        order = np.argsort(nu1[sel], kind="stable")
        nu2[sel] = nu1[sel][order]
        durations[sel] = durations[sel][order]

    def integrate(substeps):
        pts = [x]
        ts = [0.0]
        cur = x
        for i in range(len(mids)):
            fn = fieldset.fields[nu2[i]]
            tt, xs = _rk4_steps(lambda p: np.asarray(fn(p), dtype=float), cur,
                                ts[-1], durations[i], substeps, grid=fieldset.grid)
            ts.extend(tt[1:])
            pts.extend(xs[1:])
            cur = xs[-1]
        return np.asarray(ts), np.asarray(pts)

    ts, pts = integrate(1)
    _, pts_half = integrate(2)
    integ_tol = float(np.linalg.norm(pts[-1] - pts_half[-1])) * (16.0 / 15.0) + 1e-12

    # kappa: max |v| / P*(v) over the traversed region, unit direction sweep
    lo = np.minimum(gamma.points.min(axis=0), pts.min(axis=0))
    hi = np.maximum(gamma.points.max(axis=0), pts.max(axis=0))
    nodes = sym.grid.node_coords().reshape(-1, sym.n)
    pad = 2.0 * np.asarray(sym.grid.spacing)
    inside = np.all((nodes >= lo - pad) & (nodes <= hi + pad), axis=-1)
    nodes = nodes[inside]
    if nodes.shape[0] > kappa_samples:
        stride = int(np.ceil(nodes.shape[0] / kappa_samples))
        nodes = nodes[::stride]
    angles = np.linspace(0.0, np.pi, 64, endpoint=False)
    if sym.n == 2:
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    else:
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(64, sym.n))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    duals = dual_norm_batch(sym, nodes[:, None, :], dirs[None, :, :])
    finite = np.isfinite(duals) & (duals > 0)
    if not np.any(finite):
        raise ValueError("no finite dual directions in the traversed region")
    kappa = float(1.0 / np.min(duals[finite]))

    L = fieldset.lipschitz
    bound = _error_bound(L, T, N, eps, kappa, float(np.linalg.norm(x - gamma.points[0])))
    endpoint_error = float(np.linalg.norm(pts[-1] - gamma.points[-1]))
    if endpoint_error > bound + integ_tol:
        raise BoundExceededError(
            f"endpoint error {endpoint_error:.6g} exceeds bound {bound:.6g} "
            f"(+ integrator tolerance {integ_tol:.2g})"
        )

    breakpoints = np.concatenate([[0.0], np.cumsum(durations)])
    pfc = PiecewiseFlowCurve(
        breakpoints=breakpoints,
        indices=nu2.copy(),
        curve=Curve(ts, pts),
        diagnostics={
            "endpoint_error": endpoint_error,
            "bound": bound,
            "kappa": kappa,
            "lipschitz": L,
            "integrator_tol": integ_tol,
            "nu0": nu0,
            "nu1": nu1,
            "block": block,
            "durations": durations,
        },
    )
    return pfc, bound


def lie_bracket(X, Y, x, h):
    """[X, Y](x) = (DY) X - (DX) Y with central-difference Jacobians, O(h^2)."""
    fx = as_callable(X)
    fy = as_callable(Y)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    shifts = np.eye(n) * h
    jx = np.stack([(np.asarray(fx(x + shifts[j])) - np.asarray(fx(x - shifts[j]))) / (2 * h)
                   for j in range(n)], axis=-1)
    jy = np.stack([(np.asarray(fy(x + shifts[j])) - np.asarray(fy(x - shifts[j]))) / (2 * h)
                   for j in range(n)], axis=-1)
    return jy @ np.asarray(fx(x), dtype=float) - jx @ np.asarray(fy(x), dtype=float)


def _bracket_callable(F, G, h):
    def b(pts, _F=F, _G=G, _h=h):
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        p = pts[None] if single else pts
        out = np.stack([lie_bracket(_F, _G, q, _h) for q in p.reshape(-1, p.shape[-1])])
        out = out.reshape(p.shape)
        return out[0] if single else out

    return b


def hoermander_rank(fields, x, depth, h, tol_rank=1e-6):
    """Rank of the span at ``x`` of all left-normed brackets up to ``depth``.

    Left-normed words [[..[X_i, X_j], ..], X_k] span every homogeneous bracket
    degree, so the numerical rank (threshold ``tol_rank`` relative to the top
    singular value) of their values decides the full condition.  Nondecreasing
    in depth by construction.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    base = [as_callable(f) for f in fields]
    x = np.asarray(x, dtype=float)
    words = list(base)
    values = [np.asarray(f(x), dtype=float) for f in base]
    current = list(base)
    for _ in range(2, depth + 1):
        nxt = []
        for w in current:
            for g in base:
                bw = _bracket_callable(w, g, h)
                nxt.append(bw)
                values.append(np.asarray(bw(x), dtype=float))
        current = nxt
        words.extend(nxt)
    mat = np.stack(values)
    sig = np.linalg.svd(mat, compute_uv=False)
    if sig.size == 0 or sig[0] == 0.0:
        return 0
    return int(np.count_nonzero(sig > tol_rank * sig[0]))
