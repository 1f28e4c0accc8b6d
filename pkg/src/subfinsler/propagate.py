"""Energy-preserving evolution du/dt = i D u and propagation-cone diagnostics.

The spatial operator is assembled in split form so it is exactly Hermitian
with respect to the discrete inner product (periodic wrap or zero extension);
multiplying by i gives an exactly skew-Hermitian generator, which is what
makes the discrete energy a conserved quantity up to the integrator's own
high-order dissipation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fd
from .fields import Field, KIND_VECTOR, save_field
from .symbol import apply_operator, double, formal_adjoint, seminorm


class CflError(ValueError):
    """Time step violates the stability bound; the message names the bound."""


class InstabilityError(RuntimeError):
    """Energy grew beyond the abort threshold during evolution."""


@dataclass(frozen=True)
class WaveState:
    """Complex section values on the grid at one time, with their energy."""

    t: float
    u: np.ndarray
    energy: float


class Trajectory:
    """Uniformly spaced recorded states with support diagnostics hooks."""

    def __init__(self, grid, states, dt):
        self.grid = grid
        self.states = list(states)
        self.dt = float(dt)
        ts = [s.t for s in self.states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("states must have strictly increasing times")

    def times(self):
        return np.array([s.t for s in self.states])

    def energies(self):
        return np.array([s.energy for s in self.states])

    def final(self):
        return self.states[-1]

    def save(self, directory, prefix="state"):
        """Field file per state plus a JSON manifest."""
        import json
        import os

        os.makedirs(directory, exist_ok=True)
        entries = []
        for i, st in enumerate(self.states):
            name = f"{prefix}_{i:05d}.sfpf"
            save_field(Field(self.grid, KIND_VECTOR, st.u), os.path.join(directory, name))
            entries.append({"t": st.t, "file": name, "energy": st.energy})
        with open(os.path.join(directory, "trajectory.json"), "w") as fh:
            json.dump({"dt": self.dt, "states": entries}, fh, indent=2)


def _energy(grid, u):
    return float(np.sum(np.abs(u) ** 2) * grid.cell_volume)


class SkewOperator:
    """i times a discretely Hermitian split-form assembly of a self-adjoint D."""

    def __init__(self, sym, boundary, order, a_nodes, m_nodes):
        self.sym = sym
        self.grid = sym.grid
        self.boundary = boundary
        self.order = order
        self._a = a_nodes
        self._m = m_nodes

    def apply(self, u):
        """A u = i D_h u; exactly skew-Hermitian: <Au, v> + <u, Av> = 0."""
        grid = self.grid
        out = np.einsum("...sr,...r->...s", self._m, u)
        for j in range(grid.ndim):
            h = grid.spacing[j]
            if self.boundary == "periodic":
                du = _fd.diff_periodic(u, axis=j, h=h, order=self.order)
                au = np.einsum("...sr,...r->...s", self._a[j], u)
                dau = _fd.diff_periodic(au, axis=j, h=h, order=self.order)
            else:
                du = _diff_zero_extended(u, j, h, self.order)
                au = np.einsum("...sr,...r->...s", self._a[j], u)
                dau = _diff_zero_extended(au, j, h, self.order)
            out += 0.5 * (np.einsum("...sr,...r->...s", self._a[j], du) + dau)
        return 1j * out

    def max_speed(self, sweep=180):
        """Max of the seminorm over nodes and unit directions (wave speed)."""
        n = self.grid.ndim
        nodes = self.grid.node_coords().reshape(-1, n)
        if n == 1:
            dirs = np.array([[1.0]])
        elif n == 2:
            th = np.linspace(0.0, np.pi, sweep, endpoint=False)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        else:
            rng = np.random.default_rng(0)
            dirs = rng.normal(size=(sweep, n))
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            dirs = np.concatenate([np.eye(n), dirs])
        if getattr(self.sym, "constant", False):
            nodes = nodes[:1]
        vals = seminorm(self.sym, nodes[:, None, :], dirs[None, :, :])
        return float(np.max(vals))

    def stability_dt(self):
        """Largest dt the classical fourth-order one-step scheme tolerates."""
        stencil = _fd.MAX_SYMBOL_ORDER4 if self.order == 4 else 1.0
        lam = sum(
            float(np.max(operator_norm_nodes(self._a[j]))) * stencil / self.grid.spacing[j]
            for j in range(self.grid.ndim)
        )
        lam += float(np.max(operator_norm_nodes(self._m)))
        return 2.8 / lam if lam > 0 else np.inf


def operator_norm_nodes(mats):
    from .symbol import operator_norm

    return operator_norm(mats)


def _diff_zero_extended(u, axis, h, order):
    """Centered differences against a zero extension (antisymmetric matrix)."""
    pad_width = [(0, 0)] * u.ndim
    k = 2 if order == 4 else 1
    pad_width[axis] = (k, k)
    up = np.pad(u, pad_width)
    du = _fd.diff_periodic(up, axis=axis, h=h, order=order)
    sl = [slice(None)] * u.ndim
    sl[axis] = slice(k, up.shape[axis] - k)
    return du[tuple(sl)]


def discretise_skew(sym, boundary="periodic", order=4, selfadj_tol=1e-8):
    """Assemble the skew-Hermitian generator of a formally self-adjoint symbol.

    Verifies self-adjointness on the grid interior first (pass the doubling of
    a general operator instead).  The split form a_j d_j + d_j a_j with the
    compensated zeroth-order term is Hermitian by construction, so i times it
    preserves the discrete energy exactly.
    """
    if boundary not in ("periodic", "zero"):
        raise ValueError("boundary must be 'periodic' or 'zero'")
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if sym.r != sym.s:
        raise ValueError("self-adjoint evolution needs equal fibre dimensions; "
                         "pass double(sym) for a general operator")
    adj = formal_adjoint(sym)
    interior = tuple(slice(1, -1) for _ in range(sym.n))
    scale = max(float(np.max(np.abs(sym.a_values))), float(np.max(np.abs(sym.b_values))), 1.0)
    da = float(np.max(np.abs(sym.a_values[(slice(None),) + interior] - adj.a_values[(slice(None),) + interior])))
    db = float(np.max(np.abs(sym.b_values[interior] - adj.b_values[interior])))
    if max(da, db) > selfadj_tol * scale:
        raise ValueError(
            f"symbol is not formally self-adjoint (coefficient mismatch {max(da, db):.3g}); "
            "pass double(sym)"
        )
    a = sym.a_values
    div = np.zeros_like(sym.b_values)
    for j in range(sym.n):
        if boundary == "periodic":
            div += _fd.diff_periodic(a[j], axis=j, h=sym.grid.spacing[j], order=order)
        else:
            div += _fd.diff_clamped(a[j], axis=j, h=sym.grid.spacing[j])
    m = sym.b_values - 0.5 * div
    m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))  # enforce Hermitian multiplier
    return SkewOperator(sym, boundary, order, a, m)


def evolve(op, u0, T, dt=None, record_every=None, cfl=2.0, instab_tol=0.01):
    """Fourth-order one-step evolution of du/dt = A u with energy monitoring.

    ``dt`` defaults to a quarter of the CFL time h_min / maxspeed; a dt above
    ``cfl`` times that CFL time (or above the scheme's stability bound) raises
    :class:`CflError`.  Aborts if the energy grows by more than ``instab_tol``
    relative.
    """
    grid = op.grid
    u = np.asarray(u0.u if isinstance(u0, WaveState) else u0, dtype=complex)
    if u.shape != grid.dims + (op.sym.r,):
        raise ValueError(f"initial state must have shape {grid.dims + (op.sym.r,)}")
    maxspeed = op.max_speed()
    hmin = float(np.min(grid.spacing))
    cfl_dt = hmin / maxspeed if maxspeed > 0 else np.inf
    if dt is None:
        dt = min(0.125 * cfl_dt, op.stability_dt())
    if dt > cfl * cfl_dt or dt > op.stability_dt():
        bound = min(cfl * cfl_dt, op.stability_dt())
        raise CflError(
            f"dt = {dt:.6g} violates the stability bound dt <= {bound:.6g} "
            f"(= min({cfl} * h/maxspeed, fourth-order stability limit))"
        )
    n_steps = max(1, int(np.ceil(T / dt - 1e-12)))
    dt = T / n_steps
    if record_every is None:
        record_every = max(1, n_steps // 64)
    e0 = _energy(grid, u)
    states = [WaveState(t=0.0, u=u.copy(), energy=e0)]
    for i in range(n_steps):
        k1 = op.apply(u)
        k2 = op.apply(u + 0.5 * dt * k1)
        k3 = op.apply(u + 0.5 * dt * k2)
        k4 = op.apply(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        e = _energy(grid, u)
        if e0 > 0 and e > (1.0 + instab_tol) * e0:
            raise InstabilityError(
                f"energy grew {e / e0 - 1.0:.3%} by t = {(i + 1) * dt:.6g}; aborting"
            )
        if (i + 1) % record_every == 0 or i + 1 == n_steps:
            states.append(WaveState(t=(i + 1) * dt, u=u.copy(), energy=e))
    return Trajectory(grid, states, dt=dt * record_every)


def support_radius(traj, K0, df, theta_rel=1e-6, cone_slack=None):
    """(t, radius) series: largest distance-field value over active nodes.

    A node is active when its amplitude exceeds ``theta_rel`` times the state
    maximum.  With ``cone_slack`` given, asserts radius(t) <= |t| + slack;
    the slack must account for the grid-distance overestimate and for scheme
    dispersion, and is the caller's declared budget.
    """
    if df.grid != traj.grid:
        raise ValueError("distance field and trajectory grids differ")
    out = []
    for st in traj.states:
        amp = np.linalg.norm(st.u, axis=-1)
        peak = float(amp.max())
        if peak == 0.0:
            out.append((st.t, 0.0))
            continue
        active = amp > theta_rel * peak
        radius = float(np.max(df.values[active]))
        out.append((st.t, radius))
        if cone_slack is not None and radius > abs(st.t) + cone_slack:
            raise AssertionError(
                f"support radius {radius:.6g} at t = {st.t:.6g} exceeds |t| + "
                f"declared slack {cone_slack:.6g}"
            )
    return out


@dataclass(frozen=True)
class SecondOrderResult:
    """Wave solution u and the first-order doubled state (du/dt, i D u)."""

    u: Trajectory
    v: Trajectory
    order_r: int = field(default=1)


def wave_second_order(sym, f, g, T, dt=None, boundary="periodic", order=4,
                      record_every=None):
    """Second-order wave u'' = -D+ D u via the doubled first-order system.

    Evolves v = (du/dt, i D u) under the doubled skew generator from
    v0 = (g, i D f), integrating u alongside.  Supports of u stay inside the
    control-distance cone of the initial supports.
    """
    dbl = double(sym)
    op = discretise_skew(dbl, boundary=boundary, order=order)
    grid = sym.grid
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape != grid.dims + (sym.r,) or g.shape != grid.dims + (sym.r,):
        raise ValueError(f"f and g must have shape {grid.dims + (sym.r,)}")
    df0 = apply_operator(sym, f, boundary="periodic" if boundary == "periodic" else "clamped",
                         order=order)
    v = np.concatenate([g, 1j * df0], axis=-1)
    u = f.copy()

    maxspeed = op.max_speed()
    hmin = float(np.min(grid.spacing))
    if dt is None:
        dt = min(0.125 * hmin / maxspeed if maxspeed > 0 else np.inf, op.stability_dt())
    if dt > op.stability_dt():
        raise CflError(f"dt = {dt:.6g} above the stability bound {op.stability_dt():.6g}")
    n_steps = max(1, int(np.ceil(T / dt - 1e-12)))
    dt = T / n_steps
    if record_every is None:
        record_every = max(1, n_steps // 64)

    r = sym.r

    def rhs(state):
        uu, vv = state
        return vv[..., :r].copy(), op.apply(vv)

    ev = _energy(grid, v)
    u_states = [WaveState(t=0.0, u=u.copy(), energy=_energy(grid, u))]
    v_states = [WaveState(t=0.0, u=v.copy(), energy=ev)]
    for i in range(n_steps):
        k1u, k1v = rhs((u, v))
        k2u, k2v = rhs((u + 0.5 * dt * k1u, v + 0.5 * dt * k1v))
        k3u, k3v = rhs((u + 0.5 * dt * k2u, v + 0.5 * dt * k2v))
        k4u, k4v = rhs((u + dt * k3u, v + dt * k3v))
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if (i + 1) % record_every == 0 or i + 1 == n_steps:
            t = (i + 1) * dt
            u_states.append(WaveState(t=t, u=u.copy(), energy=_energy(grid, u)))
            v_states.append(WaveState(t=t, u=v.copy(), energy=_energy(grid, v)))
    return SecondOrderResult(
        u=Trajectory(grid, u_states, dt=dt * record_every),
        v=Trajectory(grid, v_states, dt=dt * record_every),
        order_r=r,
    )
