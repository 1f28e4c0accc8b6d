"""Batch front door: subcommands wiring the modules together.

Every run is driven by a JSON config (plus ``--set key=value`` overrides,
flags win), writes its outputs under ``--out``, and records the fully
resolved config and seed in a top-level report for reproducibility.

Exit codes: 0 pass, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import gallery as gal
from . import geometry, mollify, propagate
from .fields import Grid
from .flows import VectorFieldSet, approx_by_flows
from .geometry import Curve
from .symbol import SymbolField, double, dual_norm_batch


class ConfigError(ValueError):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path}: line {exc.lineno}: {exc.msg}")


def _apply_overrides(cfg, sets):
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set key {key!r} crosses a non-object value")
        node[parts[-1]] = value
    return cfg


def _build_symbol(spec):
    spec = spec or {"gallery": "diagonal", "params": {"n": 2}}
    if "gallery" in spec:
        entry = gal.build(spec["gallery"], spec.get("params", {}))
        return entry.symbol, entry
    if "manifest" in spec:
        return SymbolField.load(spec["manifest"]), None
    if "coefficient_x" in spec:
        # 1-d operator f -> x f' on a line grid: the standard variable-coefficient probe
        p = spec["coefficient_x"]
        grid = Grid([p.get("lo", 0.0)], [p.get("spacing", 1.0 / 128.0)],
                    [p.get("nodes", 257)])

        def coeff_fn(points):
            points = np.asarray(points, dtype=float)
            a = points[..., 0][..., None, None, None].astype(complex)
            b = np.zeros(points.shape[:-1] + (1, 1), dtype=complex)
            return a, b

        return SymbolField.from_function(grid, coeff_fn), None
    raise ConfigError("symbol spec needs one of: gallery, manifest, coefficient_x")


def _sources(cfg, grid):
    src = cfg.get("source", "center")
    if src == "center":
        return [tuple(d // 2 for d in grid.dims)]
    if isinstance(src, list) and src:
        return [tuple(int(i) for i in s) for s in src]
    raise ConfigError("source must be 'center' or a nonempty list of node indices")


def _report(out, payload):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON-serialisable: {type(x)}")


def _csv_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_dist(cfg, out):
    sym, _ = _build_symbol(cfg.get("symbol"))
    sources = _sources(cfg, sym.grid)
    radius = int(cfg.get("stencil_radius", 2))
    df = geometry.distance_field(sym, sources, stencil_radius=radius)
    df.save(os.path.join(out, "distance.sfpf"))
    if sym.grid.ndim == 2:
        df.export_csv(os.path.join(out, "distance.csv"))
    finite = df.values[np.isfinite(df.values)]
    _report(out, {
        "command": "dist",
        "resolved_config": cfg,
        "seed": cfg.get("seed", 0),
        "sources": [list(s) for s in sources],
        "stencil_radius": radius,
        "max_finite_distance": float(finite.max()) if finite.size else None,
        "infinite_node_count": int(np.sum(~np.isfinite(df.values))),
    })
    return 0


def _initial_data(cfg, sym):
    grid = sym.grid
    spec = cfg.get("initial", {"kind": "gaussian", "width": 0.5})
    u0 = np.zeros(grid.dims + (sym.r,), dtype=complex)
    comp = int(spec.get("component", 0))
    if spec.get("kind", "gaussian") == "cell":
        idx = spec.get("index") or [d // 2 for d in grid.dims]
        u0[tuple(int(i) for i in idx) + (comp,)] = 1.0
    else:
        center = np.asarray(spec.get("center") or grid.node([d // 2 for d in grid.dims]), dtype=float)
        width = float(spec.get("width", 0.5))
        X = grid.node_coords()
        u0[..., comp] = np.exp(-np.sum((X - center) ** 2, axis=-1) / (2 * width * width))
        u0[..., comp][np.abs(u0[..., comp]) < 1e-300] = 0.0
    return u0


def _default_cone_slack(grid, T, stencil_radius):
    # grid-distance overestimate (radius-2 anisotropy ~2.8%) plus the measured
    # dispersion reach of the fourth-order scheme at relative threshold 1e-6
    h = float(np.max(grid.spacing))
    aniso = 0.03 if stencil_radius >= 2 else 0.0
    dispersion = 7.0 * T ** (1.0 / 5.0) * h ** (4.0 / 5.0)
    return aniso * max(T, h) + dispersion + h


def cmd_propagate(cfg, out):
    sym, _ = _build_symbol(cfg.get("symbol"))
    try:
        op = propagate.discretise_skew(sym)
    except ValueError:
        sym = double(sym)
        op = propagate.discretise_skew(sym)
    u0 = _initial_data(cfg, op.sym)
    T = float(cfg.get("T", 1.0))
    dt = cfg.get("dt")
    theta = float(cfg.get("theta_rel", 1e-6))
    radius = int(cfg.get("stencil_radius", 2))
    support0 = np.linalg.norm(u0, axis=-1) > 0
    k0 = [tuple(int(v) for v in idx) for idx in np.argwhere(support0)]
    df = geometry.distance_field(op.sym, k0, stencil_radius=radius)
    try:
        traj = propagate.evolve(op, u0, T=T, dt=float(dt) if dt else None)
    except propagate.CflError as exc:
        raise ConfigError(str(exc))
    slack = cfg.get("cone_slack")
    slack = float(slack) if slack is not None else _default_cone_slack(op.grid, T, radius)
    series = propagate.support_radius(traj, k0, df, theta_rel=theta)
    ok = all(r <= abs(t) + slack for t, r in series)
    traj.save(os.path.join(out, "trajectory"))
    _csv_rows(os.path.join(out, "diagnostics.csv"), ["t", "energy", "radius"],
              [(t, e, r) for (t, r), e in zip(series, traj.energies())])
    _report(out, {
        "command": "propagate",
        "resolved_config": cfg,
        "seed": cfg.get("seed", 0),
        "cone_slack": slack,
        "theta_rel": theta,
        "verdict": "pass" if ok else "fail",
        "max_excess": max((r - abs(t) for t, r in series), default=0.0),
    })
    return 0 if ok else 1


def cmd_wave2(cfg, out):
    sym, _ = _build_symbol(cfg.get("symbol"))
    f = _initial_data({"initial": cfg.get("initial_f", cfg.get("initial", {}))}, sym)
    g_cfg = cfg.get("initial_g")
    g = _initial_data({"initial": g_cfg}, sym) if g_cfg else np.zeros_like(f)
    T = float(cfg.get("T", 0.5))
    dt = cfg.get("dt")
    try:
        res = propagate.wave_second_order(sym, f, g, T=T, dt=float(dt) if dt else None)
    except propagate.CflError as exc:
        raise ConfigError(str(exc))
    res.u.save(os.path.join(out, "trajectory_u"))
    ev = res.v.energies()
    drift = float(abs(ev[-1] - ev[0]) / ev[0]) if ev[0] > 0 else 0.0
    _csv_rows(os.path.join(out, "diagnostics.csv"), ["t", "energy_u", "energy_conserved"],
              [(t, eu, e) for t, eu, e in zip(res.u.times(), res.u.energies(), ev)])
    ok = drift <= float(cfg.get("energy_tol", 1e-6))
    _report(out, {
        "command": "wave2",
        "resolved_config": cfg,
        "seed": cfg.get("seed", 0),
        "energy_drift": drift,
        "verdict": "pass" if ok else "fail",
    })
    return 0 if ok else 1


def _modulated_axis_fields(amp_lo=0.8, amp_span=0.1, wavelength=4.0):
    """The four axis directions with a smooth position-dependent amplitude."""

    def amp(pts):
        return amp_lo + amp_span * np.sin(2 * np.pi * np.sum(pts, axis=-1) / wavelength)

    fields = []
    for axis in range(2):
        for sign in (+1.0, -1.0):
            def f(pts, _axis=axis, _sign=sign):
                pts = np.asarray(pts, dtype=float)
                out = np.zeros_like(pts)
                out[..., _axis] = _sign * amp(pts)
                return out

            fields.append(f)
    return fields


def _staircase_curve(fieldset, start, legs, leg_time, substeps=64):
    """Concatenated flow curve alternating the +x and +y fields."""
    from .flows import flow

    pts = [np.asarray(start, dtype=float)]
    ts = [0.0]
    for leg in range(legs):
        fidx = 0 if leg % 2 == 0 else 2  # +x then +y
        c = flow(fieldset.fields[fidx], pts[-1], leg_time, leg_time / substeps,
                 grid=fieldset.grid)
        ts.extend(ts[-1] + c.times[1:])
        pts.extend(list(c.points[1:]))
    return Curve(np.asarray(ts), np.asarray(pts))


def cmd_flowapprox(cfg, out):
    sym, _ = _build_symbol(cfg.get("symbol", {"gallery": "diagonal", "params": {"n": 2}}))
    eps = float(cfg.get("eps", 0.1))
    n_list = [int(n) for n in cfg.get("N", [25, 50, 100, 200])]
    fields = _modulated_axis_fields(**cfg.get("fields", {}))
    fieldset = VectorFieldSet(sym, fields, names=["+x", "-x", "+y", "-y"])
    start = np.asarray(cfg.get("start", [-2.0, -2.0]), dtype=float)
    gamma = _staircase_curve(fieldset, start, int(cfg.get("legs", 8)),
                             float(cfg.get("leg_time", 0.5)))
    rows = []
    for n in n_list:
        pfc, bound = approx_by_flows(sym, gamma, fieldset, N=n, eps=eps)
        rows.append((n, pfc.diagnostics["endpoint_error"], bound))
    errs = [r[1] for r in rows]
    ok = all(b <= a * (1 + 1e-9) for a, b in zip(errs, errs[1:]))
    _csv_rows(os.path.join(out, "flowapprox.csv"), ["N", "endpoint_error", "bound"], rows)
    _report(out, {
        "command": "flowapprox",
        "resolved_config": cfg,
        "seed": cfg.get("seed", 0),
        "eps": eps,
        "verdict": "pass" if ok else "fail",
        "rows": rows,
    })
    return 0 if ok else 1


def cmd_mollify(cfg, out):
    sym, _ = _build_symbol(cfg.get("symbol", {"coefficient_x": {"lo": 0.0, "spacing": 1.0 / 256.0,
                                                                "nodes": 513}}))
    grid = sym.grid
    eps_seq = [float(e) for e in cfg.get("eps", [0.4, 0.2, 0.1, 0.05])]
    kernel = mollify.MollifierKernel()
    X = grid.node_coords()
    center = np.asarray(cfg.get("center") or grid.node([d // 2 for d in grid.dims]), dtype=float)
    width = float(cfg.get("width", 0.25))
    vals = np.exp(-np.sum((X - center) ** 2, axis=-1) / (2 * width * width))[..., None].astype(complex)
    from .fields import KIND_VECTOR, Field

    f = Field(grid, KIND_VECTOR, vals)
    lo, hi = grid.box()
    margin = max(eps_seq) + 2 * float(np.max(grid.spacing))
    inner = np.all((X >= lo + margin) & (X <= hi - margin), axis=-1)
    rows = []
    for eps in eps_seq:
        comm = mollify.commutator_apply(sym, kernel, f, eps)
        l2 = float(np.sqrt(np.sum(np.abs(comm.values[inner]) ** 2) * grid.cell_volume))
        rows.append((eps, l2))
    norms = [r[1] for r in rows]
    ok = all(b < a for a, b in zip(norms, norms[1:]))
    _csv_rows(os.path.join(out, "mollify.csv"), ["eps", "commutator_l2"], rows)
    _report(out, {
        "command": "mollify",
        "resolved_config": cfg,
        "seed": cfg.get("seed", 0),
        "verdict": "pass" if ok else "fail",
        "rows": rows,
    })
    return 0 if ok else 1


def cmd_gallery(cfg, out, args):
    if args.action == "list":
        for name in gal.gallery_names():
            print(name)
        return 0
    name = args.name or cfg.get("name")
    if not name:
        raise ConfigError("gallery export needs a symbol name")
    entry = gal.build(name, cfg.get("params", {}))
    entry.symbol.save(os.path.join(out, name))
    _report(out, {
        "command": "gallery",
        "resolved_config": cfg,
        "seed": cfg.get("seed", 0),
        "name": name,
        "params": entry.params,
        "truths": entry.truths,
    })
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="subfinsler",
        description="control distances, symbol seminorms and finite-speed propagation",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (dotted paths, JSON values)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("dist", "propagate", "wave2", "flowapprox", "mollify"):
        sub.add_parser(name)
    g = sub.add_parser("gallery")
    g.add_argument("action", choices=["list", "export"])
    g.add_argument("name", nargs="?")

    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(_load_config(args.config), args.set)
        cfg.setdefault("seed", 0)
        np.random.seed(int(cfg["seed"]))
        os.makedirs(args.out, exist_ok=True)
        if args.command == "dist":
            return cmd_dist(cfg, args.out)
        if args.command == "propagate":
            return cmd_propagate(cfg, args.out)
        if args.command == "wave2":
            return cmd_wave2(cfg, args.out)
        if args.command == "flowapprox":
            return cmd_flowapprox(cfg, args.out)
        if args.command == "mollify":
            return cmd_mollify(cfg, args.out)
        if args.command == "gallery":
            return cmd_gallery(cfg, args.out, args)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
