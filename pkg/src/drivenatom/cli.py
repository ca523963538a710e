"""Command-line orchestration: subcommand dispatch, artifacts, run manifests.

Subcommands
    porbit find / porbit manifold
    curves continue / curves stability
    manifold domain / manifold intersect
    atlas scan / atlas overlay
    repro {table1, table2, fig2c, fig3, fig5, fig6}

Exit codes: 0 success, 1 numerical failure (structured JSON on stderr),
2 usage error.  Every run writes a manifest JSON recording the configuration,
integrator settings, argv, and SHA-256 hashes of all input and output
artifacts; re-running the recorded argv reproduces the outputs bit-exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, atlas, flow, invcurves, manifolds, porbits
from .flow import IntegratorSettings, IntegrationError
from .invcurves import (
    DegeneracyError,
    InconsistentSystemError,
    InvariantCurve,
    ResonanceError,
)
from .manifolds import DomainError
from .model import ConfigurationError, SystemConfig
from .porbits import NewtonDivergenceError

NUMERICAL_ERRORS = (
    ConfigurationError,
    DegeneracyError,
    DomainError,
    InconsistentSystemError,
    IntegrationError,
    NewtonDivergenceError,
    ResonanceError,
    np.linalg.LinAlgError,
)

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# Manifest plumbing
# ---------------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class RunManifest:
    """Reproducibility record for one CLI invocation."""

    def __init__(self, subcommand: str, argv: list, cfg: SystemConfig,
                 settings: IntegratorSettings):
        self.subcommand = subcommand
        self.argv = list(argv)
        self.cfg = cfg
        self.settings = settings
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.t0 = time.time()

    def add_input(self, path):
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path):
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path):
        payload = {
            "version": __version__,
            "subcommand": self.subcommand,
            "argv": self.argv,
            "config": {
                "e0": self.cfg.e0, "omega": self.cfg.omega, "a": self.cfg.a,
                "d": self.cfg.d, "coulomb_enabled": self.cfg.coulomb_enabled,
            },
            "integrator": {
                "abs_tol": self.settings.abs_tol,
                "rel_tol": self.settings.rel_tol,
                "method": self.settings.method,
            },
            "thread_budget": flow.thread_budget(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time_s": time.time() - self.t0,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def _prepare_out(path, force: bool) -> Path:
    """Refuse to clobber an existing artifact unless forced (artifacts are
    immutable once written); create parent directories as needed."""
    path = Path(path)
    if path.exists() and not force:
        raise ConfigurationError(
            f"output {path} already exists; artifacts are never modified in "
            "place (pass --force to replace)")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Shared argument handling
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser):
    g = parser.add_argument_group("system configuration")
    g.add_argument("--config", help="config file (key-value or JSON): e0, omega, a, d, coulomb_enabled")
    g.add_argument("--e0", type=float, help="field amplitude override (a.u.)")
    g.add_argument("--omega", type=float, help="field frequency override (a.u.)")
    g.add_argument("--a", type=float, help="softening parameter override (a.u.)")
    g.add_argument("--d", type=int, help="spatial dimension override (1, 2, or 3)")
    g.add_argument("--no-coulomb", action="store_true", help="disable the soft-Coulomb term")
    g = parser.add_argument_group("integrator")
    g.add_argument("--abs-tol", type=float, default=1e-12)
    g.add_argument("--rel-tol", type=float, default=1e-12)
    parser.add_argument("--force", action="store_true",
                        help="allow replacing an existing output artifact")
    parser.add_argument("--manifest", default=None,
                        help="manifest path (default: <out>.manifest.json)")


def _build_config(args, default_d: int = 1) -> SystemConfig:
    if args.config:
        base = SystemConfig.from_file(args.config)
        fields = {"e0": base.e0, "omega": base.omega, "a": base.a, "d": base.d,
                  "coulomb_enabled": base.coulomb_enabled}
    else:
        fields = {"d": default_d}
    for key in ("e0", "omega", "a", "d"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if args.no_coulomb:
        fields["coulomb_enabled"] = False
    return SystemConfig(**fields)


def _build_settings(args) -> IntegratorSettings:
    return IntegratorSettings(abs_tol=args.abs_tol, rel_tol=args.rel_tol)


def _manifest_path(args, out_path) -> Path:
    return Path(args.manifest) if args.manifest else Path(str(out_path) + ".manifest.json")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [FLOAT_FMT % v if isinstance(v, float) else v for v in row])


def _progress(verbose: bool):
    if not verbose:
        return None
    return lambda k, n: print(f"  period {k}/{n}", flush=True)


def _load_curve_doc(path):
    with open(path) as fh:
        doc = json.load(fh)
    curve = InvariantCurve.from_dict(doc)
    stability = None
    if doc.get("lambda_s") is not None and doc.get("bundle_s") is not None:
        stability = invcurves.CurveStability.from_dict(doc)
    return curve, stability


def _curve_doc(curve: InvariantCurve, stability=None) -> dict:
    doc = curve.to_dict()
    doc.update({
        "lambda_s": None, "lambda_u": None,
        "unit_eigs": None, "bundle_s": None, "bundle_u": None,
    })
    if stability is not None:
        doc.update(stability.to_dict())
    return doc


# ---------------------------------------------------------------------------
# porbit
# ---------------------------------------------------------------------------

def cmd_porbit_find(args, argv) -> int:
    cfg = _build_config(args, default_d=1)
    settings = _build_settings(args)
    manifest = RunManifest("porbit find", argv, cfg, settings)

    if args.guess_file:
        manifest.add_input(args.guess_file)
        with open(args.guess_file) as fh:
            guesses = json.load(fh)
        if args.label not in guesses:
            raise ConfigurationError(
                f"label {args.label!r} not in {args.guess_file}; "
                f"available: {sorted(guesses)}")
        rec = guesses[args.label]
        if rec["d"] != cfg.d:
            raise ConfigurationError(
                f"orbit {args.label!r} lives in d={rec['d']}, config has d={cfg.d}")
        from .model import PhaseState
        orbit = porbits.find_fixed_point(
            cfg, settings, PhaseState.from_z(np.array(rec["z"], dtype=float)),
            label=args.label)
    else:
        orbit = porbits.find_known_orbit(cfg, settings, args.label)

    out = _prepare_out(args.out or f"orbit_{args.label}.json", args.force)
    with open(out, "w") as fh:
        json.dump(orbit.to_dict(), fh, indent=1)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    print(f"wrote {out} (residual {orbit.residual:.3e})")
    return 0


def cmd_porbit_manifold(args, argv) -> int:
    cfg = _build_config(args, default_d=1)
    settings = _build_settings(args)
    manifest = RunManifest("porbit manifold", argv, cfg, settings)
    orbit = porbits.find_known_orbit(cfg, settings, args.label)
    branch = porbits.grow_manifold_1d(
        cfg, settings, orbit, orientation=args.side, sign=args.sign,
        arclength_budget=args.arclength)
    out = _prepare_out(args.out or f"manifold_{args.label}_{args.side}.csv", args.force)
    rows = [(float(s), float(p[0]), float(p[1]))
            for s, p in zip(branch.arc_params, branch.points)]
    _write_csv(out, ["s", "x", "px"], rows)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    print(f"wrote {out} ({len(rows)} points, arclength {branch.arc_params[-1]:.2f})")
    return 0


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def cmd_curves_continue(args, argv) -> int:
    cfg = _build_config(args, default_d=2)
    settings = _build_settings(args)
    manifest = RunManifest("curves continue", argv, cfg, settings)
    orbit = porbits.find_known_orbit(cfg, settings, args.label)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    family = invcurves.continue_family(
        cfg, settings, orbit, n_curves=args.n, delta=args.delta,
        verbose=args.verbose, checkpoint_path=out_dir / "family.partial.json")

    for curve in family.curves:
        stability = None
        if args.with_stability:
            stability = invcurves.curve_stability(cfg, settings, curve)
        doc = _curve_doc(curve, stability)
        path = _prepare_out(out_dir / f"curve_{curve.sigma:04d}.json", args.force)
        with open(path, "w") as fh:
            json.dump(doc, fh)
        manifest.add_output(path)
    fam_path = _prepare_out(out_dir / "family.json", args.force)
    family.save(fam_path)
    manifest.add_output(fam_path)
    manifest.write(_manifest_path(args, out_dir / "family"))
    t = family.termination
    print(f"{len(family.curves)} curves; termination {t.reason}: final nu "
          f"{t.final_nu:.6f} (nearest 2*pi*{t.resonance_p}/{t.resonance_q}, "
          f"gap {t.resonance_gap:.2e})")
    return 0


def cmd_curves_stability(args, argv) -> int:
    cfg = _build_config(args, default_d=2)
    settings = _build_settings(args)
    manifest = RunManifest("curves stability", argv, cfg, settings)
    curve_path = Path(args.curves_dir) / f"curve_{args.sigma:04d}.json"
    manifest.add_input(curve_path)
    curve, _ = _load_curve_doc(curve_path)
    stability = invcurves.curve_stability(cfg, settings, curve)
    out = _prepare_out(
        args.out or Path(args.curves_dir) / f"stability_{args.sigma:04d}.json",
        args.force)
    with open(out, "w") as fh:
        json.dump(_curve_doc(curve, stability), fh)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    print(f"sigma {args.sigma}: lambda_s {stability.lambda_s:.8f} "
          f"lambda_u {stability.lambda_u:.8f} "
          f"(product defect {abs(stability.lambda_s * stability.lambda_u - 1.0):.2e})")
    return 0


# ---------------------------------------------------------------------------
# manifold
# ---------------------------------------------------------------------------

def _curve_with_stability(cfg, settings, path):
    curve, stability = _load_curve_doc(path)
    if stability is None:
        stability = invcurves.curve_stability(cfg, settings, curve)
    return curve, stability


def cmd_manifold_domain(args, argv) -> int:
    cfg = _build_config(args, default_d=2)
    settings = _build_settings(args)
    manifest = RunManifest("manifold domain", argv, cfg, settings)
    manifest.add_input(args.curve)
    curve, stability = _curve_with_stability(cfg, settings, args.curve)
    domain = manifolds.find_fundamental_domain(
        cfg, settings, curve, stability, args.side, epsilon=args.epsilon)
    out = _prepare_out(args.out or f"domain_{args.side}.json", args.force)
    with open(out, "w") as fh:
        json.dump({
            "side": domain.side.name, "h": domain.h, "s_max": domain.s_max,
            "mu": domain.side.mu, "theta_shift": domain.side.shift,
            "defect": domain.defect, "epsilon": args.epsilon,
            "curve": str(args.curve),
        }, fh, indent=1)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    print(f"{args.side}: h {domain.h:.3e} s_max {domain.s_max:.3e} "
          f"defect {domain.defect:.3e}")
    return 0


def cmd_manifold_intersect(args, argv) -> int:
    if args.slice != "y,px":
        raise ConfigurationError(
            f"only the slice y,px is supported, got {args.slice!r}")
    cfg = _build_config(args, default_d=2)
    settings = _build_settings(args)
    manifest = RunManifest("manifold intersect", argv, cfg, settings)
    manifest.add_input(args.curve)
    curve, stability = _curve_with_stability(cfg, settings, args.curve)
    domain = manifolds.find_fundamental_domain(
        cfg, settings, curve, stability, args.side)
    cuts = manifolds.intersect_slice(
        cfg, settings, curve, stability, domain, n_map=args.n_map,
        coarse_tol=args.coarse_tol)
    out = _prepare_out(args.out, args.force)
    _write_csv(out, manifolds.CSV_HEADER,
               [[c.sigma, c.m, float(c.s), float(c.theta), *map(float, c.z),
                 *map(float, c.residual)] for c in cuts])
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    print(f"wrote {out} ({len(cuts)} intersections, side {args.side})")
    return 0


# ---------------------------------------------------------------------------
# atlas
# ---------------------------------------------------------------------------

def _parse_axis(name, text) -> atlas.AxisSpec:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError(f"axis {name} must be lo:hi:n, got {text!r}")
    return atlas.AxisSpec(name=name, lo=float(parts[0]), hi=float(parts[1]),
                          n=int(parts[2]))


def _parse_horizon(text) -> int:
    text = text.strip()
    if text.endswith("T"):
        text = text[:-1]
    value = float(text)
    if value <= 0 or value != int(value):
        raise ConfigurationError(
            f"horizon must be a positive whole number of periods, got {text!r}")
    return int(value)


def cmd_atlas_scan(args, argv) -> int:
    cfg = _build_config(args, default_d=1)
    settings = _build_settings(args)
    manifest = RunManifest("atlas scan", argv, cfg, settings)
    plane = args.plane.split(",")
    if len(plane) != 2:
        raise ConfigurationError(f"--plane must name two coordinates, got {args.plane!r}")
    axis_flags = {"x": args.x, "y": args.y, "px": args.px, "py": args.py}
    axes = []
    for name in plane:
        if axis_flags.get(name) is None:
            raise ConfigurationError(f"plane coordinate {name!r} needs --{name} lo:hi:n")
        axes.append(_parse_axis(name, axis_flags[name]))
    fixed = {}
    for item in args.fixed or []:
        key, _, val = item.partition("=")
        fixed[key] = float(val)
    spec = atlas.GridSpec(
        axis1=axes[0], axis2=axes[1], fixed=fixed,
        horizon_periods=_parse_horizon(args.horizon),
        escape_radius=args.escape_radius)
    grid = atlas.scan(cfg, settings, spec, progress=_progress(args.verbose))
    out = _prepare_out(args.out, args.force)
    grid.save(out)
    manifest.add_output(out)
    manifest.add_output(Path(str(out) + ".meta.json"))
    if args.csv:
        csv_path = _prepare_out(args.csv, args.force)
        grid.export_csv(csv_path)
        manifest.add_output(csv_path)
    manifest.write(_manifest_path(args, out))
    print(f"wrote {out} {grid.values.shape}; status {grid.status_counts()}")
    return 0


def cmd_atlas_overlay(args, argv) -> int:
    cfg = _build_config(args, default_d=1)
    settings = _build_settings(args)
    manifest = RunManifest("atlas overlay", argv, cfg, settings)
    manifest.add_input(args.grid)
    grid = atlas.DistanceGrid.load(args.grid)
    assets = []
    for spec in args.points or []:
        label, _, path = spec.rpartition("=")
        label = label or Path(path).stem
        manifest.add_input(path)
        assets.append({"label": label, "path": str(path)})
    bundle = atlas.overlay_assets(grid, assets)
    bundle["grid"] = str(args.grid)
    out = _prepare_out(args.out, args.force)
    with open(out, "w") as fh:
        json.dump(bundle, fh, indent=1)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    print(f"wrote {out} ({len(assets)} overlay assets)")
    return 0


# ---------------------------------------------------------------------------
# repro pipelines
# ---------------------------------------------------------------------------

_SAFE_LABELS = {"O1+": "O1p", "O1-": "O1m", "O+-": "Opm", "O2-1:9": "O2_1_9"}


def _safe(label: str) -> str:
    """File-system-safe orbit label (O1+ -> O1p, O+- -> Opm, O2-1:9 -> O2_1_9)."""
    return _SAFE_LABELS.get(label, label)


def _load_references() -> dict:
    from importlib import resources
    with resources.files("drivenatom.data").joinpath("reference_orbits.json").open() as fh:
        return json.load(fh)


def _transverse_eigenvalues(cfg2, settings, label):
    """Eigenvalues of the (y, p_y) block of the embedded d=2 monodromy.

    The planar subspace {y = p_y = 0} is invariant, so the 4x4 monodromy is
    exactly block-diagonal and the transverse block can be read off.
    """
    orbit = porbits.find_known_orbit(cfg2, settings, label)
    block = orbit.monodromy[np.ix_([1, 3], [1, 3])]
    return orbit, np.linalg.eigvals(block)


def _compare(computed, reference):
    computed = sorted(np.abs(np.asarray(computed, dtype=complex)), reverse=True)
    reference = sorted(map(abs, reference), reverse=True)
    rows = []
    for c, r in zip(computed, reference):
        rows.append({"computed": float(c), "reference": float(r),
                     "rel_err": float(abs(c - r) / abs(r))})
    return rows


def repro_table1(args, argv, out_dir, settings) -> int:
    cfg1 = SystemConfig(d=1)
    cfg2 = SystemConfig(d=2)
    manifest = RunManifest("repro table1", argv, cfg1, settings)
    refs = _load_references()
    report = {}
    for label in ("O1", "O1-", "O2"):
        d1 = porbits.find_known_orbit(cfg1, settings, label)
        entry = {"z_star": d1.z_star.z.tolist(), "residual": d1.residual,
                 "in_plane": _compare(d1.eigenvalues, refs[label]["in_plane"])}
        _, trans = _transverse_eigenvalues(cfg2, settings, label)
        if "transverse" in refs[label]:
            entry["transverse"] = _compare(trans, refs[label]["transverse"])
        if "transverse_angle" in refs[label]:
            angle = float(np.abs(np.angle(trans[np.argmax(trans.imag)])))
            ref_angle = refs[label]["transverse_angle"]
            entry["transverse_angle"] = {
                "computed": angle, "reference": ref_angle,
                "rel_err": abs(angle - ref_angle) / ref_angle}
        report[label] = entry
    out = _prepare_out(out_dir / "table1.json", args.force)
    with open(out, "w") as fh:
        json.dump(report, fh, indent=1)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    worst = max(row["rel_err"] for entry in report.values()
                for key in ("in_plane", "transverse")
                if key in entry for row in entry[key])
    print(f"wrote {out}; worst in-plane/transverse relative error {worst:.2e}")
    return 0


def repro_table2(args, argv, out_dir, settings) -> int:
    cfg = SystemConfig(d=2)
    manifest = RunManifest("repro table2", argv, cfg, settings)
    refs = _load_references()
    report = {}
    for label in ("O", "O+-"):
        orbit = porbits.find_known_orbit(cfg, settings, label)
        report[label] = {
            "z_star": orbit.z_star.z.tolist(), "residual": orbit.residual,
            "eigenvalues": _compare(orbit.eigenvalues, refs[label]["eigenvalues"]),
        }
        traj = flow.integrate(cfg, settings, orbit.z_star, cfg.T,
                              t_eval=np.linspace(0.0, cfg.T, 513))
        path = _prepare_out(out_dir / f"orbit_{_safe(label)}.csv", args.force)
        _write_csv(path, ["t", "x", "y", "px", "py"],
                   [(float(t), *map(float, q), *map(float, p))
                    for t, q, p in zip(traj.t, traj.q, traj.p)])
        manifest.add_output(path)
    out = _prepare_out(out_dir / "table2.json", args.force)
    with open(out, "w") as fh:
        json.dump(report, fh, indent=1)
    manifest.add_output(out)
    manifest.write(_manifest_path(args, out))
    worst = max(r["rel_err"] for entry in report.values() for r in entry["eigenvalues"])
    print(f"wrote {out}; worst relative error {worst:.2e}")
    return 0


def repro_fig2c(args, argv, out_dir, settings) -> int:
    cfg = SystemConfig(d=1)
    manifest = RunManifest("repro fig2c", argv, cfg, settings)
    n = 1000 if args.full else 120
    budget = 120.0 if args.full else 25.0
    spec = atlas.GridSpec(
        axis1=atlas.AxisSpec("x", -60.0, 60.0, n),
        axis2=atlas.AxisSpec("px", -1.0, 1.0, n),
        fixed={}, horizon_periods=100)
    grid = atlas.scan(cfg, settings, spec, progress=_progress(args.verbose))
    grid_path = _prepare_out(out_dir / "grid_d1.bin", args.force)
    grid.save(grid_path)
    manifest.add_output(grid_path)

    o2 = porbits.find_known_orbit(cfg, settings, "O2")
    assets = []
    for side in ("stable", "unstable"):
        for sign in (1, -1):
            branch = porbits.grow_manifold_1d(
                cfg, settings, o2, orientation=side, sign=sign,
                arclength_budget=budget)
            path = _prepare_out(
                out_dir / f"manifold_O2_{side}_{'p' if sign > 0 else 'm'}.csv",
                args.force)
            _write_csv(path, ["s", "x", "px"],
                       [(float(s), float(p[0]), float(p[1]))
                        for s, p in zip(branch.arc_params, branch.points)])
            manifest.add_output(path)
            assets.append({"label": f"manifold_{side}_{sign:+d}", "path": str(path)})

    markers = {}
    for label in ("O1", "O1+", "O1-", "O2", "O2-1:9"):
        orbit = porbits.find_known_orbit(cfg, settings, label)
        markers[label] = orbit.z_star.z.tolist()
        traj = flow.integrate(cfg, settings, orbit.z_star, cfg.T,
                              t_eval=np.linspace(0.0, cfg.T, 513))
        path = _prepare_out(out_dir / f"orbit_{_safe(label)}.csv", args.force)
        _write_csv(path, ["t", "x", "px"],
                   [(float(t), float(q[0]), float(p[0]))
                    for t, q, p in zip(traj.t, traj.q, traj.p)])
        manifest.add_output(path)
    markers_path = _prepare_out(out_dir / "fixed_points_d1.json", args.force)
    with open(markers_path, "w") as fh:
        json.dump(markers, fh, indent=1)
    manifest.add_output(markers_path)
    assets.append({"label": "fixed_points", "path": str(markers_path)})

    bundle = atlas.overlay_assets(grid, assets)
    bundle["grid"] = str(grid_path)
    bundle_path = _prepare_out(out_dir / "fig2c_overlay.json", args.force)
    with open(bundle_path, "w") as fh:
        json.dump(bundle, fh, indent=1)
    manifest.add_output(bundle_path)
    manifest.write(_manifest_path(args, out_dir / "fig2c"))
    print(f"wrote {bundle_path}")
    return 0


def _first_curve(cfg, settings, out_dir, args, n_curves=1):
    orbit = porbits.find_known_orbit(cfg, settings, "O2")
    family = invcurves.continue_family(
        cfg, settings, orbit, n_curves=n_curves, verbose=args.verbose,
        checkpoint_path=out_dir / "family.partial.json")
    return orbit, family


def repro_fig3(args, argv, out_dir, settings) -> int:
    cfg = SystemConfig(d=2)
    manifest = RunManifest("repro fig3", argv, cfg, settings)
    n = 1000 if args.full else 120
    spec = atlas.GridSpec(
        axis1=atlas.AxisSpec("x", -60.0, 60.0, n),
        axis2=atlas.AxisSpec("py", -1.0, 1.0, n),
        fixed={"y": 0.0, "px": 0.0}, horizon_periods=100)
    grid = atlas.scan(cfg, settings, spec, progress=_progress(args.verbose))
    grid_path = _prepare_out(out_dir / "grid_d2.bin", args.force)
    grid.save(grid_path)
    manifest.add_output(grid_path)

    _, family = _first_curve(cfg, settings, out_dir, args)
    curve = family.curves[0]
    stability = invcurves.curve_stability(cfg, settings, curve)
    domain = manifolds.find_fundamental_domain(cfg, settings, curve, stability, "stable")
    cuts = manifolds.intersect_slice(
        cfg, settings, curve, stability, domain,
        n_map=30 if args.full else 12,
        n_theta=64 if args.full else 32)
    cuts_path = _prepare_out(out_dir / "intersections_stable.csv", args.force)
    _write_csv(cuts_path, manifolds.CSV_HEADER,
               [[c.sigma, c.m, float(c.s), float(c.theta), *map(float, c.z),
                 *map(float, c.residual)] for c in cuts])
    manifest.add_output(cuts_path)

    bundle = atlas.overlay_assets(
        grid, [{"label": "stable_intersections", "path": str(cuts_path)}])
    bundle["grid"] = str(grid_path)
    bundle_path = _prepare_out(out_dir / "fig3_overlay.json", args.force)
    with open(bundle_path, "w") as fh:
        json.dump(bundle, fh, indent=1)
    manifest.add_output(bundle_path)
    manifest.write(_manifest_path(args, out_dir / "fig3"))
    print(f"wrote {bundle_path} ({len(cuts)} intersection points)")
    return 0


def repro_fig5(args, argv, out_dir, settings) -> int:
    cfg = SystemConfig(d=2)
    manifest = RunManifest("repro fig5", argv, cfg, settings)
    n_curves = 60 if args.full else 8
    orbit, family = _first_curve(cfg, settings, out_dir, args, n_curves=n_curves)
    fam_path = _prepare_out(out_dir / "family.json", args.force)
    family.save(fam_path)
    manifest.add_output(fam_path)
    rows = []
    for curve in family.curves:
        stability = invcurves.curve_stability(cfg, settings, curve)
        rows.append([curve.sigma, float(curve.dist), float(curve.nu),
                     float(stability.lambda_s), float(stability.lambda_u)])
    summary_path = _prepare_out(out_dir / "family_summary.csv", args.force)
    _write_csv(summary_path, ["sigma", "dist", "nu", "lambda_s", "lambda_u"], rows)
    manifest.add_output(summary_path)
    endpoint_path = _prepare_out(out_dir / "fixed_point_endpoint.json", args.force)
    elliptic = [complex(l) for l in orbit.eigenvalues
                if abs(abs(l) - 1.0) < 1e-6 and abs(l.imag) > 1e-8]
    with open(endpoint_path, "w") as fh:
        json.dump({"z_star": orbit.z_star.z.tolist(),
                   "nu0": float(abs(np.angle(elliptic[0])))}, fh, indent=1)
    manifest.add_output(endpoint_path)
    manifest.write(_manifest_path(args, out_dir / "fig5"))
    print(f"wrote {summary_path} ({len(rows)} curves)")
    return 0


def repro_fig6(args, argv, out_dir, settings) -> int:
    cfg = SystemConfig(d=2)
    manifest = RunManifest("repro fig6", argv, cfg, settings)
    _, family = _first_curve(cfg, settings, out_dir, args)
    curve = family.curves[0]
    stability = invcurves.curve_stability(cfg, settings, curve)
    n_map = 12 if args.full else 6
    for side in ("stable", "unstable"):
        domain = manifolds.find_fundamental_domain(cfg, settings, curve, stability, side)
        rows = []
        for m, S, TH, Z in manifolds.globalize(
                cfg, settings, curve, stability, domain, n_map=n_map,
                n_s=6, n_theta=48 if args.full else 24):
            for i in range(Z.shape[0]):
                rows.append([m, float(Z[i, 0]), float(Z[i, 2]), float(Z[i, 3])])
        path = _prepare_out(out_dir / f"cloud_{side}.csv", args.force)
        _write_csv(path, ["m", "x", "px", "py"], rows)
        manifest.add_output(path)
    manifest.write(_manifest_path(args, out_dir / "fig6"))
    print(f"wrote manifold clouds to {out_dir}")
    return 0


REPRO_DISPATCH = {
    "table1": repro_table1,
    "table2": repro_table2,
    "fig2c": repro_fig2c,
    "fig3": repro_fig3,
    "fig5": repro_fig5,
    "fig6": repro_fig6,
}


def cmd_repro(args, argv) -> int:
    out_dir = Path(args.out_dir or f"repro_{args.figure}")
    out_dir.mkdir(parents=True, exist_ok=True)
    settings = _build_settings(args)
    return REPRO_DISPATCH[args.figure](args, argv, out_dir, settings)


# ---------------------------------------------------------------------------
# Parser assembly and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivenatom",
        description="Invariant phase-space structures of a laser-driven "
                    "soft-Coulomb atom (atomic units throughout)")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="group", required=True)

    porbit = sub.add_parser("porbit", help="periodic orbits of the period map")
    psub = porbit.add_subparsers(dest="action", required=True)
    p = psub.add_parser("find", help="Newton-polish a fixed point of the period map")
    p.add_argument("--label", required=True, help="orbit label (shipped guess set)")
    p.add_argument("--guess-file", help="JSON file of labeled initial guesses")
    p.add_argument("--out", help="output orbit JSON")
    _add_common(p)
    p.set_defaults(func=cmd_porbit_find)
    p = psub.add_parser("manifold", help="grow a 1D manifold branch (d=1)")
    p.add_argument("--label", required=True)
    p.add_argument("--side", choices=["stable", "unstable"], required=True)
    p.add_argument("--sign", type=int, choices=[-1, 1], default=1)
    p.add_argument("--arclength", type=float, default=100.0)
    p.add_argument("--out", help="output CSV (s, x, px)")
    _add_common(p)
    p.set_defaults(func=cmd_porbit_manifold)

    curves = sub.add_parser("curves", help="invariant-curve families")
    csub = curves.add_subparsers(dest="action", required=True)
    p = csub.add_parser("continue", help="continue the family outward from a fixed point")
    p.add_argument("--label", default="O2")
    p.add_argument("--n", type=int, default=60, help="curve budget")
    p.add_argument("--delta", type=float, default=1e-2, help="initial step size")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--with-stability", action=argparse.BooleanOptionalAction,
                   default=False, help="compute multipliers for each curve")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_curves_continue)
    p = csub.add_parser("stability", help="multipliers and bundles of one stored curve")
    p.add_argument("--sigma", type=int, required=True)
    p.add_argument("--curves-dir", required=True)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_curves_stability)

    manifold = sub.add_parser("manifold", help="manifolds of invariant curves (d=2)")
    msub = manifold.add_subparsers(dest="action", required=True)
    p = msub.add_parser("domain", help="certify a fundamental annulus")
    p.add_argument("--curve", required=True, help="curve JSON document")
    p.add_argument("--side", choices=["stable", "unstable"], required=True)
    p.add_argument("--epsilon", type=float, default=manifolds.INVARIANCE_TOL)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_manifold_domain)
    p = msub.add_parser("intersect", help="slice cuts of a globalized manifold")
    p.add_argument("--curve", required=True)
    p.add_argument("--side", choices=["stable", "unstable"], required=True)
    p.add_argument("--slice", default="y,px")
    p.add_argument("--n-map", type=int, default=30)
    p.add_argument("--coarse-tol", type=float, default=manifolds.COARSE_TOL)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_manifold_intersect)

    atlas_p = sub.add_parser("atlas", help="recollision distance atlases")
    asub = atlas_p.add_subparsers(dest="action", required=True)
    p = asub.add_parser("scan", help="scan a 2D grid of initial conditions")
    p.add_argument("--plane", required=True, help="two coordinates, e.g. x,px")
    p.add_argument("--x", help="lo:hi:n")
    p.add_argument("--y", help="lo:hi:n")
    p.add_argument("--px", help="lo:hi:n")
    p.add_argument("--py", help="lo:hi:n")
    p.add_argument("--fixed", action="append", help="coordinate=value for off-plane coordinates")
    p.add_argument("--horizon", default="100T", help="horizon in periods, e.g. 100T")
    p.add_argument("--escape-radius", type=float, default=flow.DEFAULT_ESCAPE_RADIUS)
    p.add_argument("--out", required=True, help="binary grid output")
    p.add_argument("--csv", help="also export the grid as CSV")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_atlas_scan)
    p = asub.add_parser("overlay", help="bundle a grid with overlay point sets")
    p.add_argument("--grid", required=True)
    p.add_argument("--points", action="append", help="label=path.csv (repeatable)")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_atlas_overlay)

    p = sub.add_parser("repro", help="canned pipelines for the reference assets")
    p.add_argument("figure", choices=sorted(REPRO_DISPATCH))
    p.add_argument("--full", action="store_true",
                   help="figure scale instead of the small CI scale")
    p.add_argument("--out-dir")
    p.add_argument("--verbose", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_repro)

    return parser


_AXIS_FLAGS = {"--x", "--y", "--px", "--py"}


def _join_axis_values(argv: list) -> list:
    """Fuse '--x -60:60:1000' into '--x=-60:60:1000' so that range values
    starting with a minus sign are not mistaken for option flags."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _AXIS_FLAGS and i + 1 < len(argv) and ":" in argv[i + 1]:
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def main(argv=None) -> int:
    argv = _join_axis_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except NUMERICAL_ERRORS as err:
        json.dump({"error": type(err).__name__, "message": str(err),
                   "argv": argv}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
