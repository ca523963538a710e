#!/usr/bin/env python3
"""Render publication-style figures from drivenatom artifacts.

Pure post-processing: reads the CSV/JSON/binary artifacts written by the
`drivenatom` CLI (grids, manifold polylines, orbit trajectories, families,
intersection tables) and draws them; no numerics are recomputed and no
input file is ever modified.

Usage
    render.py --figure fig3 --in repro_fig3 --out fig3.png

Each figure id expects the artifact files produced by the matching
`drivenatom repro` pipeline inside the --in directory (individual paths can
be overridden; see --help).  Exits nonzero with a schema message naming the
offending file/columns when an input does not match its documented schema.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

#: fixed style so identical inputs give identical image bytes
_RC = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "figure.dpi": 150,
    "savefig.dpi": 150,
    "axes.linewidth": 0.8,
    "svg.hashsalt": "drivenatom",
}

GRID_CMAP = "viridis"


class SchemaError(ValueError):
    """An input artifact does not match its documented schema."""


# ---------------------------------------------------------------------------
# Artifact readers (validation only; values pass through untouched)
# ---------------------------------------------------------------------------

def read_csv_columns(path, required: list) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: missing input file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected columns {required}")
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing} (found {header})")
        rows = list(reader)
    cols = {name: np.empty(len(rows)) for name in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 2} has {len(row)} fields, "
                              f"expected {len(header)}")
        for name, val in zip(header, row):
            try:
                cols[name][i] = float(val)
            except ValueError:
                raise SchemaError(f"{path}: row {i + 2}, column {name!r}: "
                                  f"not a number: {val!r}")
    return cols


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: missing input file")
    with open(path) as fh:
        return json.load(fh)


def read_grid(path):
    """Distance grid: values array plus the two axis sample vectors."""
    import struct

    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: missing input file")
    with open(path, "rb") as fh:
        if fh.read(4) != b"DGRD":
            raise SchemaError(f"{path}: not a distance-grid file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != 1:
            raise SchemaError(f"{path}: unsupported grid version {version}")
        (blen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(blen).decode("utf-8"))
        n1, n2 = header["shape"]
        values = np.frombuffer(fh.read(8 * n1 * n2), dtype="<f8").reshape(n1, n2)
    ax1 = header["spec"]["axis1"]
    ax2 = header["spec"]["axis2"]
    u = np.linspace(ax1["lo"], ax1["hi"], ax1["n"])
    v = np.linspace(ax2["lo"], ax2["hi"], ax2["n"])
    return values, (ax1["name"], u), (ax2["name"], v)


def read_family(path) -> list:
    doc = read_json(path)
    if "curves" not in doc:
        raise SchemaError(f"{path}: missing 'curves' key")
    return doc["curves"]


def _curve_points(curve: dict, n_theta: int = 256) -> np.ndarray:
    """Evaluate a stored Fourier curve on a uniform angle mesh (pure algebra)."""
    coeffs = np.asarray(curve["coeffs"], dtype=float)
    M = int(curve["M"])
    if coeffs.shape[0] != 2 * M + 1:
        raise SchemaError(f"curve sigma={curve.get('sigma')}: coefficient rows "
                          f"{coeffs.shape[0]} != 2M+1 = {2 * M + 1}")
    theta = np.linspace(0.0, 2 * np.pi, n_theta)
    k = np.arange(1, M + 1)
    basis = np.hstack([
        np.ones((n_theta, 1)),
        np.cos(theta[:, None] * k),
        np.sin(theta[:, None] * k),
    ])
    return basis @ coeffs  # (n_theta, N)


# ---------------------------------------------------------------------------
# Shared drawing helpers
# ---------------------------------------------------------------------------

_AXIS_TEX = {"x": "$x$ (a.u.)", "y": "$y$ (a.u.)", "px": "$p_x$ (a.u.)",
             "py": "$p_y$ (a.u.)", "t": "$t$ (a.u.)"}


def _color_limits(values, lo_pct, hi_pct):
    finite = values[np.isfinite(values)]
    return float(np.percentile(finite, lo_pct)), float(np.percentile(finite, hi_pct))


def draw_heatmap(ax, grid_path, args):
    values, (name1, u), (name2, v) = read_grid(grid_path)
    vmin, vmax = _color_limits(values, args.vmin_pct, args.vmax_pct)
    if args.vmin is not None:
        vmin = args.vmin
    if args.vmax is not None:
        vmax = args.vmax
    im = ax.imshow(values.T, origin="lower", aspect="auto", cmap=GRID_CMAP,
                   extent=(u[0], u[-1], v[0], v[-1]), vmin=vmin, vmax=vmax,
                   interpolation="nearest")
    ax.set_xlabel(_AXIS_TEX.get(name1, name1))
    ax.set_ylabel(_AXIS_TEX.get(name2, name2))
    cbar = ax.figure.colorbar(im, ax=ax, pad=0.02)
    cbar.set_label(r"$\log_{10}$ distance (a.u.)")
    return im


def draw_markers(ax, markers: dict):
    # hyperbolic fixed points as crosses, the hyperbolic-elliptic one orange
    for label, z in markers.items():
        u, v = z[0], z[len(z) // 2]
        if label.startswith("O2"):
            ax.plot([u], [v], marker="o", ms=4, color="tab:orange", ls="none",
                    label=label, zorder=6)
        else:
            ax.plot([u], [v], marker="x", ms=6, color="black", ls="none",
                    label=label, zorder=6)


# ---------------------------------------------------------------------------
# Figure recipes
# ---------------------------------------------------------------------------

def fig2a(indir, args):
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    markers = read_json(indir / "fixed_points_d1.json")
    for label, color in (("O1", "tab:blue"), ("O1p", "tab:green"),
                         ("O1m", "tab:red")):
        cols = read_csv_columns(indir / f"orbit_{label}.csv", ["t", "x", "px"])
        ax.plot(cols["x"], cols["px"], lw=1.0, color=color, label=label)
    draw_markers(ax, {k: v for k, v in markers.items() if k.startswith("O1")})
    ax.set_xlabel(_AXIS_TEX["x"])
    ax.set_ylabel(_AXIS_TEX["px"])
    ax.legend(loc="best", fontsize=7)
    return fig


def fig2b(indir, args):
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    markers = read_json(indir / "fixed_points_d1.json")
    for label, color, pretty in (("O2", "tab:orange", "1:7"),
                                 ("O2_1_9", "tab:blue", "1:9")):
        cols = read_csv_columns(indir / f"orbit_{label}.csv", ["t", "x", "px"])
        ax.plot(cols["x"], cols["px"], lw=1.0, color=color, label=pretty)
    draw_markers(ax, {k: v for k, v in markers.items() if k.startswith("O2")})
    ax.set_xlabel(_AXIS_TEX["x"])
    ax.set_ylabel(_AXIS_TEX["px"])
    ax.legend(loc="best", fontsize=7)
    return fig


def _fig2c_axes(ax, indir, args):
    draw_heatmap(ax, indir / "grid_d1.bin", args)
    styles = {
        ("stable", "p"): ("red", "stable"),
        ("stable", "m"): ("red", None),
        ("unstable", "p"): ("0.6", "unstable"),
        ("unstable", "m"): ("0.6", None),
    }
    for (side, sign), (color, label) in styles.items():
        cols = read_csv_columns(indir / f"manifold_O2_{side}_{sign}.csv",
                                ["s", "x", "px"])
        ax.plot(cols["x"], cols["px"], lw=0.7, color=color, label=label)
    draw_markers(ax, read_json(indir / "fixed_points_d1.json"))


def fig2c(indir, args):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    _fig2c_axes(ax, indir, args)
    ax.legend(loc="upper right", fontsize=6)
    return fig


def fig2zoom(indir, args):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    _fig2c_axes(ax, indir, args)
    ax.set_xlim(-8.0, 8.0)
    ax.set_ylim(-0.6, 0.6)
    return fig


def fig3(indir, args):
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
    for ax in axes:
        draw_heatmap(ax, indir / "grid_d2.bin", args)
        cuts = read_csv_columns(indir / "intersections_stable.csv",
                                ["sigma", "m", "x", "py"])
        if cuts["x"].size:
            ax.plot(cuts["x"], cuts["py"], ls="none", marker=".", ms=3,
                    color="red", label="stable cuts", zorder=5)
        else:
            print("warning: intersection table is empty; no cut markers drawn",
                  file=sys.stderr)
    axes[1].set_xlim(-8.0, 8.0)
    axes[1].set_ylim(-0.6, 0.6)
    return fig


def fig4(indir, args):
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 3.0))
    planes = (("x", "y"), ("x", "px"), ("x", "py"))
    for label, color in (("O", "tab:blue"), ("Opm", "tab:red")):
        cols = read_csv_columns(indir / f"orbit_{label}.csv",
                                ["t", "x", "y", "px", "py"])
        for ax, (u, v) in zip(axes, planes):
            ax.plot(cols[u], cols[v], lw=0.9, color=color, label=label)
            ax.plot(cols[u][:1], cols[v][:1], marker="x", ms=6, color=color,
                    ls="none")
    for ax, (u, v) in zip(axes, planes):
        ax.set_xlabel(_AXIS_TEX[u])
        ax.set_ylabel(_AXIS_TEX[v])
    axes[0].legend(loc="best", fontsize=7)
    fig.tight_layout()
    return fig


def _fig5_panels(indir):
    curves = read_family(indir / "family.json")
    summary = read_csv_columns(indir / "family_summary.csv",
                               ["sigma", "dist", "nu", "lambda_s", "lambda_u"])
    endpoint = read_json(indir / "fixed_point_endpoint.json")
    return curves, summary, endpoint


def fig5a(indir, args):
    curves, _, endpoint = _fig5_panels(indir)
    fig, ax = plt.subplots(figsize=(4.0, 3.4))
    for curve in curves:
        pts = _curve_points(curve)
        ax.plot(pts[:, 1], pts[:, 3], lw=0.5, color="black")
    z = endpoint["z_star"]
    ax.plot([z[1]], [z[3]], marker="o", ms=5, color="tab:orange", ls="none")
    ax.set_xlabel(_AXIS_TEX["y"])
    ax.set_ylabel(_AXIS_TEX["py"])
    return fig


def fig5b(indir, args):
    _, summary, endpoint = _fig5_panels(indir)
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    ax.plot(summary["dist"], summary["nu"], ls="none", marker=".", ms=4,
            color="black")
    ax.plot([0.0], [endpoint["nu0"]], marker="o", ms=6, color="tab:orange",
            ls="none")
    ax.set_xlabel("dist (a.u.)")
    ax.set_ylabel(r"$\nu$")
    return fig


def fig5c(indir, args):
    _, summary, endpoint = _fig5_panels(indir)
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    ax.plot(summary["dist"], summary["lambda_u"], ls="none", marker=".", ms=4,
            color="black")
    if "lambda_u0" in endpoint:
        ax.plot([0.0], [endpoint["lambda_u0"]], marker="o", ms=6,
                color="tab:orange", ls="none")
    ax.set_xlabel("dist (a.u.)")
    ax.set_ylabel(r"$\Lambda$")
    return fig


def fig5(indir, args):
    curves, summary, endpoint = _fig5_panels(indir)
    fig, axes = plt.subplots(1, 3, figsize=(9.6, 3.0))
    for curve in curves:
        pts = _curve_points(curve)
        axes[0].plot(pts[:, 1], pts[:, 3], lw=0.5, color="black")
    z = endpoint["z_star"]
    axes[0].plot([z[1]], [z[3]], marker="o", ms=5, color="tab:orange", ls="none")
    axes[0].set_xlabel(_AXIS_TEX["y"])
    axes[0].set_ylabel(_AXIS_TEX["py"])
    axes[1].plot(summary["dist"], summary["nu"], ls="none", marker=".", ms=4,
                 color="black")
    axes[1].plot([0.0], [endpoint["nu0"]], marker="o", ms=6,
                 color="tab:orange", ls="none")
    axes[1].set_xlabel("dist (a.u.)")
    axes[1].set_ylabel(r"$\nu$")
    axes[2].plot(summary["dist"], summary["lambda_u"], ls="none", marker=".",
                 ms=4, color="black")
    if "lambda_u0" in endpoint:
        axes[2].plot([0.0], [endpoint["lambda_u0"]], marker="o", ms=6,
                     color="tab:orange", ls="none")
    axes[2].set_xlabel("dist (a.u.)")
    axes[2].set_ylabel(r"$\Lambda$")
    fig.tight_layout()
    return fig


def fig6(indir, args):
    fig = plt.figure(figsize=(5.6, 4.4))
    ax = fig.add_subplot(projection="3d")
    for side, color in (("stable", "red"), ("unstable", "0.5")):
        cols = read_csv_columns(indir / f"cloud_{side}.csv",
                                ["m", "x", "px", "py"])
        ax.scatter(cols["x"], cols["px"], cols["py"], s=0.6, color=color,
                   depthshade=False, label=side)
    fam_path = indir / "family.json"
    if fam_path.exists():
        for curve in read_family(fam_path):
            pts = _curve_points(curve)
            ax.plot(pts[:, 0], pts[:, 2], pts[:, 3], lw=0.5, color="black")
    ax.set_xlabel(_AXIS_TEX["x"])
    ax.set_ylabel(_AXIS_TEX["px"])
    ax.set_zlabel(_AXIS_TEX["py"])
    ax.view_init(elev=args.elev, azim=args.azim)
    ax.legend(loc="upper right", fontsize=7)
    return fig


RECIPES = {
    "fig2a": fig2a,
    "fig2b": fig2b,
    "fig2c": fig2c,
    "fig2zoom": fig2zoom,
    "fig3": fig3,
    "fig4": fig4,
    "fig5": fig5,
    "fig5a": fig5a,
    "fig5b": fig5b,
    "fig5c": fig5c,
    "fig6": fig6,
}


def build_figure(figure: str, indir, args=None):
    """Build the matplotlib Figure for one recipe (no file output)."""
    if args is None:
        args = parse_args(["--figure", figure, "--in", str(indir), "--out", "_.png"])
    with plt.rc_context(_RC):
        return RECIPES[figure](Path(indir), args)


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        description="Render figures from drivenatom artifacts (read-only)")
    parser.add_argument("--figure", required=True, choices=sorted(RECIPES))
    parser.add_argument("--in", dest="indir", required=True,
                        help="artifact directory from the matching repro pipeline")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--vmin-pct", type=float, default=1.0,
                        help="lower color limit percentile for heatmaps")
    parser.add_argument("--vmax-pct", type=float, default=99.0,
                        help="upper color limit percentile for heatmaps")
    parser.add_argument("--vmin", type=float, default=None,
                        help="explicit lower color limit (overrides percentile)")
    parser.add_argument("--vmax", type=float, default=None,
                        help="explicit upper color limit (overrides percentile)")
    parser.add_argument("--elev", type=float, default=22.0,
                        help="3D view elevation (fig6)")
    parser.add_argument("--azim", type=float, default=-60.0,
                        help="3D view azimuth (fig6)")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        fig = build_figure(args.figure, args.indir, args)
    except SchemaError as err:
        print(f"schema error: {err}", file=sys.stderr)
        return 1
    with plt.rc_context(_RC):
        fig.savefig(args.out, metadata={"Software": "render.py"})
    plt.close(fig)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
