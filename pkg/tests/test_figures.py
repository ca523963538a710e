"""Renderer tests: schema validation, element presence, determinism, read-only."""

import hashlib
import importlib.util
import json
import sys
from pathlib import Path

import numpy as np
import pytest

from drivenatom import atlas


def _load_render():
    path = Path(__file__).resolve().parents[1] / "figures" / "render.py"
    spec = importlib.util.spec_from_file_location("render", path)
    mod = importlib.util.module_from_spec(spec)
    sys.modules["render"] = mod
    spec.loader.exec_module(mod)
    return mod


render = _load_render()


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _fake_curve(sigma, amp, M=2):
    coeffs = np.zeros((2 * M + 1, 4))
    coeffs[0] = [-2.436, 0.0, 0.0, 0.147]
    coeffs[1, 1] = amp       # cos in y
    coeffs[M + 1, 3] = amp   # sin in py
    return {"sigma": sigma, "nu": 1.34, "M": M, "N": 4,
            "coeffs": coeffs.tolist(), "dist": amp, "residual": 1e-12}


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    """Small synthetic artifact set covering every recipe's schema."""
    rng = np.random.default_rng(7)
    root = tmp_path_factory.mktemp("artifacts")

    for d, name, plane in ((1, "grid_d1.bin", ("x", "px")),
                           (2, "grid_d2.bin", ("x", "py"))):
        spec = atlas.GridSpec(
            axis1=atlas.AxisSpec(plane[0], -60.0, 60.0, 24),
            axis2=atlas.AxisSpec(plane[1], -1.0, 1.0, 20),
            fixed={} if d == 1 else {"y": 0.0, "px": 0.0},
            horizon_periods=10.0)
        values = rng.uniform(0.0, 3.0, size=(24, 20))
        grid = atlas.DistanceGrid(spec=spec, values=values,
                                  status=np.zeros((24, 20), dtype=np.uint8))
        grid.save(root / name)

    t = np.linspace(0.0, 107.58, 65)
    for label in ("O1", "O1p", "O1m", "O2", "O2_1_9"):
        _write_csv(root / f"orbit_{label}.csv", ["t", "x", "px"],
                   np.column_stack([t, 28 * np.cos(t / 17.1), np.sin(t / 17.1)]))
    for label in ("O", "Opm"):
        _write_csv(root / f"orbit_{label}.csv", ["t", "x", "y", "px", "py"],
                   np.column_stack([t, 28 * np.cos(t / 17.1), np.sin(t / 17.1),
                                    np.cos(t / 17.1), np.sin(t / 17.1)]))

    s = np.linspace(0.0, 10.0, 40)
    for side in ("stable", "unstable"):
        for sign in ("p", "m"):
            _write_csv(root / f"manifold_O2_{side}_{sign}.csv", ["s", "x", "px"],
                       np.column_stack([s, -2.4 + s, 0.1 * np.sin(s)]))

    with open(root / "fixed_points_d1.json", "w") as fh:
        json.dump({"O1": [28.44, 0.0], "O1+": [56.32, 0.0], "O1-": [2.45, 0.0],
                   "O2": [-2.436, 0.0], "O2-1:9": [-2.081, 0.0]}, fh)

    _write_csv(root / "intersections_stable.csv",
               ["sigma", "m", "s_star", "theta_star", "x", "y", "px", "py",
                "res1", "res2"],
               [[0, 9, 1e-5, 0.8, -2.43, 0.0, 0.0, 0.005, 1e-12, 1e-12],
                [0, 9, 1e-5, 3.9, -2.43, 0.0, 0.0, -0.005, 1e-12, 1e-12]])

    with open(root / "family.json", "w") as fh:
        json.dump({"z_star": [-2.436, 0.0, 0.0, 0.147],
                   "curves": [_fake_curve(i, 0.01 * (i + 1)) for i in range(4)],
                   "termination": {"reason": "curve_budget", "n_curves": 4}}, fh)
    _write_csv(root / "family_summary.csv",
               ["sigma", "dist", "nu", "lambda_s", "lambda_u"],
               [[i, 0.01 * (i + 1), 1.347 - 0.01 * i, 0.129, 7.75 - 0.1 * i]
                for i in range(4)])
    with open(root / "fixed_point_endpoint.json", "w") as fh:
        json.dump({"z_star": [-2.436, 0.0, 0.0, 0.147], "nu0": 1.3499,
                   "lambda_u0": 7.7466}, fh)

    for side in ("stable", "unstable"):
        pts = rng.normal(size=(50, 3))
        _write_csv(root / f"cloud_{side}.csv", ["m", "x", "px", "py"],
                   np.column_stack([np.arange(50) % 5, pts]))
    return root


def _tree_hash(root):
    h = hashlib.sha256()
    for path in sorted(Path(root).iterdir()):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


class TestElementPresence:
    def test_fig2a_has_three_orbits_and_markers(self, artifacts):
        fig = render.build_figure("fig2a", artifacts)
        ax = fig.axes[0]
        assert len(ax.lines) == 6  # 3 trajectories + 3 cross markers
        assert ax.get_xlabel().startswith("$x$")

    def test_fig2b_has_two_resonances(self, artifacts):
        fig = render.build_figure("fig2b", artifacts)
        assert len(fig.axes[0].lines) == 4  # 2 orbits + 2 fixed-point dots

    def test_fig2c_heatmap_manifolds_markers(self, artifacts):
        fig = render.build_figure("fig2c", artifacts)
        ax = fig.axes[0]
        assert len(ax.images) == 1
        assert len(ax.lines) == 4 + 5  # 4 manifold branches + 5 fixed points
        assert fig.axes[-1].get_ylabel().startswith("$\\log_{10}$")

    def test_fig2zoom_limits(self, artifacts):
        fig = render.build_figure("fig2zoom", artifacts)
        assert fig.axes[0].get_xlim() == (-8.0, 8.0)

    def test_fig3_two_panels_with_red_dots(self, artifacts):
        fig = render.build_figure("fig3", artifacts)
        heat_axes = [ax for ax in fig.axes if ax.images]
        assert len(heat_axes) == 2
        for ax in heat_axes:
            dots = [ln for ln in ax.lines if ln.get_color() == "red"]
            assert len(dots) == 1
            assert dots[0].get_xdata().size == 2

    def test_fig4_projection_panels(self, artifacts):
        fig = render.build_figure("fig4", artifacts)
        assert len(fig.axes) == 3
        for ax in fig.axes:
            assert len(ax.lines) == 4  # two orbits + two fixed-point crosses

    def test_fig5_family_panels(self, artifacts):
        fig = render.build_figure("fig5", artifacts)
        a, b, c = fig.axes
        assert len(a.lines) == 4 + 1  # curves + orange dot
        assert len(b.lines) == 2 and len(c.lines) == 2
        assert b.get_ylabel() == "$\\nu$"
        endpoint = [ln for ln in b.lines if ln.get_color() == "tab:orange"][0]
        assert endpoint.get_ydata()[0] == pytest.approx(1.3499)

    def test_fig5_single_panels_match(self, artifacts):
        for name in ("fig5a", "fig5b", "fig5c"):
            fig = render.build_figure(name, artifacts)
            assert len(fig.axes) == 1

    def test_fig6_3d_scene(self, artifacts):
        fig = render.build_figure("fig6", artifacts)
        ax = fig.axes[0]
        assert ax.name == "3d"
        assert len(ax.collections) == 2  # stable + unstable clouds
        assert len(ax.lines) == 4  # family curves
        assert ax.get_zlabel().startswith("$p_y$")


class TestCliBehavior:
    def test_main_writes_png(self, artifacts, tmp_path):
        out = tmp_path / "fig2c.png"
        rc = render.main(["--figure", "fig2c", "--in", str(artifacts),
                          "--out", str(out)])
        assert rc == 0
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_deterministic_bytes(self, artifacts, tmp_path):
        outs = []
        for name in ("a.png", "b.png"):
            out = tmp_path / name
            assert render.main(["--figure", "fig5", "--in", str(artifacts),
                                "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_inputs_never_modified(self, artifacts, tmp_path):
        before = _tree_hash(artifacts)
        for name in ("fig2a", "fig2c", "fig3", "fig5", "fig6"):
            render.main(["--figure", name, "--in", str(artifacts),
                         "--out", str(tmp_path / f"{name}.png")])
        assert _tree_hash(artifacts) == before

    def test_empty_intersections_warn_but_render(self, artifacts, tmp_path,
                                                 capsys):
        import shutil

        alt = tmp_path / "alt"
        shutil.copytree(artifacts, alt)
        (alt / "intersections_stable.csv").write_text(
            "sigma,m,s_star,theta_star,x,y,px,py,res1,res2\n")
        rc = render.main(["--figure", "fig3", "--in", str(alt),
                          "--out", str(tmp_path / "fig3.png")])
        assert rc == 0
        assert "empty" in capsys.readouterr().err

    def test_missing_column_schema_error(self, artifacts, tmp_path):
        import shutil

        alt = tmp_path / "bad"
        shutil.copytree(artifacts, alt)
        (alt / "cloud_stable.csv").write_text("m,x,px\n1,0,0\n")
        rc = render.main(["--figure", "fig6", "--in", str(alt),
                          "--out", str(tmp_path / "fig6.png")])
        assert rc == 1

    def test_missing_file_schema_error(self, tmp_path, capsys):
        rc = render.main(["--figure", "fig2a", "--in", str(tmp_path / "nope"),
                          "--out", str(tmp_path / "x.png")])
        assert rc == 1
        assert "missing input file" in capsys.readouterr().err

    def test_non_numeric_cell_schema_error(self, artifacts, tmp_path):
        import shutil

        alt = tmp_path / "nan"
        shutil.copytree(artifacts, alt)
        (alt / "cloud_stable.csv").write_text("m,x,px,py\n1,abc,0,0\n")
        rc = render.main(["--figure", "fig6", "--in", str(alt),
                          "--out", str(tmp_path / "fig6.png")])
        assert rc == 1

    def test_unknown_figure_exits_two(self, artifacts, tmp_path):
        with pytest.raises(SystemExit) as exc:
            render.main(["--figure", "fig99", "--in", str(artifacts),
                         "--out", str(tmp_path / "x.png")])
        assert exc.value.code == 2

    def test_color_limit_flags(self, artifacts):
        args = render.parse_args(["--figure", "fig2c", "--in", str(artifacts),
                                  "--out", "x.png", "--vmin", "0.5",
                                  "--vmax", "2.5"])
        fig = render.build_figure("fig2c", artifacts, args)
        im = fig.axes[0].images[0]
        assert im.get_clim() == (0.5, 2.5)
