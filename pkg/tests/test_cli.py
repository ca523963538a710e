"""Command-line layer tests: dispatch, exit codes, artifacts, manifests."""

import json

import numpy as np
import pytest

from drivenatom import atlas, cli
from drivenatom.cli import _join_axis_values, main, sha256_file


FAST = ["--abs-tol", "1e-10", "--rel-tol", "1e-10"]


class TestDispatch:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "porbit" in capsys.readouterr().out

    def test_subcommand_help_exits_zero(self):
        for cmd in (["porbit", "--help"], ["atlas", "scan", "--help"],
                    ["repro", "--help"]):
            with pytest.raises(SystemExit) as exc:
                main(cmd)
            assert exc.value.code == 0

    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["porbit", "find", "--label", "O2", "--frobnicate"])
        assert exc.value.code == 2

    def test_unknown_repro_target_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["repro", "fig99"])
        assert exc.value.code == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0


class TestAxisJoining:
    def test_negative_range_fused(self):
        argv = ["atlas", "scan", "--x", "-60:60:1000", "--plane", "x,px"]
        joined = _join_axis_values(argv)
        assert "--x=-60:60:1000" in joined
        assert "-60:60:1000" not in joined

    def test_non_range_values_untouched(self):
        argv = ["porbit", "find", "--label", "O2"]
        assert _join_axis_values(argv) == argv


class TestErrorPaths:
    def test_numerical_error_exit_one_with_json(self, capsys, tmp_path):
        rc = main(["porbit", "find", "--label", "O", "--d", "1",
                   "--out", str(tmp_path / "o.json")] + FAST)
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigurationError"
        assert "O" in err["message"]
        assert err["argv"][0] == "porbit"

    def test_unknown_label_raises_keyerror(self, tmp_path):
        # an unknown label is a caller bug, not a numerical failure
        with pytest.raises(KeyError):
            main(["porbit", "find", "--label", "nope",
                  "--out", str(tmp_path / "o.json")] + FAST)


@pytest.fixture(scope="module")
def orbit_run(tmp_path_factory, capsys_disabled=None):
    out = tmp_path_factory.mktemp("cli") / "orbit_O2.json"
    rc = main(["porbit", "find", "--label", "O2", "--out", str(out)] + FAST)
    assert rc == 0
    return out


class TestOrbitArtifact:
    def test_orbit_json_contents(self, orbit_run):
        doc = json.loads(orbit_run.read_text())
        assert doc["z_star"][0] == pytest.approx(-2.436054165, abs=1e-5)
        assert doc["residual"] < 1e-8
        assert len(doc["monodromy_row_major"]) == 4

    def test_manifest_written_with_hashes(self, orbit_run):
        manifest = json.loads((orbit_run.parent / "orbit_O2.json.manifest.json").read_text())
        assert manifest["subcommand"] == "porbit find"
        assert manifest["outputs"][str(orbit_run)] == sha256_file(orbit_run)
        assert manifest["config"]["d"] == 1
        assert manifest["integrator"]["abs_tol"] == 1e-10
        assert manifest["wall_time_s"] > 0

    def test_refuses_overwrite_without_force(self, orbit_run, capsys):
        rc = main(["porbit", "find", "--label", "O2",
                   "--out", str(orbit_run)] + FAST)
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert "exists" in err["message"]

    def test_force_overwrites(self, orbit_run):
        rc = main(["porbit", "find", "--label", "O2", "--out", str(orbit_run),
                   "--force"] + FAST)
        assert rc == 0

    def test_replay_is_bit_exact(self, orbit_run, tmp_path):
        other = tmp_path / "replay.json"
        rc = main(["porbit", "find", "--label", "O2", "--out", str(other)] + FAST)
        assert rc == 0
        assert other.read_bytes() == orbit_run.read_bytes()


@pytest.fixture(scope="module")
def scan_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("scan")
    out = out_dir / "grid.bin"
    argv = ["atlas", "scan", "--plane", "x,px", "--x", "-30:30:4",
            "--px", "-1.2:1.2:3", "--horizon", "2T", "--escape-radius", "200",
            "--out", str(out), "--csv", str(out_dir / "grid.csv")] + FAST
    rc = main(argv)
    assert rc == 0
    return out


class TestAtlasScanCommand:
    def test_grid_loads(self, scan_run):
        grid = atlas.DistanceGrid.load(scan_run)
        assert grid.values.shape == (4, 3)
        assert grid.spec.horizon_periods == 2.0
        counts = grid.status_counts()
        assert counts["failed"] == 0

    def test_csv_exported(self, scan_run):
        lines = (scan_run.parent / "grid.csv").read_text().splitlines()
        assert lines[0] == "x,px,log10_distance,status"
        assert len(lines) == 13

    def test_manifest_covers_all_artifacts(self, scan_run):
        manifest = json.loads((scan_run.parent / "grid.bin.manifest.json").read_text())
        outs = set(manifest["outputs"])
        assert str(scan_run) in outs
        assert str(scan_run) + ".meta.json" in outs
        assert str(scan_run.parent / "grid.csv") in outs

    def test_missing_axis_flag_is_numerical_error(self, capsys, tmp_path):
        rc = main(["atlas", "scan", "--plane", "x,px", "--x", "0:1:2",
                   "--out", str(tmp_path / "g.bin")] + FAST)
        assert rc == 1
        assert "px" in json.loads(capsys.readouterr().err)["message"]

    def test_overlay_command(self, scan_run, tmp_path):
        pts = tmp_path / "pts.csv"
        pts.write_text("x,px\n0.0,0.0\n")
        out = tmp_path / "overlay.json"
        rc = main(["atlas", "overlay", "--grid", str(scan_run),
                   "--points", f"markers={pts}", "--out", str(out)] + FAST)
        assert rc == 0
        bundle = json.loads(out.read_text())
        assert bundle["assets"] == [{"label": "markers", "path": str(pts)}]
        assert bundle["grid"] == str(scan_run)


class TestManifold1DCommand:
    def test_branch_csv(self, tmp_path):
        out = tmp_path / "branch.csv"
        rc = main(["porbit", "manifold", "--label", "O2", "--side", "unstable",
                   "--sign", "1", "--arclength", "2", "--out", str(out)] + FAST)
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "s,x,px"
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == pytest.approx(-2.436054165, abs=1e-5)
