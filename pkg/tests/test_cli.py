import csv
import subprocess
import sys

import numpy as np
import pytest

from eyeblink import cli
from eyeblink import experiments as ex
from eyeblink.geometry import strip_to_eye

QUICK = ["--preset", "heat51", "--t-end", "0.01", "--no-figures"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


class TestValidate:
    def write(self, tmp_path, text):
        p = tmp_path / "cfg.txt"
        p.write_text(text)
        return p

    def test_valid_preset(self, tmp_path, capsys):
        p = self.write(tmp_path, "preset = film53\nlid.c = 0.8\nlid.nu = 1\n")
        assert cli.main(["validate", "--config", str(p)]) == ex.EXIT_OK
        assert capsys.readouterr().out.strip() == "ok"
        assert ex.validate(ex.preset("film53")) == []

    @pytest.mark.parametrize("line,key", [("lid.c = 1.2", "lid.c"), ("map.alpha = 1.0", "map.alpha"),
                                          ("flux.kappa = 0", "flux.kappa"), ("time.snapshots = 0 5", "time.snapshots")])
    def test_violation_names_field(self, tmp_path, capsys, line, key):
        p = self.write(tmp_path, f"preset = heat51\n{line}\n")
        assert cli.main(["validate", "--config", str(p)]) == ex.EXIT_CONFIG
        out = capsys.readouterr().out
        assert out.startswith(key + ":")

    def test_unknown_key_and_bad_value(self, tmp_path, capsys):
        p = self.write(tmp_path, "preset = heat51\nlid.colour = red\ngrid.nx = many\n")
        assert cli.main(["validate", "--config", str(p)]) == ex.EXIT_CONFIG
        out = capsys.readouterr().out
        assert "lid.colour: unknown key" in out and "grid.nx: cannot parse" in out

    def test_sweep_entries_validated(self, tmp_path, capsys):
        p = self.write(tmp_path, "preset = porous52\nsweep.flux.kappa = 0.5, 1.5\n")
        assert cli.main(["validate", "--config", str(p)]) == ex.EXIT_CONFIG
        assert "flux.kappa=1.5: flux.kappa:" in capsys.readouterr().out

    def test_source_outside_domain(self):
        assert any(v.startswith("kernel.x0") for v in ex.validate(ex.preset("heat51", x0=0.999, y0=0.0)))

    def test_run_rejects_bad_override(self, tmp_path, capsys):
        code = cli.main(["run", "--preset", "porous52", "--kappa", "2", "--out", str(tmp_path)])
        assert code == ex.EXIT_CONFIG
        assert "flux.kappa" in capsys.readouterr().err


class TestPresets:
    def test_fidelity(self):
        h = ex.preset("heat51")
        assert (h.nx, h.ny, h.c, h.nu, h.t0, h.x0, h.y0, h.kappa, h.rtol, h.t_end) == (
            28, 24, 0.8, 16.0, 0.01, 0.1, 0.2, 1.0, 1e-9, 0.125)
        p = ex.preset("porous52")
        assert (p.nx, p.ny, p.c, p.nu, p.rtol, p.t_end, p.bc) == (32, 48, 0.7, 1.0, 1e-9, 2.0, "no-flux")
        f = ex.preset("film53")
        assert (f.nx, f.ny, f.c, f.nu, f.A, f.B, f.h0, f.rtol, f.t_end) == (31, 40, 0.8, 1.0, 1.0, 1e-9, 0.1, 1e-7, 2.0)
        assert p.snapshots == f.snapshots == (0.0, 0.25, 0.5, 0.75, 1.0)
        assert all(abs(s * 8 - round(s * 8)) < 1e-12 or abs(s * 32 - round(s * 32)) < 1e-12 for s in h.snapshots)

    def test_unknown_preset(self):
        with pytest.raises(ex.ConfigError):
            ex.preset("nope")


class TestRun:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert cli.main(["run", *QUICK, "--out", str(out)]) == ex.EXIT_OK
        summary = (out / "summary.txt").read_text()
        assert "PASS  max relative L2 error" in summary and "wall time" in summary
        assert "Newton iterations" in summary and "Jacobian evaluations" in summary
        assert capsys.readouterr().out == summary
        head, snap = read_csv(out / "snapshots" / "t=0.01.csv")
        assert head == ["x", "y", "h"] and snap.shape == (28 * 24, 3)
        assert read_csv(out / "mass.csv")[0] == ["t", "M", "relchange"]
        head, err = read_csv(out / "error.csv")
        assert head == ["t", "relerr"] and err[:, 1].max() <= 1e-4
        assert not (out / "lid.csv").exists()
        first = (out / "snapshots" / "t=0.csv").read_text().splitlines()[1]
        assert all(format(float(v), ".17g") == v for v in first.split(","))

    def test_snapshot_coordinates_are_physical(self, tmp_path):
        out = tmp_path / "run"
        cli.main(["run", *QUICK, "--out", str(out)])
        _, snap = read_csv(out / "snapshots" / "t=0.csv")
        m = ex.build_model(ex.preset("heat51"))
        mg = m.mapped_grid(0.0)
        x, y = strip_to_eye(mg.xs, mg.ys)
        np.testing.assert_array_equal(snap[:, 0], x.ravel())
        np.testing.assert_array_equal(snap[:, 1], y.ravel())

    def test_threshold_exit(self, tmp_path):
        code = cli.main(["run", "--preset", "heat51", "--grid", "8x8", "--t-end", "0.01",
                         "--no-figures", "--out", str(tmp_path)])
        assert code == ex.EXIT_THRESHOLDS
        assert "FAIL  max relative L2 error" in (tmp_path / "summary.txt").read_text()

    def test_stagnation_exit(self, tmp_path, capsys):
        code = cli.main(["run", "--preset", "film53", "--h0", "0.005", "--grid", "15x20", "--t-end", "1",
                         "--no-figures", "--out", str(tmp_path)])
        assert code == ex.EXIT_STAGNATION
        assert "last t reached" in capsys.readouterr().err
        head, lid = read_csv(tmp_path / "lid.csv")
        assert head == ["t", "upper", "lower"] and np.all(np.isfinite(lid))
        assert "status  STAGNATED" in (tmp_path / "summary.txt").read_text()

    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert cli.main(["run", *QUICK, "--grid", "12x10", "--out", str(d)]) in (0, 2)
        files = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
        assert files
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_figures(self, tmp_path):
        out = tmp_path / "fig"
        cli.main(["run", "--preset", "heat51", "--t-end", "0.01", "--grid", "12x10", "--out", str(out)])
        names = {p.name for p in (out / "figures").iterdir()}
        assert {"snapshots.png", "mass.png", "error.png", "lidmotion.png"} <= names
        assert (out / "figures" / "snapshots.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_config_file_run(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text(f"preset = heat51\ntime.t_end = 0.005\ntime.snapshots = 0 0.005\noutput.dir = {tmp_path / 'o'}\n")
        assert cli.main(["run", "--config", str(cfg), "--no-figures"]) == ex.EXIT_OK
        assert (tmp_path / "o" / "snapshots" / "t=0.005.csv").exists()

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "eyeblink", "validate", "--config", str(tmp_path / "missing")],
                           capture_output=True, text=True)
        assert r.returncode == ex.EXIT_CONFIG


def test_sweep_runs_each_combination(tmp_path, capsys):
    cfg = tmp_path / "s.txt"
    cfg.write_text(
        f"preset = porous52\ngrid.nx = 8\ngrid.ny = 8\ntime.t_end = 0.02\ntime.snapshots = 0.02\n"
        f"tol.rtol = 1e-6\ntol.atol = 1e-6\noutput.dir = {tmp_path / 'sw'}\nsweep.flux.kappa = 0.5, 1.0\n"
    )
    code = cli.main(["sweep", "--config", str(cfg), "--no-figures"])
    assert code in (ex.EXIT_OK, ex.EXIT_THRESHOLDS)
    for k in ("0.5", "1.0"):
        assert (tmp_path / "sw" / f"flux.kappa={k}" / "mass.csv").exists()
    assert capsys.readouterr().out.count("== flux.kappa=") == 2
