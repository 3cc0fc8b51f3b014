import csv
import json

import numpy as np
import pytest

from kantnash import cli
from kantnash.core import ConvergenceError, UnsupportedError
from kantnash.scenarios import altruistic_action


def read_rows(path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


class TestParsing:
    def test_sweep_inclusive(self):
        assert cli.parse_sweep("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
        assert len(cli.parse_sweep("0:1:0.1")) == 11
        assert len(cli.parse_sweep("0:1:0.05")) == 21

    def test_sweep_off_lattice_stop(self):
        assert cli.parse_sweep("0:1:0.3") == (0.0, 0.3, 0.6, 0.9)

    @pytest.mark.parametrize("text", ["0:1", "a:b:c", "0:1:0", "1:0:0.1", "0:1:-0.1"])
    def test_sweep_invalid(self, text):
        with pytest.raises(cli.UsageError):
            cli.parse_sweep(text)

    def test_load_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nscenario = four_type\n\nalpha=0.5  # inline\n")
        assert cli.load_config(path) == {"scenario": "four_type", "alpha": "0.5"}

    def test_load_config_bad_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("scenario four_type\n")
        with pytest.raises(cli.UsageError, match="key=value"):
            cli.load_config(path)

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("scenario=continuum_uniform\nn=11\nxi=ramp\nseed=1\n")
        args = cli.build_parser().parse_args(
            ["solve", "--config", str(path), "n=21", "seed=2", "--seed", "3", "--alpha", "0.2"])
        cfg = cli.resolve_config(args)
        assert (cfg.n, cfg.seed, cfg.xi, cfg.alphas) == (21, 3, "ramp", (0.2,))

    def test_grid_n_alias(self):
        cfg = cli.resolve_config(cli.build_parser().parse_args(["solve", "scenario=four_type", "grid_n=31"]))
        assert cfg.n == 31

    def test_defaults(self):
        parser = cli.build_parser()
        solve = cli.resolve_config(parser.parse_args(["solve", "scenario=four_type"]))
        verify = cli.resolve_config(parser.parse_args(["verify", "scenario=four_type"]))
        assert solve.alphas == cli.parse_sweep(cli.DEFAULT_SWEEP)
        assert verify.alphas == cli.DEFAULT_VERIFY_ALPHAS

    def test_infinite_beta(self):
        cfg = cli.resolve_config(cli.build_parser().parse_args(["solve", "scenario=symmetric_fishing",
                                                                "beta=inf"]))
        assert cfg.beta == np.inf


class TestUsageErrors:
    @pytest.mark.parametrize("argv", [
        ["solve", "scenario=tragedy"],
        ["solve", "scenario=four_type", "--sweep", "0:1"],
        ["solve", "scenario=four_type", "colour=red"],
        ["solve", "scenario=four_type", "--alpha", "1.5"],
        ["solve", "scenario=four_type", "--alpha", "0.5", "--sweep", "0:1:0.5"],
        ["solve", "scenario=four_type", "--format", "pdf"],
        ["solve", "scenario=four_type", "n=abc"],
        ["solve", "alpha=0.5"],
        ["solve", "scenario=four_type", "oops"],
        ["frobnicate"],
    ])
    def test_exit_two(self, argv, tmp_path, capsys):
        assert cli.main(argv + ["--out", str(tmp_path)] if argv[0] == "solve" else argv) == cli.EXIT_USAGE

    def test_continuum_rejects_beta(self, tmp_path):
        argv = ["solve", "scenario=continuum_uniform", "beta=1", "n=11", "--alpha", "0.5", "--out", str(tmp_path)]
        assert cli.main(argv) == cli.EXIT_USAGE

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        argv = ["solve", "scenario=four_type", "--alpha", "0.5", "--out", str(blocker / "sub")]
        assert cli.main(argv) == cli.EXIT_USAGE


class TestSolve:
    def test_symmetric_sweep(self, tmp_path):
        assert cli.main(["solve", "scenario=symmetric_fishing", "--sweep", "0:1:0.05", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "equilibrium.csv")
        assert len(rows) == 63
        assert list(rows[0]) == list(cli.COLUMNS)
        kant = [r for r in rows if r["type_or_x"] == "kantian"]
        nash = [r for r in rows if r["type_or_x"] == "nash"]
        alt = [r for r in rows if r["type_or_x"] == "altruistic"]
        assert len(kant) == len(nash) == len(alt) == 21
        for r in kant:
            assert abs(float(r["action"]) - 1 / (3 + float(r["alpha"]))) < 1e-8
            assert float(r["residual"]) < 1e-8
        for r in nash:
            assert abs(float(r["action"]) - 1 / 3) < 1e-8
        for r in alt:
            assert r["solver"] == "closed_form"
            assert float(r["action"]) == float("%.12g" % altruistic_action(float(r["alpha"])))

    def test_four_type(self, tmp_path):
        assert cli.main(["solve", "scenario=four_type", "--alpha", "0.5", "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "equilibrium.csv")
        assert len(rows) == 8
        assert [r["solver"] for r in rows] == ["rkn_direct"] * 4 + ["hrkn_direct"] * 4
        assert [r["type_or_x"] for r in rows[:4]] == ["(1;1)", "(1;2)", "(2;1)", "(2;2)"]
        assert all(float(r["residual"]) < 1e-10 for r in rows)

    def test_four_type_with_risk(self, tmp_path):
        argv = ["solve", "scenario=four_type", "beta=2", "--alpha", "0.5", "--out", str(tmp_path)]
        assert cli.main(argv) == 0
        rows = read_rows(tmp_path / "equilibrium.csv")
        assert len(rows) == 4 and rows[0]["solver"] == "fixed_point"

    def test_continuum(self, tmp_path):
        argv = ["solve", "scenario=continuum_uniform", "n=21", "--alpha", "0.5", "--out", str(tmp_path)]
        assert cli.main(argv) == 0
        rows = read_rows(tmp_path / "equilibrium.csv")
        assert len(rows) == 21
        assert float(rows[0]["type_or_x"]) == 0.0 and float(rows[-1]["type_or_x"]) == 1.0
        assert all(abs(float(r["action"]) - 2 / 7) < 1e-8 for r in rows)

    def test_metadata(self, tmp_path):
        argv = ["solve", "scenario=four_type", "--alpha", "0.5", "--format", "csv,svg", "--out", str(tmp_path)]
        assert cli.main(argv) == 0
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert meta["status"] == "ok" and meta["failures"] == []
        assert meta["files"] == ["equilibrium.csv", "four_type.svg"]
        assert meta["settings"]["alpha"] == "0.5"
        assert meta["solver"]["tol"] == 1e-10
        assert {"python", "numpy", "kantnash"} <= set(meta["versions"])
        assert (tmp_path / "four_type.svg").read_text().startswith("<svg")

    def test_svg_only(self, tmp_path):
        argv = ["solve", "scenario=symmetric_fishing", "--sweep", "0:1:0.5", "--format", "svg", "--out", str(tmp_path)]
        assert cli.main(argv) == 0
        assert (tmp_path / "symmetric_fishing.svg").exists()
        assert not (tmp_path / "equilibrium.csv").exists()

    def test_svg_deterministic(self, tmp_path):
        argv = ["solve", "scenario=continuum_windowed", "n=21", "--sweep", "0:1:0.5", "--format", "svg"]
        assert cli.main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert cli.main(argv + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "continuum_windowed.svg").read_bytes()
        assert a == (tmp_path / "b" / "continuum_windowed.svg").read_bytes()

    def test_nonconvergence_exit(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(cli, "_solver_config", lambda cfg: cli.SolverConfig(max_outer=2))
        argv = ["solve", "scenario=symmetric_fishing", "--alpha", "0.5", "--out", str(tmp_path)]
        assert cli.main(argv) == cli.EXIT_NONCONVERGED
        assert json.loads((tmp_path / "metadata.json").read_text())["status"] == "nonconverged"
        assert "not converged" in capsys.readouterr().err

    def test_solver_error_exit(self, tmp_path, monkeypatch):
        def boom(spec):
            raise ConvergenceError("stalled")
        monkeypatch.setattr(cli, "solve_continuum", boom)
        argv = ["solve", "scenario=continuum_uniform", "n=11", "--alpha", "0.5", "--out", str(tmp_path)]
        assert cli.main(argv) == cli.EXIT_NONCONVERGED


class TestVerify:
    def test_symmetric(self, capsys):
        assert cli.main(["verify", "scenario=symmetric_fishing"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 9 and "FAIL" not in out

    def test_four_type(self, capsys):
        assert cli.main(["verify", "scenario=four_type", "samples=200", "--alpha", "0.5"]) == 0
        assert "monotonicity" in capsys.readouterr().out

    def test_continuum_uniform(self, capsys):
        assert cli.main(["verify", "scenario=continuum_uniform", "--alpha", "0.5", "n_types=21"]) == 0
        out = capsys.readouterr().out
        assert "finite cross-check" in out and "closed-form action" in out and "FAIL" not in out

    def test_windowed_skips_crosscheck(self, capsys):
        assert cli.main(["verify", "scenario=continuum_windowed", "--sweep", "0:0.5:0.5", "n=51", "n_types=11"]) == 0
        out = capsys.readouterr().out
        assert "degenerates" in out and "SKIP" in out

    def test_failure_exit(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, "verify_checks", lambda cfg: [cli.Check("forced", 1.0, 0.5)])
        assert cli.main(["verify", "scenario=four_type"]) == cli.EXIT_VERIFY_FAILED
        assert "FAIL forced" in capsys.readouterr().out

    def test_unsupported_exit(self, monkeypatch):
        def refuse(cfg):
            raise UnsupportedError("no")
        monkeypatch.setattr(cli, "verify_checks", refuse)
        assert cli.main(["verify", "scenario=four_type"]) == cli.EXIT_USAGE


class TestCheck:
    def test_lower_bound(self):
        assert cli.Check("m", 0.1, 0.0, lower_bound=True).passed
        assert not cli.Check("m", -0.1, 0.0, lower_bound=True).passed
        assert cli.Check("r", 1e-9, 1e-8).line().startswith("PASS r")


def test_list_scenarios(capsys):
    assert cli.main(["list-scenarios"]) == 0
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert names == ["symmetric_fishing", "four_type", "continuum_uniform", "continuum_windowed"]


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
