import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from driftflow.cli import EXIT_ERROR, EXIT_OK, EXIT_THRESHOLD, build_parser, main, make_config, read_config_file
from driftflow.particles import ParticleSet

COMMON = {"prior.csv", "posterior.csv", "map.json", "map_curve.csv", "report.json", "summary.json",
          "plot_particles.svg", "plot_map.svg"}


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


class TestRuns:
    def test_linear(self, tmp_path, capsys):
        code, out = run(tmp_path, "linear")
        assert code == EXIT_OK
        assert COMMON | {"oracle.csv"} <= {p.name for p in out.iterdir()}
        s = summary(out)
        assert s["passed"] and s["config"]["L"] == 30
        assert "PASS  mean_within_tol" in capsys.readouterr().out

    def test_cubic_writes_trajectories(self, tmp_path):
        code, out = run(tmp_path, "cubic")
        assert code == EXIT_OK
        assert {"flow.csv", "plot_flow.svg"} <= {p.name for p in out.iterdir()}
        header = (out / "flow.csv").read_text().splitlines()[0]
        assert header == "step,particle,x"

    @pytest.mark.slow
    def test_quartic(self, tmp_path):
        code, out = run(tmp_path, "quartic-compare")
        assert code == EXIT_OK
        lines = (out / "sir_runs.csv").read_text().splitlines()
        assert lines[0] == "method,L,seed,w1"
        assert len(lines) == 1 + 1 + 40
        assert (out / "plot_sir.svg").exists()

    def test_svg_is_svg(self, tmp_path):
        _, out = run(tmp_path, "linear")
        text = (out / "plot_map.svg").read_text()
        assert text.lstrip().startswith("<?xml") and "<svg" in text


class TestExitCodes:
    def test_threshold_failure(self, tmp_path, capsys):
        # one BFGS iteration per sub-step cannot reach the map tolerance
        code, out = run(tmp_path, "linear", "--max-iters", "1", "--noise-std", "0.3")
        assert code == EXIT_THRESHOLD
        assert "FAIL" in capsys.readouterr().out
        assert not summary(out)["passed"]

    def test_usage_error(self, tmp_path):
        assert main(["linear", "--bogus"]) == EXIT_ERROR
        assert main([]) == EXIT_ERROR

    def test_invalid_value(self, tmp_path):
        assert run(tmp_path, "linear", "--L", "1")[0] == EXIT_ERROR
        assert run(tmp_path, "linear", "--noise-std", "-1")[0] == EXIT_ERROR

    def test_custom_needs_expression(self, tmp_path):
        assert run(tmp_path, "custom")[0] == EXIT_ERROR

    def test_parse_error_offset(self, tmp_path, capsys):
        code, _ = run(tmp_path, "custom", "--expr", "(x+")
        assert code == EXIT_ERROR
        assert "offset 3" in capsys.readouterr().err

    def test_help(self):
        assert main(["--help"]) == EXIT_OK


class TestCustom:
    def test_matches_linear(self, tmp_path):
        assert run(tmp_path, "linear", name="lin")[0] == EXIT_OK
        assert run(tmp_path, "custom", "--expr=-(x-1)^2/2", name="cus")[0] == EXIT_OK
        a = ParticleSet.from_csv((tmp_path / "lin" / "posterior.csv").read_text())
        b = ParticleSet.from_csv((tmp_path / "cus" / "posterior.csv").read_text())
        np.testing.assert_allclose(b.locations, a.locations, rtol=0, atol=1e-9)

    def test_zero_is_flat(self, tmp_path):
        code, out = run(tmp_path, "custom", "--expr", "0")
        assert code == EXIT_OK
        prior = ParticleSet.from_csv((out / "prior.csv").read_text())
        post = ParticleSet.from_csv((out / "posterior.csv").read_text())
        np.testing.assert_allclose(post.locations, prior.locations, atol=1e-9)


class TestConfig:
    def test_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.conf"
        cfg.write_text('# linear run\nL = 12\nnoise-std = 0.6  # sharper\ny_hat = 2\nout = "x"\n')
        args = build_parser().parse_args(["linear", "--config", str(cfg), "--L", "20"])
        config = make_config(args)
        assert config.L == 20
        assert config.noise_std == 0.6 and config.y_hat == 2.0
        assert config.output_dir == Path("x")

    def test_bad_line(self, tmp_path):
        cfg = tmp_path / "bad.conf"
        cfg.write_text("L 12\n")
        with pytest.raises(ValueError, match="bad.conf:1"):
            read_config_file(cfg)

    def test_unknown_key_exit_code(self, tmp_path):
        cfg = tmp_path / "bad.conf"
        cfg.write_text("colour = red\n")
        assert main(["linear", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_ERROR

    def test_missing_file(self, tmp_path):
        assert main(["linear", "--config", str(tmp_path / "nope")]) == EXIT_ERROR


def test_byte_identical_reruns(tmp_path):
    _, a = run(tmp_path, "cubic", "--L", "20", name="a")
    _, b = run(tmp_path, "cubic", "--L", "20", name="b")
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "driftflow", "linear", "--L", "10", "--out", str(tmp_path / "m")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "outputs written to" in proc.stdout
