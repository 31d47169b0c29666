import csv
import subprocess
import sys

import pytest

from soprl.cli import main


def run_cli(*args):
    return main(list(args))


class TestRunCommand:
    def test_run_writes_csvs(self, tmp_path, capsys):
        code = run_cli("run", "--env", "pointmass1d", "--steps", "150",
                       "--seeds", "1", "--out", str(tmp_path),
                       "--eval-interval", "50", "--buffer", "2000",
                       "--batch", "16", "--warmup", "50", "--hidden", "8")
        assert code == 0
        assert (tmp_path / "seed_1.csv").exists()
        assert (tmp_path / "aggregate.csv").exists()
        out = capsys.readouterr().out
        assert "final eval return" in out

    def test_rejects_bad_gamma(self, capsys):
        code = run_cli("run", "--env", "pointmass1d", "--gamma", "1.5")
        assert code == 2
        assert "gamma" in capsys.readouterr().err

    def test_config_file_plus_overrides(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("env = pointmass1d\nsteps = 120\nbuffer = 2000\n"
                       "batch = 16\nwarmup = 50\nhidden = 8\neval_interval = 60\n")
        out = tmp_path / "out"
        code = run_cli("run", "--config", str(cfg), "--seeds", "2",
                       "--out", str(out))
        assert code == 0
        assert (out / "seed_2.csv").exists()


class TestAnalyzeCommand:
    def test_counts_csv_schema(self, tmp_path):
        out = tmp_path / "counts.csv"
        code = run_cli("analyze", "counts", "--scheme", "uniform_full",
                       "--buffer", "100", "--updates", "100",
                       "--trials", "200", "--out", str(out))
        assert code == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["index", "analytic", "empirical_mean", "empirical_sigma"]
        assert len(rows) == 1 + 200  # capacity + updates positions

    def test_ere_scheme_uses_eta(self, tmp_path):
        out = tmp_path / "ere.csv"
        code = run_cli("analyze", "counts", "--scheme", "ere_full",
                       "--eta", "0.99", "--buffer", "50", "--updates", "50",
                       "--trials", "100", "--out", str(out))
        assert code == 0


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert run_cli("selftest") == 0
        out = capsys.readouterr().out
        assert "PASSED" in out
        assert "FAIL " not in out


def test_module_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "soprl", "selftest"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert "selftest PASSED" in proc.stdout
