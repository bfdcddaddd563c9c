import json
import math

import pytest

from nonconv.cli import main

TINY_IID = """
[model]
kind = iid
atoms = [[1.0], [-1.0]]
probs = [0.5, 0.5]

[observable]
kind = product
arity = 1

[run]
n_grid = [50]
replicates = 300
seed = 5
statistics = ["tails"]
"""

TINY_CHAIN = """
[model]
kind = markov
transition = [[0.9, 0.1], [0.2, 0.8]]
values = [[1.0], [-1.0]]

[observable]
kind = product
arity = 2

[run]
n_grid = [16]
replicates = 200
seed = 3
statistics = ["tails"]
bound_checks = ["chernoff"]

[martingale]
b = 2.0
"""


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


class TestBoundsCommand:
    def test_berry_esseen_value(self, capsys):
        rc = main(["bounds", "berry-esseen", "--delta", "1", "--gamma", "1"])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "0.10295244508785542"

    def test_momthm_value(self, capsys):
        rc = main(["bounds", "momthm", "--p", "3", "--n", "100", "--c0", "2"])
        assert rc == 0
        # value passes through a log/exp round trip, so compare numerically
        assert float(capsys.readouterr().out) == pytest.approx(86400.0, rel=1e-12)

    def test_chernoff_value(self, capsys):
        rc = main([
            "bounds", "chernoff", "--t", "2", "--n", "100", "--arity", "2",
            "--delta1", "1", "--delta2", "1", "--b", "1",
        ])
        assert rc == 0
        got = float(capsys.readouterr().out)
        assert got == pytest.approx(math.exp(-4.0 / 800.0), rel=1e-15)

    def test_variance_and_rate(self, capsys):
        assert main(["bounds", "variance", "--n", "400", "--c", "1.25"]) == 0
        assert capsys.readouterr().out.strip() == "25"
        assert main(["bounds", "mdp-rate", "--x", "3"]) == 0
        assert capsys.readouterr().out.strip() == "4.5"

    def test_moddev_window_refusal_is_printed_not_raised(self, capsys):
        rc = main([
            "bounds", "moddev", "--x", "4", "--n", "4096", "--c5", "1.5", "--c4", "1",
        ])
        assert rc == 0
        assert capsys.readouterr().out.strip() == "OUT_OF_WINDOW"
        rc = main([
            "bounds", "moddev", "--x", "2", "--n", "4096", "--c5", "1.5", "--c4", "1",
        ])
        assert rc == 0
        assert float(capsys.readouterr().out) == pytest.approx(
            1.5 * 9.0 * 4096 ** (-1 / 6), rel=1e-12
        )

    def test_bad_arguments_exit_two(self, capsys):
        rc = main(["bounds", "chernoff", "--delta1", "0"])
        assert rc == 2
        assert "config error" in capsys.readouterr().err


class TestSimulateCommand:
    def test_tiny_run_writes_reports(self, tmp_path, capsys):
        cfg = _write(tmp_path, TINY_IID)
        out = tmp_path / "out"
        rc = main(["simulate", cfg, "--out-dir", str(out)])
        assert rc == 0
        assert "wrote" in capsys.readouterr().out
        sums = (out / "sums.csv").read_text().splitlines()
        assert sums[0] == "n_terms,replicate,sum"
        assert len(sums) == 1 + 300
        assert (out / "tails.csv").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["master_seed"] == 5
        assert man["verdicts"] == {}
        assert sorted(man["outputs"]) == ["sums.csv", "tails.csv"]

    def test_chain_run_records_chernoff_verdict(self, tmp_path, capsys):
        cfg = _write(tmp_path, TINY_CHAIN)
        out = tmp_path / "out"
        rc = main(["simulate", cfg, "--out-dir", str(out)])
        man = json.loads((out / "manifest.json").read_text())
        assert "chernoff" in man["verdicts"]
        assert rc == (1 if man["verdicts"]["chernoff"] == "fail" else 0)
        assert "chernoff_refuted_points" in man["notes"]

    def test_worker_count_leaves_bytes_unchanged(self, tmp_path, capsys):
        cfg = _write(tmp_path, TINY_IID)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", cfg, "--out-dir", str(a), "--workers", "1"]) == 0
        assert main(["simulate", cfg, "--out-dir", str(b), "--workers", "2"]) == 0
        for name in ("sums.csv", "tails.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_grid_override(self, tmp_path, capsys):
        cfg = _write(tmp_path, TINY_IID)
        out = tmp_path / "out"
        assert main(["simulate", cfg, "--out-dir", str(out), "--n-grid", "32"]) == 0
        first_data = (out / "sums.csv").read_text().splitlines()[1]
        assert first_data.startswith("32,")

    def test_unknown_statistic_exits_two(self, tmp_path, capsys):
        cfg = _write(tmp_path, TINY_IID.replace('["tails"]', '["entropy"]'))
        rc = main(["simulate", cfg, "--out-dir", str(tmp_path / "o")])
        assert rc == 2
        assert "unknown statistic" in capsys.readouterr().err

    def test_missing_config_exits_two(self, capsys):
        assert main(["simulate", "/nope/missing.cfg"]) == 2


class TestVerifyCommand:
    def test_unknown_suite_exits_two(self, capsys):
        assert main(["verify", "nonexistent-suite"]) == 2
        assert "config error" in capsys.readouterr().err
