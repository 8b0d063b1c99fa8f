import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from slhjb import __version__
from slhjb.cli import main
from slhjb.config import load_surface, shipped_config
from slhjb.quadrature import hermite_rule


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.strip() == f"slhjb {__version__} (config schema 1)"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "slhjb", "--version"], capture_output=True, text=True, check=True)
    assert res.stdout.startswith("slhjb ")


def test_missing_subcommand(capsys):
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


class TestQuad:
    @pytest.mark.parametrize("M", [2, 5])
    def test_stdout_csv(self, M):
        code, text = run(["quad", "--order", str(M)])
        assert code == 0
        lines = list(csv.reader(io.StringIO(text)))
        assert lines[0] == ["node_1", "weight"]
        rule = hermite_rule(M)
        got = np.array([[float(c) for c in row] for row in lines[1:]])
        np.testing.assert_array_equal(got[:, 0], rule.nodes[:, 0])
        np.testing.assert_array_equal(got[:, 1], rule.weights)
        assert not any(c.startswith("-0.0") and float(c) == 0 for row in lines for c in row)

    def test_reduced_tensor_to_file(self, tmp_path):
        code, _ = run(["quad", "-M", "3", "-p", "3", "--reduce", "--out", str(tmp_path / "q.csv")])
        assert code == 0
        lines = _rows(tmp_path / "q.csv")
        assert lines[0] == ["node_1", "node_2", "node_3", "weight"]
        assert 1 < len(lines) - 1 <= 23
        assert sum(float(r[-1]) for r in lines[1:]) == pytest.approx(1.0, abs=1e-12)

    def test_invalid_order(self, capsys):
        code, _ = run(["quad", "--order", "1"])
        assert code == 1
        assert capsys.readouterr().err.startswith("error: invalid-order: ")


class TestSolve:
    def test_default_call(self, tmp_path):
        code, text = run(["solve", "--N", "32", "--out", str(tmp_path / "v.csv")])
        assert code == 0
        assert text.startswith("V(0, s=100) = ")
        value = float(text.split("=")[2].split()[0])
        assert value == pytest.approx(22.72, abs=1.0)
        lines = _rows(tmp_path / "v.csv")
        assert lines[0] == ["x", "s", "V", "policy"]
        assert len(lines) == 32 * 32 // 4 + 2

    def test_surface_for_feedback_mc(self, tmp_path):
        model = str(shipped_config("butterfly_linear.cfg"))
        surf = str(tmp_path / "b.npz")
        code, _ = run(["solve", "--model", model, "--N", "16", "--J", "128", "--gh-order", "3",
                       "--surface", surf, "--all-slices"])
        assert code == 0
        s = load_surface(surf)
        assert s.gh_order == 3 and len(s.values) == 17
        code, text = run(["mc", "--model", model, "--policy", surf, "--paths", "2000", "--seed", "1",
                          "--s0", "150"])
        assert code == 0
        assert text.startswith("estimate=")

    def test_policy_needs_all_slices(self, tmp_path, capsys):
        surf = str(tmp_path / "c.npz")
        assert run(["solve", "--N", "8", "--surface", surf])[0] == 0
        code, _ = run(["mc", "--policy", surf, "--paths", "10"])
        assert code == 1
        assert "all slices" in capsys.readouterr().err

    def test_policy_model_mismatch(self, tmp_path, capsys):
        surf = str(tmp_path / "c.npz")
        assert run(["solve", "--N", "8", "--surface", surf, "--all-slices"])[0] == 0
        code, _ = run(["mc", "--model", str(shipped_config("butterfly_linear.cfg")), "--policy", surf])
        assert code == 1
        assert capsys.readouterr().err.startswith("error: configuration: ")

    def test_bad_domain_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["solve", "--domain", "5,1"])
        assert info.value.code == 2

    def test_missing_model_file(self, tmp_path, capsys):
        code, _ = run(["solve", "--model", str(tmp_path / "none.cfg")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error: configuration: ")


class TestMonteCarlo:
    def test_constant_control_against_closed_form(self):
        code, text = run(["mc", "--control", "const:0.15", "--paths", "100000", "--seed", "7", "--reference", "bs"])
        assert code == 0
        first, second = text.strip().splitlines()
        est = float(first.split()[0].split("=")[1])
        assert est == pytest.approx(22.72, abs=0.3)
        assert second.endswith("within_3se=yes")

    def test_numeric_reference(self):
        code, text = run(["mc", "--control", "const:0.15", "--paths", "1000", "--antithetic", "--reference", "0"])
        assert code == 0
        assert "within_3se=no" in text

    @pytest.mark.parametrize("argv", [["mc"], ["mc", "--control", "linear:2"],
                                      ["mc", "--control", "const:0.1", "--policy", "x.npz"]])
    def test_control_errors(self, argv, capsys):
        assert run(argv)[0] == 1
        assert capsys.readouterr().err.startswith("error: configuration: ")

    def test_odd_antithetic_paths(self, capsys):
        assert run(["mc", "--control", "const:0.1", "--paths", "7", "--antithetic"])[0] == 1
        assert capsys.readouterr().err.startswith("error: invalid-argument: ")

    def test_no_closed_form_for_butterfly(self, capsys):
        argv = ["mc", "--model", str(shipped_config("butterfly_linear.cfg")), "--control", "const:0.1",
                "--paths", "100", "--reference", "bs"]
        assert run(argv)[0] == 1
        assert "closed-form" in capsys.readouterr().err


class TestConverge:
    def test_call_study_small(self, tmp_path):
        out = tmp_path / "study.csv"
        code, text = run(["converge", "--study", str(shipped_config("call_linear.cfg")), "--k-range", "1..3",
                          "--out", str(out)])
        assert code == 0
        for M in (2, 4):
            lines = _rows(tmp_path / f"study_M{M}.csv")
            assert lines[0] == ["k", "N", "J", "error", "order", "cpu_s"]
            assert [r[:3] for r in lines[1:]] == [["1", "32", "256"], ["2", "64", "1024"], ["3", "128", "4096"]]
            assert lines[1][4] == "-"
        assert "# M=4" in text

    def test_single_order_writes_named_file(self, tmp_path):
        out = tmp_path / "b.csv"
        code, _ = run(["converge", "--study", str(shipped_config("butterfly_linear.cfg")), "--k-range", "1..2",
                       "--gh-order", "2", "--out", str(out)])
        assert code == 0
        lines = _rows(out)
        assert lines[0] == ["k", "N", "J", "error_1", "order_1", "error_2", "order_2", "cpu_s"]
        assert len(lines) == 3

    def test_skipped_levels_are_reported(self, tmp_path):
        out = tmp_path / "p.csv"
        code, text = run(["converge", "--study", str(shipped_config("butterfly_pchip_n16.cfg")),
                          "--k-range", "1..2", "--gh-order", "2", "--out", str(out)])
        assert code == 0
        assert "skipped" in text
        assert all(r[3] == "nan" for r in _rows(out)[1:])

    def test_config_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[scheme]\ngh-order = 1\n")
        assert run(["converge", "--study", str(bad)])[0] == 1
        err = capsys.readouterr().err
        assert err.startswith(f"error: configuration: {bad}:2: [scheme] gh-order")
        assert err.count("\n") == 1
