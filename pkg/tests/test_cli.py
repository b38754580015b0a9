import csv
import json
import subprocess
import sys

import pytest

from cesmc import model_path
from cesmc.cli import main

T1 = str(model_path("tiny-t1"))
R1 = str(model_path("tiny-repair1"))


def run(tmp_path, *args):
    code = main([*args, "--out-dir", str(tmp_path)])
    return code, tmp_path


def load(path):
    return json.loads(path.read_text())


def test_mc_uses_chernoff_bound(tmp_path):
    code, out = run(tmp_path, "mc", "--model", T1, "--property", "F (x = 2)",
                    "--epsilon", "0.1", "--delta", "0.1")
    assert code == 0
    est = load(out / "result.json")["estimate"]
    assert est["n"] == 150
    assert est["sample_variance"] == est["gamma_hat"] * (1 - est["gamma_hat"]) * 150 / 149
    man = load(out / "manifest.json")
    assert man["seed"] == 0 and man["config"]["mode"] == "mc" and "workers" not in man["config"]


def test_ce_writes_one_row_per_iteration(tmp_path):
    code, out = run(tmp_path, "ce", "--model", T1, "--property", "F (x = 2)",
                    "--nj", "200", "--max-iterations", "20", "--n-is", "1000")
    assert code == 0
    with open(out / "convergence.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "lambda_1", "lambda_2", "hits", "undecided",
                       "gamma_hat", "sample_variance"]
    assert len(rows) == 21 and [r[0] for r in rows[1:]] == [str(i) for i in range(20)]
    res = load(out / "result.json")
    assert res["initial_search"]["restarts"] == 0
    assert abs(res["estimate"]["gamma_hat"] - 0.75) < 0.01
    assert sum(res["lambda"]) == pytest.approx(2.0)


def test_is_with_given_lambda_and_lambda_from(tmp_path):
    code, out = run(tmp_path / "a", "is", "--model", T1, "--property", "F (x = 2)",
                    "--lambda", "3,1", "--n-is", "20000")
    assert code == 0
    res = load(out / "result.json")
    assert res["lambda"] == [3.0, 1.0]
    assert abs(res["estimate"]["gamma_hat"] - 0.75) < 0.02
    assert not (out / "convergence.csv").exists()
    code, out2 = run(tmp_path / "b", "is", "--model", T1, "--property", "F (x = 2)",
                     "--lambda-from", str(out / "result.json"), "--n-is", "20000")
    assert code == 0 and load(out2 / "result.json")["estimate"] == res["estimate"]


def test_exact_and_export(tmp_path):
    chain = tmp_path / "chain.txt"
    code, out = run(tmp_path, "exact", "--model", R1, "--property",
                    "X ((! init) U failure)", "--method", "linear", "--export-chain", str(chain))
    assert code == 0
    res = load(out / "result.json")
    assert res["probability"] == pytest.approx(1 / 11, abs=1e-12) and res["states"] == 3
    assert chain.read_text().startswith("# states 3\n")


def test_trace_dump(tmp_path):
    code, out = run(tmp_path, "trace", "--model", R1, "--seed", "4", "--max-steps", "25")
    assert code == 0
    with open(out / "trace.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "command", "w"] and rows[1] == ["0", "", "2"]
    assert len(rows) == 27
    assert load(out / "result.json")["trace"]["steps"] == 25


@pytest.mark.parametrize("args, code", [
    (["mc", "--model", T1, "--property", "F (y = 1)", "--n", "10"], 2),
    (["ce", "--model", T1, "--property", "F (x = 3)", "--max-restarts", "2", "--n0", "20"], 3),
    (["ce", "--model", T1, "--property", "F (x = 2)", "--lambda", "1,1e-300", "--nj", "20"], 4),
    (["exact", "--model", str(model_path("chemical")), "--state-cap", "50"], 5),
    (["mc", "--model", "/nonexistent.gcm", "--property", "F (x = 2)", "--n", "10"], 1),
    (["mc", "--model", T1, "--property", "F (x = 2)"], 1),
    (["mc", "--model", T1, "--n", "10"], 1),
    (["is", "--model", T1, "--property", "F (x = 2)", "--lambda", "1,1"], 1),
    (["mc", "--model", T1, "--property", "F (x = 2)", "--n", "0"], 1),
])
def test_exit_codes(tmp_path, capsys, args, code):
    assert main([*args, "--out-dir", str(tmp_path)]) == code
    assert capsys.readouterr().err


def test_initial_search_diagnostics(tmp_path, capsys):
    main(["ce", "--model", T1, "--property", "F (x = 3)", "--max-restarts", "1",
          "--n0", "10", "--out-dir", str(tmp_path)])
    assert "F x = 3: 0 of untilted traces" in capsys.readouterr().err


def test_parse_error_reports_location(tmp_path, capsys):
    bad = tmp_path / "bad.gcm"
    bad.write_text("var x : [0..2] init 0;\n[a] x = 0 -> 1 : y'=1;\n")
    assert main(["mc", "--model", str(bad), "--property", "true", "--n", "5",
                 "--out-dir", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_manifest_replay_is_byte_identical(tmp_path):
    args = ["ce", "--model", R1, "--property", "X ((! init) U failure)", "--nj", "300",
            "--max-iterations", "5", "--n-is", "500", "--seed", "9"]
    assert main([*args, "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["--manifest", str(tmp_path / "a" / "manifest.json"), "--workers", "2",
                 "--out-dir", str(tmp_path / "b")]) == 0
    for name in ("convergence.csv", "result.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cesmc", "exact", "--model", T1,
                           "--property", "F (x = 2)", "--out-dir", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load(tmp_path / "result.json")["probability"] == pytest.approx(0.75)
