import json
import subprocess
import sys

import pytest

from propout.cli import main

TABLE1 = """\
Chr\tPos\tAlleleRef\tAlleleVar\tNCalls\tDepth
chr17\t41226495\tT\tC\t2\t5000
chr17\t41245581\tT\tC\t7\t5000
chr17\t41203211\tT\tC\t3\t5000
chr17\t41219580\tT\tC\t2\t2563
chr17\t41203193\tT\tC\t3\t5000
chr17\t41245495\tT\tC\t1\t5000
chr17\t41245628\tT\tC\t1\t5001
chr17\t41246766\tT\tC\t2\t5000
chr17\t41234536\tT\tC\t1\t5000
chr17\t41243472\tT\tC\t1\t2486
"""


@pytest.fixture
def table1(tmp_path):
    path = tmp_path / "table1.tsv"
    path.write_text(TABLE1)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_detect_table1_all_inliers(capsys, table1):
    code, out, _ = run(capsys, "detect", "--input", table1, "--alpha", "1e-3", "--seed", 1)
    assert code == 0
    doc = json.loads(out)
    assert doc["summary"]["K"] == 10 and doc["summary"]["n_outliers"] == 0
    assert {c["classification"] for c in doc["columns"]} == {"inlier"}
    assert doc["config"]["seed"] == 1
    assert set(doc["columns"][0]) == {"id", "n", "d", "p_hat", "S", "C", "ratio", "classification"}


def test_detect_outliers_found_is_success(capsys, tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("id,n,d\n" + "".join(f"c{i},5,100\n" for i in range(19)) + "hot,100,100\n")
    code, out, _ = run(capsys, "detect", "-i", path, "--seed", 3, "--format", "csv")
    assert code == 0
    assert out.startswith("# config: ")
    assert "\nhot,100,100,1," in out and out.rstrip().endswith("outlier")


def test_missing_input_exit_2(capsys, tmp_path):
    missing = tmp_path / "nope.tsv"
    code, _, err = run(capsys, "detect", "--input", missing)
    assert code == 2
    assert str(missing) in err


def test_parse_error_exit_2_with_line(capsys, tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text(TABLE1 + "chr1\t5\tA\tG\t6000\t5000\n")
    code, _, err = run(capsys, "detect", "--input", path)
    assert code == 2
    assert "line 12" in err and "n <= d" in err


@pytest.mark.parametrize(
    "flags",
    [
        ["--alpha", "1.5"],
        ["--alpha", "abc"],
        ["--replicates", "0"],
        ["--pattern-fraction", "1"],
        ["--vote-threshold", "-0.1"],
        ["--seed", "-4"],
        ["--threads", "0"],
    ],
)
def test_parameter_errors_exit_3(capsys, table1, flags):
    code, _, err = run(capsys, "detect", "--input", table1, *flags)
    assert code == 3
    assert "parameter error" in err


def test_alpha_message_names_domain(capsys, table1):
    _, _, err = run(capsys, "detect", "--input", table1, "--alpha", "1.5")
    assert "(0, 1)" in err


def test_usage_error_exit_3(capsys):
    with pytest.raises(SystemExit) as info:
        main(["detect", "--bogus"])
    assert info.value.code == 3


def test_fresh_seed_echoed_and_replayable(capsys, table1, tmp_path):
    first = tmp_path / "first.json"
    assert run(capsys, "detect", "-i", table1, "--replicates", 200, "-o", first)[0] == 0
    seed = json.loads(first.read_text())["config"]["seed"]
    assert isinstance(seed, int)
    second = tmp_path / "second.json"
    run(capsys, "detect", "--config", first, "-o", second, "--threads", 4)
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize("fmt", ["json", "csv", "text"])
def test_detect_deterministic_across_threads(capsys, table1, tmp_path, fmt):
    outs = []
    for threads in (1, 8):
        path = tmp_path / f"{threads}.{fmt}"
        run(capsys, "detect", "-i", table1, "--seed", 5, "--replicates", 1200, "--format", fmt,
            "--threads", threads, "-o", path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_preset_example(capsys):
    code, out, _ = run(capsys, "simulate", "--preset", "table3-row1", "--reps", 200, "--alpha", "1e-2",
                       "--seed", 7, "--format", "json")
    assert code == 0
    cell = json.loads(out)["cells"][0]
    assert abs(cell["sens"] - 1.000) <= 0.05
    assert abs(cell["spec"] - 0.997) <= 0.05


def test_simulate_reps_zero(capsys):
    code, _, _ = run(capsys, "simulate", "--preset", "table3-row1", "--reps", 0)
    assert code == 3


def test_simulate_needs_grid(capsys):
    code, _, err = run(capsys, "simulate", "--k", 20)
    assert code == 3 and "--n-outliers" in err


def test_simulate_same_seed_identical(capsys, tmp_path):
    outs = []
    for i, threads in enumerate((1, 8)):
        path = tmp_path / f"s{i}.txt"
        run(capsys, "simulate", "--k", 20, "--n-outliers", 1, "--depths", "alternating:100,1000",
            "--shuffle-depths", "--p", "0.01,0.05", "--reps", 5, "--alpha", "1e-3,1e-2",
            "--replicates", 300, "--seed", 11, "--threads", threads, "-o", path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    replay = tmp_path / "replay.txt"
    run(capsys, "simulate", "--config", tmp_path / "s0.txt", "-o", replay)
    assert replay.read_bytes() == outs[0]


def test_mse_no_outliers_zero_bias(capsys):
    code, out, _ = run(capsys, "mse", "--k", 6, "--depths", 100, "--p", 0.05, "--h", 3, "--per-pattern")
    assert code == 0
    doc = json.loads(out)
    assert all(row["bias"] == 0 for row in doc["patterns"])
    assert len(doc["patterns"]) == 20


def test_mse_hand_case(capsys):
    from fractions import Fraction

    from oracles import enumerate_mse

    code, out, _ = run(capsys, "mse", "--depths", "100,100,1000,1000", "--p", 0.05,
                       "--outlier-counts", 20, "--h", 2)
    assert code == 0
    mse = json.loads(out)["summary"]["mse"]
    exact = enumerate_mse((100, 100, 1000, 1000), 0.05, [20], 2)
    assert abs(Fraction(mse) - exact) <= Fraction(1, 10**12) * exact


def test_mse_cap_exit_3(capsys):
    code, _, err = run(capsys, "mse", "--k", 60, "--depths", 100, "--p", 0.05)
    assert code == 3 and "monte-carlo" in err


def test_mse_monte_carlo_close(capsys):
    args = ["mse", "--depths", ",".join(["100", "1000"] * 5), "--p", 0.05, "--outlier-counts", "30,120", "--h", 5]
    _, out, _ = run(capsys, *args)
    exact = json.loads(out)["summary"]["mse"]
    _, out, _ = run(capsys, *args, "--mode", "monte-carlo", "--samples", 100_000, "--seed", 3)
    assert abs(json.loads(out)["summary"]["mse"] - exact) <= 0.01 * exact


def test_console_script(table1):
    proc = subprocess.run(
        [sys.executable, "-m", "propout.cli", "detect", "-i", str(table1), "--seed", "2", "--format", "text"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "K=10" in proc.stdout and "seed=2" in proc.stdout
