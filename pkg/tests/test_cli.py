import csv
import subprocess
import sys

import pytest

from remdm.cli import main, read_config, UsageError

TOY_FILE = "L=2 V=they,she,sell,sells\nthey sell 0.5\nshe sells 0.5\n"


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_verify_default_passes(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert rows and all(r["pass"] == "1" for r in rows)
    assert {"predictor_corrector_compose", "nelbo_mdlm_reduction"} <= {r["check"] for r in rows}


def test_verify_tight_tolerance_fails(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--tolerance", "1e-300", "--out", str(out)]) == 1
    failed = [r for r in read_rows(out) if r["pass"] == "0"]
    assert failed and all(float(r["deviation"]) > 0 for r in failed)


def test_missing_joint_is_usage_error(tmp_path, capsys):
    assert main(["verify", "--joint", str(tmp_path / "nope.txt")]) == 2
    assert "cannot read joint file" in capsys.readouterr().err


def test_bad_flags_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["sample", "--policy", "bogus"])
    assert exc.value.code == 2
    assert main(["sample", "--T", "zero"]) == 2
    assert main(["sample", "--seed", "-3"]) == 2


def test_sample_toy_inconsistency(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sample", "--joint", "toy", "--policy", "zero", "--T", "1", "--seed", "7",
                 "--n", "10000", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert len(rows) == 10000
    assert list(rows[0]) == ["sample_id", "tok_1", "tok_2", "oracle_nll"]
    metrics = read_rows(tmp_path / "s.metrics.csv")[0]
    assert abs(float(metrics["inconsistency_rate"]) - 0.5) <= 0.01


def test_sample_is_byte_identical(tmp_path):
    args = ["sample", "--joint", "random:L=4,V=6,N=10,seed=0", "--T", "6", "--policy", "cap",
            "--eta", "0.1", "--n", "3000", "--seed", "42", "--batch-size", "500"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.metrics.csv").read_bytes() == (tmp_path / "b.metrics.csv").read_bytes()
    assert b"\r" not in a.read_bytes()


def test_loop_cap_beats_zero_policy(tmp_path):
    loop = ["--gate", "loop", "--n-phase1", "2", "--n-phase2", "16", "--alpha-loop", "0.9"]
    base = ["sample", "--joint", "toy", "--n", "20000", "--T", "22", "--seed", "1"] + loop
    assert main(base + ["--out", str(tmp_path / "z.csv")]) == 0
    assert main(base + ["--policy", "cap", "--eta", "0.02", "--out", str(tmp_path / "c.csv")]) == 0
    z = float(read_rows(tmp_path / "z.metrics.csv")[0]["inconsistency_rate"])
    c = float(read_rows(tmp_path / "c.metrics.csv")[0]["inconsistency_rate"])
    # exact chain enumeration: 0.0884375 (zero) and 0.0399180 (cap 0.02)
    assert abs(z - 0.0884375) < 0.01 and abs(c - 0.0399180) < 0.01
    assert c < z


def test_sweep_rows_and_order(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["sweep", "--joint", "toy", "--Ts", "1,2,4,8", "--policies", "zero,cap:0.02",
                 "--n", "500", "--workers", "4", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert [(r["T"], r["policy"]) for r in rows] == [
        (T, p) for T in ("1", "2", "4", "8") for p in ("zero", "cap")
    ]
    serial = tmp_path / "w1.csv"
    main(["sweep", "--joint", "toy", "--Ts", "1,2,4,8", "--policies", "zero,cap:0.02",
          "--n", "500", "--workers", "1", "--out", str(serial)])
    assert serial.read_bytes() == out.read_bytes()


def test_sweep_clamp_column_for_fb(tmp_path):
    out = tmp_path / "w.csv"
    assert main(["sweep", "--Ts", "2", "--policies", "fb", "--n", "50", "--out", str(out)]) == 0
    row = read_rows(out)[0]
    assert row["clamped"] == "1" and int(row["n_clamped_steps"]) >= 1


def test_sweep_empty_grid(tmp_path):
    assert main(["sweep", "--Ts", ",", "--out", str(tmp_path / "w.csv")]) == 2


def test_nelbo_command(tmp_path):
    out = tmp_path / "n.csv"
    path = tmp_path / "toy.txt"
    path.write_text(TOY_FILE)
    assert main(["nelbo", "--joint", str(path), "--T", "4", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert [r["term"] for r in rows[:3]] == ["reconstruction", "diffusion", "total"]
    assert len(rows) == 3 + 4
    assert float(rows[0]["value"]) == 0


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sampling run\nT = 1\nseed=7  # fixed\nn=2000\njoint=toy\n")
    assert read_config(cfg)["T"] == "1"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sample", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["sample", "--config", str(cfg), "--T", "4", "--out", str(b)]) == 0
    assert len(read_rows(a)) == 2000
    assert float(read_rows(tmp_path / "a.metrics.csv")[0]["T"]) == 1
    assert float(read_rows(tmp_path / "b.metrics.csv")[0]["T"]) == 4
    cfg.write_text("colour=blue\n")
    with pytest.raises(UsageError):
        read_config(cfg)
    assert main(["sample", "--config", str(cfg)]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "remdm", "nelbo", "--T", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("term,step,value\n")
