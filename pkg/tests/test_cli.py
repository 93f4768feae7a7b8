import subprocess
import sys

import pytest

from linmed.cli import main


def write_config(tmp_path, body):
    path = tmp_path / "exp.toml"
    path.write_text(body)
    return str(path)


REGRET = """
horizon = 100
trials = 2
master_seed = 3
[instance]
name = "large_gap"
[[policies]]
name = "LinMED-90"
[[policies]]
name = "OFUL"
"""


def test_run_writes_csv(tmp_path, capsys):
    cfg = write_config(tmp_path, REGRET)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--threads", "1"]) == 0
    assert (out / "regret.csv").read_text().startswith("policy,t,mean_regret,stderr,trials\n")
    assert "LinMED-90: final mean regret" in capsys.readouterr().out


def test_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path, REGRET)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "c"), "--threads", "2"])
    a, b, c = ((tmp_path / x / "regret.csv").read_bytes() for x in "abc")
    assert a != b
    assert a == c


def test_ope(tmp_path, capsys):
    cfg = write_config(tmp_path, """
horizon = 50
trials = 3
[instance]
name = "ope"
[[policies]]
name = "LinMED-50"
[[policies]]
name = "LinTS-Freq"
""")
    out = tmp_path / "o"
    assert main(["ope", "--config", cfg, "--out", str(out), "--mc-samples", "50"]) == 0
    assert (out / "ope_summary.csv").exists()
    assert "oracle 0.8000" in capsys.readouterr().out


def test_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "linmed run: error:" in capsys.readouterr().err


def test_config_required(capsys):
    assert main(["run"]) == 2
    assert "--config is required" in capsys.readouterr().err


def test_unknown_policy(tmp_path, capsys):
    cfg = write_config(tmp_path, REGRET.replace("OFUL", "UCB1"))
    assert main(["run", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "UCB1" in err and "LinMED-90" in err


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code == 2


def test_design_check(capsys):
    assert main(["design-check", "--d", "3", "--k", "30", "--seeds", "10"]) == 0
    out = capsys.readouterr().out
    assert "arm sets checked: 10 (d=3)" in out
    assert "max tau/(d ln d):" in out
    assert "certificate failures: 0" in out


def test_design_check_csv(tmp_path, capsys):
    p = tmp_path / "arms.csv"
    p.write_text("3,4\n0,1\n1,0\n")
    assert main(["design-check", "--csv", str(p)]) == 2
    capsys.readouterr()
    assert main(["design-check", "--csv", str(p), "--normalize"]) == 0
    assert "arm sets checked: 1 (d=2)" in capsys.readouterr().out


def test_verify_quick():
    assert main(["verify"]) == 0


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "linmed.cli", "design-check", "--d", "2", "--k", "5", "--seeds", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    assert "max tau:" in res.stdout
