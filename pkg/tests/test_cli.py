"""Tests for the command-line interface."""

import pytest

from levywf import cli
from levywf.validation import CriterionResult


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_bad_atom_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["pi", "--sigma", "0.8", "--atom", "1.5:0.8", "--K", "8"])
    assert exc.value.code == 2


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        cli.main(["pi", "--sigma", "0.8", "--frobnicate", "1"])
    assert exc.value.code == 2


def test_pi_csv(capsys):
    code, out, err = run_cli(["pi", "--sigma", "0.8", "--atom", "0.1:0.8", "--K", "16"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "k,pi,ratio"
    assert len(lines) == 17
    assert lines[1].startswith("1,")
    assert lines[2].split(",")[2] == "0.8"
    assert "pi(1) in [" in err


def test_pi_cutoff_too_small(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["pi", "--sigma", "2.5", "--atom", "0.5:2.5", "--K", "4"])
    assert exc.value.code == 2


def test_pi_null_env(capsys):
    code, out, _ = run_cli(["pi", "--K", "4"], capsys)
    assert code == 0
    rows = [line.split(",") for line in out.splitlines()[1:]]
    assert rows[0][1] == "1"
    assert all(r[1] == "0" for r in rows[1:])


def test_coeffs_dump_format(capsys):
    code, out, _ = run_cli(
        ["coeffs", "--sigma", "0.8", "--atom", "0.1:0.8", "--K", "8", "--J", "8"], capsys
    )
    assert code == 0
    assert out.startswith("# params: sigma=0.8 atoms=0.1:0.8\n")
    assert "# b (ratio recursion" in out
    assert "# b (ode limits)" in out
    assert "# a grid" in out
    assert "# residuals:" in out
    # b rows are `j value`, a rows are `k j value`
    b_row = [l for l in out.splitlines() if l.startswith("1 0.68")]
    assert b_row
    a_row = [l for l in out.splitlines() if l.startswith("2 1 ")]
    assert a_row


def test_coeffs_divergent_reports(capsys):
    code, out, _ = run_cli(
        ["coeffs", "--sigma", "5", "--atom=-0.9:5", "--J", "8", "--j-sum", "20",
         "--skip-a"], capsys
    )
    assert code == 0
    assert "DIVERGENT" in out


def test_fixation_csv_endpoints(capsys):
    code, out, _ = run_cli(["fixation", "--sigma", "0.8", "--K", "16", "--points", "11"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "x,h,err"
    assert len(lines) == 12
    first = lines[1].split(",")
    last = lines[-1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 0.0
    assert float(last[0]) == 1.0
    assert abs(float(last[1]) - 1.0) <= float(last[2]) + 1e-6


def test_figure4_dataset(tmp_path, capsys):
    prefix = str(tmp_path / "fig4")
    code, _, err = run_cli(["fixation", "--figure4", prefix, "--K", "16", "--points", "21"], capsys)
    assert code == 0
    for a in ("0", "0.1", "0.2", "0.3"):
        path = tmp_path / f"fig4_a{a}.csv"
        assert path.exists()
        content = path.read_text().splitlines()
        assert content[0] == "x,h,err"
        assert len(content) == 22
    # the a=0 curve is the closed form with zero error column
    a0 = (tmp_path / "fig4_a0.csv").read_text().splitlines()
    assert all(row.rsplit(",", 1)[1] == "0" for row in a0[1:])


def test_simulate_sde_reproducible(capsys):
    argv = ["simulate", "--mode", "sde", "--sigma", "0.8", "--atom", "0.1:0.8",
            "--x0", "0.5", "--paths", "500", "--seed", "9"]
    code1, out1, _ = run_cli(argv, capsys)
    code2, out2, _ = run_cli(argv, capsys)
    assert code1 == code2 == 0
    assert out1 == out2
    assert out1.startswith("h(0.5) = ")


def test_simulate_sde_moment(capsys):
    code, out, _ = run_cli(
        ["simulate", "--mode", "sde", "--sigma", "0", "--x0", "0.3", "--paths", "200",
         "--moment", "2", "--T", "0", "--seed", "1"], capsys
    )
    assert code == 0
    assert out.startswith("E[X(T)^2]")
    assert "0.09" in out


def test_simulate_sde_dump_path(tmp_path, capsys):
    dump = str(tmp_path / "path.csv")
    code, _, err = run_cli(
        ["simulate", "--mode", "sde", "--sigma", "0.8", "--atom", "0.1:0.8", "--x0", "0.5",
         "--paths", "1", "--t-max", "2", "--dump-path", dump, "--stride", "200",
         "--seed", "2"], capsys
    )
    assert code == 0
    rows = open(dump).read().splitlines()
    assert rows[0] == "t,x"
    xs = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(0.0 <= x <= 1.0 for x in xs)


def test_simulate_easg_table(capsys):
    code, out, _ = run_cli(
        ["simulate", "--mode", "easg", "--sigma", "0.8", "--atom", "0.1:0.8", "--T", "0.5",
         "--samples", "500", "--seed", "5"], capsys
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# runs used")
    assert lines[1] == "kind k j mc se ode"
    assert any(l.startswith("R 1 1 ") for l in lines)
    assert any(l.startswith("Q - 1 ") for l in lines)


def test_simulate_easg_dump_events(tmp_path, capsys):
    dump = str(tmp_path / "events.log")
    code, _, _ = run_cli(
        ["simulate", "--mode", "easg", "--sigma", "0.8", "--atom", "0.1:0.8", "--T", "2",
         "--samples", "50", "--seed", "6", "--dump-events", dump], capsys
    )
    assert code == 0
    text = open(dump).read()
    assert text.strip() == "" or all(len(line.split()) == 4 for line in text.strip().splitlines())


def test_validate_quick_subset(capsys):
    code, out, _ = run_cli(["validate", "--quick", "--only", "1,2,3"], capsys)
    assert code == 0
    assert out.count("PASS") == 3
    assert "3/3 criteria passed" in out


def test_validate_failure_exit_code(monkeypatch, capsys):
    fake = [CriterionResult(1, "stub", False, "forced failure", 0.0)]
    monkeypatch.setattr(cli, "run_all", lambda quick=False, numbers=None: fake)
    code, out, _ = run_cli(["validate", "--only", "1"], capsys)
    assert code == 1
    assert "FAIL" in out
