import csv

import pytest
from click.testing import CliRunner

from src.cli.commands import parse_config
from src.exceptions import ConfigError
from src.main import cli

OSCILLATOR = """
    problem:
      id: oscillator
    solver:
      tau: 0.1
      T: 1.0
"""


@pytest.fixture
def runner():
    return CliRunner()


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_minimal_config_parses(write_config):
    config = parse_config(write_config(OSCILLATOR))
    assert config.problem.id == "oscillator"
    assert config.solver.tau == 0.1
    assert config.output.edi
    assert config.sweep is None


def test_validation_errors_name_the_field(write_config):
    with pytest.raises(ConfigError) as info:
        parse_config(write_config("""
            solver:
              tau: 0
              T: 1.0
        """))
    assert str(info.value) == "solver.tau must be positive"
    assert info.value.field == "solver.tau"


def test_malformed_yaml_reports_the_line(write_config):
    with pytest.raises(ConfigError) as info:
        parse_config(write_config("solver:\n  tau: [0.1\n  T: 1.0\n"))
    assert info.value.line is not None
    assert str(info.value).startswith(f"line {info.value.line}:")


def test_config_must_be_a_mapping(write_config):
    with pytest.raises(ConfigError):
        parse_config(write_config("- 1\n- 2\n"))


def test_run_writes_the_trajectory(runner, write_config, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", write_config(OSCILLATOR), "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = _rows(out / "trajectory.csv")
    assert rows[0] == ["n", "t", "|V|_H", "||U||_V", "E", "Psi(V)", "PsiStar", "xi_residual", "inner_iters"]
    assert len(rows) == 1 + 11
    assert rows[1][0] == "0" and rows[-1][0] == "10"
    assert float(rows[-1][1]) == pytest.approx(1.0)

    edi = _rows(out / "edi.csv")
    assert edi[0] == ["s", "t", "lhs", "rhs", "slack"]
    assert all(float(row[4]) >= -1e-8 for row in edi[1:])
    apriori = dict(_rows(out / "apriori.csv")[1:])
    assert "M_energy" in apriori
    audit = (out / "audit.txt").read_text(encoding="utf-8")
    assert "tau* = inf" in audit
    assert "edi: pass" in audit
    assert "energy_lower_bound" in audit


def test_run_reports_the_step_size_guard(runner, write_config, tmp_path):
    path = write_config("""
        problem:
          id: P1
          c: 0.495
          c_tilde: 0.495
        solver:
          tau: 0.5
          T: 1.0
        output:
          edi: false
          apriori: false
          audit: false
    """)
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", path, "--out", str(out)])
    assert result.exit_code == 0, result.output
    audit = (out / "audit.txt").read_text(encoding="utf-8")
    assert any(line.startswith("warning:") and "tau*" in line for line in audit.splitlines())

    strict = runner.invoke(cli, ["run", path, "--out", str(tmp_path / "strict"), "--strict"])
    assert strict.exit_code == 1


def test_run_with_shift_gaps(runner, write_config, tmp_path):
    path = write_config(OSCILLATOR + """
    output:
      shift_gap_h: [0.1, 0.2]
      audit: false
""")
    out = tmp_path / "out"
    assert runner.invoke(cli, ["run", path, "--out", str(out)]).exit_code == 0
    names = [row[0] for row in _rows(out / "apriori.csv")[1:]]
    assert "shift_gap_V(h=0.1)" in names
    assert "shift_gap_V(h=0.2)" in names


def test_invalid_config_exits_with_usage_code(runner, write_config):
    result = runner.invoke(cli, ["run", write_config("""
        solver:
          tau: 0
          T: 1.0
    """)])
    assert result.exit_code == 64
    assert "solver.tau must be positive" in result.output


def test_malformed_yaml_exits_with_usage_code(runner, write_config):
    result = runner.invoke(cli, ["run", write_config("solver: {tau: 0.1\n")])
    assert result.exit_code == 64
    assert "line" in result.output


def test_unknown_keys_are_rejected(runner, write_config):
    result = runner.invoke(cli, ["run", write_config(OSCILLATOR + "    colour: blue\n")])
    assert result.exit_code == 64


def test_missing_file_and_bad_options_are_usage_errors(runner, tmp_path, write_config):
    assert runner.invoke(cli, ["run", str(tmp_path / "nope.yaml")]).exit_code == 64
    assert runner.invoke(cli, ["sweep", write_config(OSCILLATOR), "--jobs", "0"]).exit_code == 64
    assert runner.invoke(cli, ["frobnicate"]).exit_code == 64


@pytest.mark.parametrize("sweep,message", [
    ("{taus: [0.01, 0.02]}", "strictly decreasing"),
    ("{taus: [0.02, 0.01], reference_tau: 0.005}", "reference_tau"),
])
def test_sweep_section_is_validated(runner, write_config, sweep, message):
    result = runner.invoke(cli, ["sweep", write_config(OSCILLATOR + f"    sweep: {sweep}\n"), "--jobs", "1"])
    assert result.exit_code == 64
    assert message in result.output


def test_sweep_needs_a_reference_without_a_closed_form(runner, write_config, tmp_path):
    path = write_config("""
        problem: {id: P3, nodes: 10}
        solver: {tau: 0.05, T: 0.5}
        sweep: {taus: [0.05, 0.025]}
    """)
    result = runner.invoke(cli, ["sweep", path, "--jobs", "1", "--out", str(tmp_path / "out")])
    assert result.exit_code == 64
    assert "reference_tau" in result.output


def test_sweep_writes_the_convergence_table(runner, write_config, tmp_path):
    path = write_config(OSCILLATOR + "    sweep: {taus: [0.02, 0.01, 0.005]}\n")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["sweep", path, "--jobs", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = _rows(out / "convergence.csv")
    assert rows[0] == ["tau", "err_CH", "err_L2V", "err_V_CH", "order_estimate"]
    assert len(rows) == 4
    assert rows[1][4] == ""
    for row in rows[2:]:
        assert 0.8 <= float(row[4]) <= 1.2


def test_sweep_against_a_reference_run(runner, write_config, tmp_path):
    path = write_config("""
        problem: {id: P3, nodes: 10}
        solver: {tau: 0.05, T: 0.5}
        sweep: {taus: [0.05, 0.025], reference_tau: 0.005}
    """)
    out = tmp_path / "out"
    result = runner.invoke(cli, ["sweep", path, "--jobs", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    rows = _rows(out / "convergence.csv")
    assert [float(row[0]) for row in rows[1:]] == [0.05, 0.025]
    assert float(rows[2][4]) > 0.0


def test_sweep_reports_the_effective_step_size(runner, write_config, tmp_path):
    path = write_config("""
        problem: {id: oscillator}
        solver: {tau: 0.04, T: 0.5}
        sweep: {taus: [0.04, 0.02]}
    """)
    out = tmp_path / "out"
    assert runner.invoke(cli, ["sweep", path, "--jobs", "1", "--out", str(out)]).exit_code == 0
    rows = _rows(out / "convergence.csv")
    # 0.5 / 0.04 rounds to 12 steps
    assert float(rows[1][0]) == pytest.approx(0.5 / 12)
    assert float(rows[2][0]) == pytest.approx(0.02)


def test_single_step_sweep_has_an_empty_order(runner, write_config, tmp_path):
    path = write_config(OSCILLATOR + "    sweep: {taus: [0.01]}\n")
    out = tmp_path / "out"
    assert runner.invoke(cli, ["sweep", path, "--jobs", "1", "--out", str(out)]).exit_code == 0
    rows = _rows(out / "convergence.csv")
    assert len(rows) == 2
    assert rows[1][4] == ""


def test_audit_command(runner, write_config, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["audit", write_config(OSCILLATOR), "--out", str(out)])
    assert result.exit_code == 0, result.output
    text = (out / "audit.txt").read_text(encoding="utf-8")
    for name in ("energy_lower_bound", "lambda_convexity", "perturbation_growth", "dissipation_growth"):
        assert f"{name}: " in text
    assert "FAIL" not in text
