import io
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from koopgeo.cli import main, parse_run_spec, parse_vector
from koopgeo.sysfile import SystemFileError, load_system, parse_system

SYSTEMS = Path(__file__).resolve().parent.parent / "systems"


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


def test_parse_full_file():
    sysm = parse_system("""
        # damped pendulum
        vars: x1 x2
        param c = 1/10
        drift: x2, -sin(x1) - c*x2
        control: 0, 1
        observable y: x1
        box: x1 in [-2,2]; x2 in [-1, 1/2]
    """, "damped")
    assert sysm.n == 2 and sysm.m == 1
    assert str(sysm.drift.components[1]) == "-sin(x1) - 1/10*x2"
    assert np.allclose(sysm.box.upper, [2.0, 0.5])
    assert str(sysm.observable("y")) == "x1"


@pytest.mark.parametrize("text,line", [
    ("vars: x\ndrift: x, 1", 2),
    ("vars: x\ndrift: x +\n", 2),
    ("vars: x\ndrift: y", 2),
    ("vars: x\ndrift: x\nbox: x in [1,0]", 3),
    ("vars: x\ndrift: x\nwhat: 3", 3),
    ("vars: x\nparam a = pi\ndrift: a*x", 2),
])
def test_file_errors_carry_line_numbers(text, line):
    with pytest.raises(SystemFileError) as info:
        parse_system(text)
    assert info.value.line == line


def test_missing_sections():
    with pytest.raises(SystemFileError):
        parse_system("drift: 1")
    with pytest.raises(SystemFileError):
        parse_system("vars: x")


@pytest.mark.parametrize("path", sorted(SYSTEMS.glob("*.sys")), ids=lambda p: p.stem)
def test_shipped_systems_load(path):
    sysm = load_system(path)
    assert sysm.name == path.stem and sysm.n >= 1


def test_vector_and_run_spec_parsing():
    assert np.array_equal(parse_vector("(0.5, -1)"), [0.5, -1.0])
    spec = parse_run_spec("u=sin(t);x0=0.3,0;T=2", "u")
    assert spec["T"] == 2.0 and spec["signal"].m == 1
    with pytest.raises(ValueError):
        parse_run_spec("x0=1;T=2", "u")


def test_analyze_exit_codes():
    code, out = run("analyze", SYSTEMS / "frame.sys")
    assert code == 0 and "verdict: controllable" in out
    code, out = run("analyze", SYSTEMS / "frozen.sys")
    assert code == 2 and "verdict: rank-deficient, dim=1" in out
    code, out = run("analyze", SYSTEMS / "double_integrator.sys", "--points", "0,0")
    assert code == 0 and "[f,g1]" in out


def test_analyze_is_deterministic():
    a = run("analyze", SYSTEMS / "unicycle.sys", "--seed", "3")[1]
    b = run("analyze", SYSTEMS / "unicycle.sys", "--seed", "3")[1]
    c = run("analyze", SYSTEMS / "unicycle.sys", "--seed", "4")[1]
    assert a == b and a != c
    assert a.startswith("# koopgeo analyze file=unicycle.sys seed=3")


def test_lift_output_and_csv(tmp_path):
    csv = tmp_path / "run.csv"
    code, out = run("lift", SYSTEMS / "decay.sys", "--degree", "3",
                    "--simulate", "u=1;x0=0.5;T=1", "--csv", csv)
    assert code == 0
    assert "# exact: yes" in out
    lines = csv.read_text().splitlines()
    assert lines[0] == "t,psi_0,psi_1,psi_2,psi_3,z_0,z_1,z_2,z_3,error"
    assert len(lines) == 102
    errors = [float(row.split(",")[-1]) for row in lines[1:]]
    assert max(errors) <= 1e-7


def test_lift_of_blowup_system_reports_inexact():
    code, out = run("lift", SYSTEMS / "quadratic.sys", "--degree", "2")
    assert code == 0 and "# exact: no" in out


def test_lift_bad_degree():
    assert run("lift", SYSTEMS / "decay.sys", "--degree", "-1")[0] == 1


def test_linearize_exit_codes():
    code, out = run("linearize", SYSTEMS / "pendulum.sys",
                    "--verify", "v=sin(t);x0=0.3,0;T=2")
    assert code == 0 and "feedback: u = sin(x1) + v" in out
    assert run("linearize", SYSTEMS / "double_integrator.sys", "--outputs", "c")[0] == 3
    assert run("linearize", SYSTEMS / "double_integrator.sys", "--outputs", "nope")[0] == 1
    assert run("linearize", SYSTEMS / "frame.sys")[0] == 1


def test_missing_file():
    assert run("analyze", "/nonexistent/system.sys")[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "koopgeo", "analyze", str(SYSTEMS / "frozen.sys")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "verdict: rank-deficient, dim=1" in proc.stdout


def _matrix_block(out):
    rows = [ln for ln in out.splitlines() if ln and not ln.startswith("#")]
    K, m = map(int, rows[0].split())
    vals = np.array([[float(x) for x in r.split()] for r in rows[1:1 + K * (m + 1)]])
    return K, m, vals


def test_lift_examples():
    K, m, vals = _matrix_block(run("lift", SYSTEMS / "decay.sys", "--degree", "2")[1])
    assert (K, m) == (3, 1)
    assert np.array_equal(vals[:3], np.diag([0.0, -1.0, -2.0]))
    K, m, vals = _matrix_block(run("lift", SYSTEMS / "decay.sys", "--degree", "0")[1])
    assert K == 1 and np.array_equal(vals, [[0.0], [0.0]])
    out = run("lift", SYSTEMS / "quadratic.sys", "--degree", "3")[1]
    residual_rows = out.split("# residuals")[1].splitlines()[1:]
    assert residual_rows[-1].startswith("# x^3 ") and float(residual_rows[-1].split()[-1]) > 0


def test_linearize_double_integrator_verify():
    code, out = run("linearize", SYSTEMS / "double_integrator.sys", "--outputs", "y",
                    "--verify", "v=sin(t);x0=0.5,-0.2;T=2")
    assert code == 0 and "relative degree r=(2)" in out
    dev = float(out.split("deviation: ")[1].split()[0])
    assert dev <= 1e-6


def test_unicycle_provenance_in_report():
    code, out = run("analyze", SYSTEMS / "unicycle.sys")
    assert code == 0 and "[g1,g2]: (sin(th), -cos(th), 0)" in out
