import json

import numpy as np
import pytest

from kwctv import JumpPenalty, Signal, total_energy
from kwctv import io as kio
from kwctv.cli import main


@pytest.fixture
def ramp_csv(tmp_path):
    path = tmp_path / "ramp.csv"
    kio.write_signal(Signal.from_function(lambda x: x, 0, 1, 256, 10.0), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_signal_roundtrip(tmp_path):
    g = Signal.from_function(np.cos, -1, 2, 17, 3.5)
    kio.write_signal(g, tmp_path / "s.csv")
    h = kio.load_signal(tmp_path / "s.csv")
    assert (h.a, h.b, h.lam) == (g.a, g.b, g.lam)
    np.testing.assert_array_equal(h.samples, g.samples)


def test_signal_domain_inferred():
    g = kio.parse_signal("x,g\n0.25,1\n0.75,2\n")
    assert (g.a, g.b) == (0.0, 1.0)
    g = kio.parse_signal("g\n1\n2\n3\n", lam=2.0)
    assert (g.a, g.b, g.lam, g.n) == (0.0, 1.0, 2.0, 3)


@pytest.mark.parametrize("text, line", [
    ("x,g\n0.1,1\n0.2,oops\n", 3),
    ("x,g\n0.1,1\n0.2,2,3\n", 3),
    ("0.1,1\n0.3,2\n0.4,3\n", 3),
    ("# {bad json\n1\n", 1),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(kio.ParseError) as exc:
        kio.parse_signal(text, "f.csv")
    assert exc.value.line == line
    assert f"f.csv:{line}:" in str(exc.value)


def test_potential_csv(tmp_path):
    x = np.linspace(0, 2, 201)
    path = tmp_path / "well.csv"
    path.write_text("x,F\n" + "\n".join(f"{a},{(a - 1) ** 2}" for a in x))
    F = kio.load_potential(path)
    assert F(0.5) == pytest.approx(0.25)
    path.write_text("x,F\n0,1\n0,0\n")
    with pytest.raises(kio.ParseError) as exc:
        kio.load_potential(path)
    assert exc.value.line == 3


def test_kernel_commands(capsys):
    code, out, _ = run(capsys, "kernel", "--penalty", "rho-over-1+rho", "--M", 1)
    cert = json.loads(out)
    assert code == 0 and cert["c_M"] == pytest.approx(0.495) and cert["C_M"] == pytest.approx(0.66)
    code, _, err = run(capsys, "kernel", "--penalty", "linear", "--M", 1)
    assert code == 2 and "(K2) certification failed" in err
    code, out, _ = run(capsys, "kernel", "--potential", "quadratic-well", "--s", 1, "--M", 1)
    pot = json.loads(out)
    assert code == 0 and abs(pot["C_M"] - cert["C_M"]) <= 1e-6 and abs(pot["c_M"] - cert["c_M"]) <= 1e-6
    code, _, _ = run(capsys, "kernel", "--potential", "abs-power:1.5", "--M", 1)
    assert code == 2


def test_solve_roundtrip_exact(capsys, tmp_path, ramp_csv):
    sol_path, plot_path = tmp_path / "sol.json", tmp_path / "plot.csv"
    code, _, _ = run(capsys, "solve", "--signal", ramp_csv, "--lambda", 10, "--levels", 129,
                     "--refine", "--out", sol_path, "--plot", plot_path)
    assert code == 0
    d = json.loads(sol_path.read_text())
    assert d["jumps"] >= 1 and d["budget_m"] == 8
    u = kio.load_solution(sol_path)
    g = kio.load_signal(ramp_csv)
    e = total_energy(u, g, JumpPenalty.rho_over_one_plus_rho())
    assert e.to_dict() == d["energy"]
    rows = plot_path.read_text().splitlines()
    assert rows[0] == "x,g,u" and len(rows) == 256 * 4 + 2


def test_solve_deterministic(capsys, ramp_csv):
    a = run(capsys, "solve", "--signal", ramp_csv, "--levels", 33, "--refine")[1]
    b = run(capsys, "solve", "--signal", ramp_csv, "--levels", 33, "--refine")[1]
    assert a == b


def test_solve_constant(capsys, tmp_path):
    path = tmp_path / "c.csv"
    kio.write_signal(Signal(np.full(16, 0.3), 0, 1, 5.0), path)
    code, out, _ = run(capsys, "solve", "--signal", path, "--levels", 5)
    d = json.loads(out)
    assert code == 0 and d["values"] == [0.3] and d["energy"]["total"] == 0.0


def test_solve_baseline(capsys, ramp_csv):
    code, out, _ = run(capsys, "solve", "--signal", ramp_csv, "--baseline", "rof")
    assert code == 0 and json.loads(out)["max_jump"] <= 3 / 256


def test_config_precedence(capsys, tmp_path, ramp_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lambda": 1.0, "levels": 17}))
    d1 = json.loads(run(capsys, "solve", "--signal", ramp_csv, "--config", cfg)[1])
    assert d1["eta"] == pytest.approx(g_osc(ramp_csv) / 16)
    assert d1["budget_m"] == 1  # lambda 1 from the config beats the file's lambda 10
    d2 = json.loads(run(capsys, "solve", "--signal", ramp_csv, "--config", cfg, "--lambda", 10)[1])
    assert d2["budget_m"] == 8
    cfg.write_text(json.dumps({"lambdaa": 1.0}))
    assert run(capsys, "solve", "--signal", ramp_csv, "--config", cfg)[0] == 2


def g_osc(path):
    return kio.load_signal(path).osc


def test_check_commands(capsys):
    code, out, _ = run(capsys, "check", "--seed", 7, "--n", 6, "--levels", 5, "--oracle")
    d = json.loads(out)
    assert code == 0 and d["oracle"]["match"] and d["passed"]
    code, out, _ = run(capsys, "check", "--negative-control")
    d = json.loads(out)
    assert code == 0 and d["detected"] and "budget" in d["failed_checks"]
    code, out, _ = run(capsys, "check", "--suite", "monotone")
    assert code == 0 and json.loads(out)["passed"]
    code, _, err = run(capsys, "check", "--n", 12, "--levels", 6, "--oracle")
    assert code == 2 and "exceed" in err
    code, out, _ = run(capsys, "check", "--n", 12, "--levels", 6, "--no-oracle")
    assert code == 0 and "oracle" not in json.loads(out)


def test_bound_command(capsys):
    code, out, _ = run(capsys, "bound", "--lambda", 10, "--M", 1, "--monotone")
    d = json.loads(out)
    assert code == 0 and d["m"] == 21 and d["m_monotone"] == 8


def test_errors_map_to_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    code, _, err = run(capsys, "solve", "--signal", bad)
    assert code == 2 and "bad.csv:2" in err
    code, _, err = run(capsys, "solve", "--signal", tmp_path / "missing.csv")
    assert code == 1
