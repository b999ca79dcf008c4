import math

import pytest

from abacus_eon.ilp import EQ, GE, LE, IlpModel, LinExpr, check_assignment, parse_solution, write_lp
from abacus_eon.solver import INFEASIBLE, OPTIMAL, solve


def test_linexpr_arithmetic():
    a = LinExpr({"x": 1.0}, 2.0)
    b = LinExpr({"x": 2.0, "y": -1.0}, 1.0)
    c = a + b
    assert c.terms == {"x": 3.0, "y": -1.0} and c.constant == 3.0
    assert a.terms == {"x": 1.0}  # operands untouched
    assert c.scaled(2).evaluate({"x": 1, "y": 1}) == 2 * (3 - 1 + 3)
    a.add_term("z", 0.0)
    assert "z" not in a.terms


def test_constraint_checks():
    m = IlpModel()
    x, y = m.add_binary("x"), m.add_binary("y")
    m.add_constraint(LinExpr({x: 1, y: 1}, 1.0), LE, 2.0, "f")  # moves the constant: x + y <= 1
    assert m.constraints[0].rhs == 1.0
    assert check_assignment(m, {"x": 1, "y": 0})
    assert not check_assignment(m, {"x": 1, "y": 1})
    assert any("integrality" in v for v in m.violations({"x": 0.5}))
    with pytest.raises(KeyError):
        m.add_constraint({"w": 1.0}, LE, 1.0)
    with pytest.raises(ValueError):
        m.add_constraint({x: math.inf}, LE, 1.0)
    with pytest.raises(ValueError):
        m.add_constraint({x: 1.0}, "<", 1.0)
    with pytest.raises(ValueError):
        m.add_binary("x")
    with pytest.raises(ValueError):
        m.set_objective({x: math.nan})


def small_model():
    m = IlpModel("knap")
    for n in "abcd":
        m.add_binary(n)
    q = m.add_continuous("q", 0.0, 10.0)
    m.add_constraint({"a": 3, "b": 4, "c": 5, "d": 6}, GE, 9.0, "cover")
    m.add_constraint({"a": 1, "b": 1}, LE, 1.0, "pick")
    m.add_constraint({q: 1.0, "c": -2.5}, EQ, 0.0, "def")
    m.fix("d", 0.0)
    m.set_objective({"a": 2.0, "b": 3.0, "c": 4.5, "d": 1.0, q: 0.1})
    return m


def test_lp_text_round_trip_through_a_solver_reader():
    m = small_model()
    text = write_lp(m)
    assert "General" in text and "Binaries" not in text
    assert " 0 <= d <= 0" in text
    direct = solve(m, "highs")
    via_file = solve(m, "lp-file")
    assert direct.status == via_file.status == OPTIMAL
    assert direct.objective_value == pytest.approx(via_file.objective_value, rel=1e-12)
    assert via_file.assignment["d"] == 0.0


def test_long_rows_wrap():
    m = IlpModel()
    names = [m.add_binary(f"var_with_a_long_name_{i}") for i in range(60)]
    m.add_constraint({n: 1.0 for n in names}, LE, 3.0)
    m.set_objective({n: -1.0 for n in names})
    text = write_lp(m)
    assert max(len(line) for line in text.splitlines()) <= 220
    assert solve(m, "lp-file").objective_value == -3.0


def test_parse_solution_skips_noise_and_duals():
    text = "Model status\nOptimal\n# Primal solution values\nx 1\ny 0.0\nunknown 5\n# Dual solution values\nx 7\n"
    assert parse_solution(text, ["x", "y"]) == {"x": 1.0, "y": 0.0}
    assert parse_solution("x1 1e-10\n", ["x1"]) == {"x1": 1e-10}
