"""Barrier solver on tiny programs with known optima, plus its certificates."""

import math

import numpy as np
import pytest

from privsynth.sdp import (
    SdpProblem,
    SolverOptions,
    SolverStatus,
    check_solution,
    find_feasible,
    matrix_to_sym_params,
    solve,
    sym_param_count,
    sym_param_indices,
    sym_to_matrix,
    write_iteration_csv,
)


def scalar_cap_problem(cap=4.0, margin=1e-8):
    """maximize log2 x  s.t.  x <= cap, x >= margin."""
    prob = SdpProblem()
    prob.add_sym_var("x", 1, logdet_weight=1.0, psd_margin=margin)
    prob.add_scalar("cap", cap, {"x": np.array([-1.0])})
    return prob


def trace_cap_problem(n=2, cap=3.0):
    """maximize log2 det X  s.t.  tr X <= cap; optimum X = (cap/n) I."""
    prob = SdpProblem()
    prob.add_sym_var("X", n, logdet_weight=1.0, psd_margin=1e-8)
    rows, cols = sym_param_indices(n)
    coeffs = np.where(rows == cols, -1.0, 0.0)
    prob.add_scalar("trace_cap", cap, {"X": coeffs})
    return prob


def lmi_cap_problem(n=2):
    """maximize log2 det X  s.t.  X <= I; optimum X = I."""
    prob = SdpProblem()
    prob.add_sym_var("X", n, logdet_weight=1.0, psd_margin=1e-8)
    p = sym_param_count(n)
    tensor = np.stack([-sym_to_matrix(np.eye(p)[i], n) for i in range(p)])
    con = prob.add_lmi("upper_cap", n, constant=np.eye(n))
    con.add_term("X", tensor)
    return prob


def test_sym_param_round_trip():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((5, 5))
    M = 0.5 * (M + M.T)
    np.testing.assert_allclose(sym_to_matrix(matrix_to_sym_params(M), 5), M, atol=1e-14)
    params = rng.standard_normal(sym_param_count(5))
    np.testing.assert_allclose(matrix_to_sym_params(sym_to_matrix(params, 5)), params,
                               atol=1e-14)


def test_scalar_cap_optimum():
    sol = solve(scalar_cap_problem())
    assert sol.status is SolverStatus.OPTIMAL
    assert sol.variables["x"][0, 0] == pytest.approx(4.0, rel=1e-6)
    assert sol.objective == pytest.approx(-2.0, abs=1e-6)


def test_trace_cap_optimum():
    sol = solve(trace_cap_problem())
    assert sol.status is SolverStatus.OPTIMAL
    np.testing.assert_allclose(sol.variables["X"], 1.5 * np.eye(2), atol=1e-5)
    assert sol.objective == pytest.approx(-2.0 * math.log2(1.5), abs=1e-6)


def test_lmi_cap_optimum():
    sol = solve(lmi_cap_problem())
    assert sol.status is SolverStatus.OPTIMAL
    np.testing.assert_allclose(sol.variables["X"], np.eye(2), atol=1e-5)
    assert sol.objective == pytest.approx(0.0, abs=1e-6)


def test_affine_objective_box():
    """minimize t over 0 <= t <= 5 drives t to the lower edge."""
    prob = SdpProblem()
    prob.add_affine_var("t", 1)
    prob.add_scalar("lower", 0.0, {"t": np.array([1.0])})
    prob.add_scalar("upper", 5.0, {"t": np.array([-1.0])})
    prob.set_affine_objective("t", np.array([1.0]))
    sol = solve(prob)
    assert sol.status is SolverStatus.OPTIMAL
    assert sol.objective == pytest.approx(0.0, abs=1e-5)


def test_contradictory_cones_infeasible():
    """x >= margin together with x <= -1 has no solution."""
    prob = SdpProblem()
    prob.add_sym_var("x", 1, logdet_weight=1.0, psd_margin=1e-8)
    prob.add_scalar("cap", -1.0, {"x": np.array([-1.0])})
    feas = find_feasible(prob)
    assert feas.status is SolverStatus.INFEASIBLE
    assert "cap" in feas.message
    sol = solve(prob)
    assert sol.status is SolverStatus.INFEASIBLE


def test_iteration_log_deterministic(tmp_path):
    """Identical problems and options give bit-identical logs and CSV files."""
    sols = [solve(trace_cap_problem(), SolverOptions(seed=0)) for _ in range(2)]
    a, b = sols
    assert a.newton_steps == b.newton_steps
    assert len(a.iterations) == len(b.iterations)
    for ra, rb in zip(a.iterations, b.iterations):
        assert ra.mu == rb.mu
        assert ra.objective == rb.objective
        assert ra.max_residual == rb.max_residual
        assert ra.decrement == rb.decrement
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_iteration_csv(a, str(pa))
    write_iteration_csv(b, str(pb))
    assert pa.read_bytes() == pb.read_bytes()


def test_iteration_csv_header_comment(tmp_path):
    sol = solve(scalar_cap_problem())
    path = tmp_path / "iters.csv"
    write_iteration_csv(sol, str(path), header_comment="manifest_hash=deadbeef")
    lines = path.read_text().splitlines()
    assert lines[0] == "# manifest_hash=deadbeef"
    assert lines[1] == "iter,mu,objective,max_residual"
    assert len(lines) >= 3


def test_check_solution_flags_violation():
    prob = scalar_cap_problem()
    bad = check_solution(prob, {"x": np.array([[5.0]])})
    assert not bad.ok
    assert bad.max_scalar_violation == pytest.approx(1.0, abs=1e-12)
    cap_check = next(c for c in bad.checks if c.name == "cap")
    assert cap_check.min_slack == pytest.approx(-1.0, abs=1e-12)
    good = check_solution(prob, {"x": np.array([[3.0]])})
    assert good.ok
    assert good.objective == pytest.approx(-math.log2(3.0), abs=1e-9)


def test_check_solution_flags_psd_violation():
    prob = lmi_cap_problem()
    bad = check_solution(prob, {"X": np.array([[2.0, 0.0], [0.0, 0.5]])})
    assert not bad.ok
    assert bad.max_psd_violation == pytest.approx(1.0, abs=1e-9)


def test_phase1_seed_does_not_move_optimum():
    objs = [solve(trace_cap_problem(), SolverOptions(seed=s)).objective
            for s in (0, 1, 2)]
    assert max(objs) - min(objs) < 1e-6


def test_outer_budget_exhaustion():
    opts = SolverOptions(max_outer=2, tol_gap=1e-30)
    sol = solve(trace_cap_problem(), opts)
    assert sol.status is SolverStatus.MAX_ITERATIONS
    assert math.isfinite(sol.objective)


def test_strict_init_is_used():
    """A strictly feasible init skips phase 1 and still reaches the optimum."""
    prob = trace_cap_problem()
    sol = solve(prob, init={"X": 0.5 * np.eye(2)})
    assert sol.status is SolverStatus.OPTIMAL
    assert sol.objective == pytest.approx(-2.0 * math.log2(1.5), abs=1e-6)


def test_problem_dump(tmp_path):
    import json
    prob = trace_cap_problem()
    path = tmp_path / "prob.json"
    prob.dump(str(path))
    doc = json.loads(path.read_text())
    assert isinstance(doc, dict) and doc
    assert "X" in json.dumps(doc)
