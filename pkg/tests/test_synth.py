"""Program assembly, synthesis pipeline, extraction and mechanism round trips."""

import json
import math
import pathlib

import numpy as np
import pytest

from privsynth import sdp
from privsynth.lift import build_lift, output_moments
from privsynth.model import content_hash, load_model, with_overrides
from privsynth.synth import (
    InfeasibleProgram,
    Mechanism,
    analytic_start,
    assemble_program,
    evaluate_mechanism,
    load_mechanism,
    sample_mechanism,
    save_mechanism,
    synthesize,
)

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def assembled(name, **overrides):
    model, req = load_model(str(FIXTURES / f"{name}.json"))
    if overrides:
        model, req = with_overrides(model, req, **overrides)
    lift = build_lift(model, req.K)
    return model, req, lift, assemble_program(lift, model, req)


def test_constraint_set_with_finite_budgets():
    _, _, _, prob = assembled("scalar")
    lmi_names = {c.name for c in prob.lmis}
    assert lmi_names == {"leakage", "output_distortion_budget", "noise_floor"}
    assert [s.name for s in prob.scalars] == ["input_distortion_budget"]
    # Pi and Sigma_H carry strict PSD floors; Sigma_Z does not need its own.
    assert prob.sym_vars["Pi"].psd_margin > 0.0
    assert prob.sym_vars["Sigma_H"].psd_margin > 0.0
    assert prob.sym_vars["Sigma_Z"].psd_margin is None


def test_constraint_set_with_infinite_budgets():
    """Infinite budgets drop their distortion constraints entirely."""
    _, _, _, prob = assembled("scalar", eps_y=math.inf, eps_u=math.inf)
    assert {c.name for c in prob.lmis} == {"leakage", "noise_floor"}
    assert prob.scalars == []


def test_program_dimensions():
    model, req, lift, prob = assembled("twostate")
    K, n_y = req.K, model.n_y
    NY, NS, NU = K * n_y, K * model.n_s, K * model.n_u
    assert prob.affine_vars["G"].num_params == K * n_y * n_y
    leak = next(c for c in prob.lmis if c.name == "leakage")
    assert leak.dim == NS + NY
    floor = next(c for c in prob.lmis if c.name == "noise_floor")
    assert floor.dim == 2 * NY
    assert prob.sym_vars["Sigma_H"].n == NU


@pytest.mark.parametrize("name", ["scalar", "twostate"])
def test_analytic_start_is_strictly_feasible(name):
    _, _, _, prob = assembled(name)
    init = analytic_start(prob)
    assert init is not None
    rep = sdp.check_solution(prob, init, tol_psd=0.0, tol_scalar=0.0)
    assert rep.ok
    assert min(c.min_slack for c in rep.checks) > 0.0


def test_find_feasible_agrees_with_analytic_path():
    """Phase 1 also reaches the interior, and the optimum does not depend
    on which start was used."""
    _, _, _, prob = assembled("scalar")
    feas = sdp.find_feasible(prob, seed=5)
    assert feas.status is sdp.SolverStatus.OPTIMAL
    sol_cold = sdp.solve(prob, sdp.SolverOptions(seed=5))
    _, _, _, prob2 = assembled("scalar")
    sol_warm = sdp.solve(prob2, init=analytic_start(prob2))
    assert sol_cold.objective == pytest.approx(sol_warm.objective, abs=1e-5)


def test_separable_case_closed_form():
    """With eps_Y = inf the input noise decouples: Sigma_H = (eps_U/NU) I."""
    model, req = load_model(str(FIXTURES / "reactor4.json"))
    model, req = with_overrides(model, req, eps_y=math.inf, eps_u=2.0)
    rep = synthesize(model, req)
    NU = req.K * model.n_u
    np.testing.assert_allclose(rep.mechanism.Sigma_H, (2.0 / NU) * np.eye(NU),
                               rtol=1e-6, atol=1e-9)
    assert rep.entropy_H_bits == pytest.approx(
        0.5 * NU * math.log2(2 * math.pi * math.e * 2.0 / NU), abs=1e-6)


def test_extraction_identity(scalar_report, scalar_case):
    """The extracted noise covariance reproduces the disclosed covariance."""
    model, req = scalar_case
    mech = scalar_report.mechanism
    lift = build_lift(model, req.K)
    Sigma_Y = output_moments(lift, model).Sigma_Y
    Gt = mech.Gtilde
    recon = Gt @ Sigma_Y @ Gt.T + mech.Sigma_V
    Sigma_Z = scalar_report.solution.variables["Sigma_Z"]
    assert np.linalg.norm(recon - Sigma_Z) <= 1e-8 * np.linalg.norm(Sigma_Z)
    assert scalar_report.flags["min_eig_Sigma_V"] > 0.0


def test_evaluate_matches_report(scalar_report, scalar_case):
    model, req = scalar_case
    metrics = evaluate_mechanism(model, req, scalar_report.mechanism)
    assert metrics.mi_bits == pytest.approx(scalar_report.mi_bits, abs=1e-9)
    assert metrics.entropy_H_bits == pytest.approx(scalar_report.entropy_H_bits, abs=1e-9)
    assert metrics.cost_bits == pytest.approx(scalar_report.cost_bits, abs=1e-9)
    assert metrics.distortion_Y == pytest.approx(scalar_report.distortion_Y, abs=1e-9)
    assert metrics.distortion_U == pytest.approx(scalar_report.distortion_U, abs=1e-9)


def test_cost_identity(scalar_report):
    """cost = leakage information minus the entropy credit of the input noise."""
    assert scalar_report.cost_bits == pytest.approx(
        scalar_report.mi_bits - scalar_report.entropy_H_bits, abs=1e-6)
    assert scalar_report.solver["cost_reconciliation_bits"] == pytest.approx(0.0, abs=1e-6)


def test_budgets_active_at_optimum(scalar_report, scalar_case):
    _, req = scalar_case
    assert scalar_report.flags["budget_Y_active"]
    assert scalar_report.flags["budget_U_active"]
    assert scalar_report.distortion_Y == pytest.approx(req.eps_y, rel=1e-4)
    assert scalar_report.distortion_U == pytest.approx(req.eps_u, rel=1e-4)
    assert scalar_report.flags["singular_output_blocks"] == []


def test_report_serialization(scalar_report):
    doc = scalar_report.to_dict()
    json.dumps(doc)
    assert "mechanism" not in doc and "solution" not in doc
    assert doc["solver"]["status"] == "Optimal"


def test_provenance_records_inputs(scalar_report, scalar_case):
    model, req = scalar_case
    prov = scalar_report.mechanism.provenance
    assert prov["model_hash"] == content_hash(model, req)
    assert prov["K"] == req.K
    assert prov["eps_Y"] == req.eps_y and prov["eps_U"] == req.eps_u
    assert prov["solver_status"] == "Optimal"


def test_mechanism_round_trip(tmp_path, scalar_report):
    mech = scalar_report.mechanism
    path = tmp_path / "mech.json"
    save_mechanism(mech, str(path))
    back = load_mechanism(str(path))
    assert back.K == mech.K and back.n_y == mech.n_y
    np.testing.assert_array_equal(back.Gtilde, mech.Gtilde)
    np.testing.assert_array_equal(back.Sigma_V, mech.Sigma_V)
    np.testing.assert_array_equal(back.Sigma_H, mech.Sigma_H)
    assert back.provenance == mech.provenance


def test_mechanism_rejects_indefinite_noise():
    from privsynth.synth import ExtractionFailure
    with pytest.raises(ExtractionFailure):
        Mechanism(G_blocks=[np.eye(1), np.eye(1)],
                  Sigma_V=np.diag([1.0, -1.0]), Sigma_H=np.eye(2))


def test_sample_mechanism_deterministic(scalar_report):
    mech = scalar_report.mechanism
    y = np.array([[0.3], [-0.1]])
    u = np.zeros((2, 1))
    z1, r1 = sample_mechanism(mech, y, u, rng=77)
    z2, r2 = sample_mechanism(mech, y, u, rng=77)
    np.testing.assert_array_equal(z1, z2)
    np.testing.assert_array_equal(r1, r2)
    z3, _ = sample_mechanism(mech, y, u, rng=78)
    assert np.any(z3 != z1)
    assert z1.shape == (2, 1) and r1.shape == (2, 1)


def test_infeasible_budget_is_blamed():
    model, req = load_model(str(FIXTURES / "eps_u_zero.json"))
    with pytest.raises(InfeasibleProgram) as exc:
        synthesize(model, req)
    assert exc.value.worst_constraint == "input_distortion_budget"
    assert "input distortion budget infeasible" in str(exc.value)


def test_tight_budgets_still_solve():
    """Small but positive budgets stay feasible via the pass-through start."""
    model, req = load_model(str(FIXTURES / "scalar.json"))
    model, req = with_overrides(model, req, eps_y=1e-4, eps_u=1e-4)
    rep = synthesize(model, req)
    assert rep.solver["status"] == "Optimal"
    assert rep.distortion_Y <= 1e-4 * (1 + 1e-6)
    # Nearly lossless disclosure: the leakage approaches the no-mechanism MI.
    assert rep.mi_bits > 0.5
