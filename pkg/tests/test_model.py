"""Model file parsing, invariant validation and override handling."""

import json
import math
import pathlib

import numpy as np
import pytest

from privsynth.model import (
    ModelFormatError,
    SynthesisRequest,
    ValidationError,
    content_hash,
    load_model,
    parse_model,
    save_model,
    to_dict,
    validate,
    with_overrides,
)

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def load_raw(name):
    with open(FIXTURES / f"{name}.json", encoding="utf-8") as fh:
        return json.load(fh)


def test_scalar_shorthand_expansion():
    """Scalars for covariances and weights expand to full matrices."""
    model, req = parse_model(load_raw("scalar"))
    assert model.A.shape == (1, 1)
    assert model.Sigma_x1.shape == (1, 1) and model.Sigma_x1[0, 0] == 1.0
    assert model.U.shape == (1, 1)
    assert req.K == 2
    # W_Y given as the scalar 1.0 becomes the K*n_y identity.
    np.testing.assert_array_equal(req.W_Y, np.eye(2))
    np.testing.assert_array_equal(req.W_U, np.eye(2))


def test_per_step_weight_expansion():
    data = load_raw("twostate")
    data["W_Y"] = [[2.0, 0.0], [0.0, 3.0]]
    _, req = parse_model(data)
    np.testing.assert_array_equal(req.W_Y, np.kron(np.eye(3), [[2.0, 0.0], [0.0, 3.0]]))


def test_inf_budget_parses():
    data = load_raw("scalar")
    data["eps_Y"] = "inf"
    _, req = parse_model(data)
    assert math.isinf(req.eps_y)
    assert req.eps_u == 1.0


def test_bad_eps_string_rejected():
    data = load_raw("scalar")
    data["eps_U"] = "huge"
    with pytest.raises(ModelFormatError, match="eps_U"):
        parse_model(data)


def test_missing_field_rejected():
    data = load_raw("scalar")
    del data["Sigma_W"]
    with pytest.raises(ModelFormatError, match="Sigma_W"):
        parse_model(data)


def test_top_level_must_be_object():
    with pytest.raises(ModelFormatError):
        parse_model([1, 2, 3])


def test_round_trip_preserves_values(tmp_path):
    model, req = load_model(str(FIXTURES / "twostate.json"))
    out = tmp_path / "copy.json"
    save_model(model, req, str(out))
    model2, req2 = load_model(str(out))
    np.testing.assert_array_equal(model.A, model2.A)
    np.testing.assert_array_equal(model.Sigma_W, model2.Sigma_W)
    np.testing.assert_array_equal(req.W_Y, req2.W_Y)
    assert req.eps_y == req2.eps_y
    assert content_hash(model, req) == content_hash(model2, req2)


def test_round_trip_inf_budget(tmp_path):
    model, req = load_model(str(FIXTURES / "scalar.json"))
    model, req = with_overrides(model, req, eps_y=math.inf)
    out = tmp_path / "inf.json"
    save_model(model, req, str(out))
    _, req2 = load_model(str(out))
    assert math.isinf(req2.eps_y)


def test_content_hash_sensitivity():
    model, req = load_model(str(FIXTURES / "scalar.json"))
    base = content_hash(model, req)
    _, req2 = with_overrides(model, req, eps_u=2.0)
    assert content_hash(model, req2) != base
    assert len(base) == 64 and all(c in "0123456789abcdef" for c in base)


def test_validate_accepts_fixtures():
    for name in ("scalar", "twostate", "reactor4", "eps_u_zero"):
        model, req = parse_model(load_raw(name))
        rep = validate(model, req)
        assert rep.ok, rep.violations


def test_validate_rejects_asymmetric_covariance():
    data = load_raw("twostate")
    data["Sigma_x1"] = [[0.5, 0.1], [0.0, 0.5]]
    model, req = parse_model(data)
    rep = validate(model, req)
    assert any("Sigma_x1" in v and "symmetric" in v for v in rep.violations)


def test_validate_rejects_indefinite_covariance():
    data = load_raw("twostate")
    data["Sigma_W"] = [[1.0, 2.0], [2.0, 1.0]]
    model, req = parse_model(data)
    rep = validate(model, req)
    assert any("Sigma_W" in v and "positive definite" in v for v in rep.violations)


def test_validate_rejects_rank_deficient_weight():
    data = load_raw("scalar")
    data["W_Y"] = [[1.0, 1.0], [1.0, 1.0]]
    model, req = parse_model(data)
    rep = validate(model, req)
    assert any("W_Y" in v and "rank" in v for v in rep.violations)


def test_validate_rejects_short_horizon():
    data = load_raw("scalar")
    data["K"] = 1
    model, req = parse_model(data)
    rep = validate(model, req)
    assert any("K" in v for v in rep.violations)


def test_validate_rejects_short_input_sequence():
    data = load_raw("twostate")
    data["U"] = [[0.4]]
    model, req = parse_model(data)
    rep = validate(model, req)
    assert any("K-1" in v for v in rep.violations)


def test_load_model_raises_validation_error(tmp_path):
    data = load_raw("scalar")
    data["eps_Y"] = -1.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    with pytest.raises(ValidationError) as exc:
        load_model(str(bad))
    assert exc.value.report.violations


def test_input_sequence_padding():
    model, _ = parse_model(load_raw("twostate"))
    assert model.U.shape == (2, 1)
    u3 = model.input_sequence(3)
    np.testing.assert_array_equal(u3, [[0.4], [-0.2], [0.0]])
    np.testing.assert_array_equal(model.input_sequence(2), [[0.4], [-0.2]])
    with pytest.raises(ValueError):
        model.input_sequence(4)


def test_with_overrides_resizes_weights():
    model, req = parse_model(load_raw("twostate"))
    _, req5 = with_overrides(model, req, K=5)
    assert req5.K == 5
    assert req5.W_Y.shape == (10, 10)
    np.testing.assert_array_equal(req5.W_Y, np.eye(10))


def test_with_overrides_rejects_unstructured_weight():
    model, req = parse_model(load_raw("scalar"))
    W = np.array([[1.0, 0.2], [0.2, 1.5]])
    req = SynthesisRequest(K=req.K, eps_y=req.eps_y, eps_u=req.eps_u, W_Y=W, W_U=req.W_U)
    with pytest.raises(ValueError, match="W_Y"):
        with_overrides(model, req, K=3)


def test_with_overrides_eps_only_keeps_weights():
    model, req = parse_model(load_raw("reactor4"))
    m2, r2 = with_overrides(model, req, eps_y=3.5)
    assert m2 is model
    assert r2.eps_y == 3.5 and r2.eps_u == req.eps_u
    assert r2.W_Y is req.W_Y


def test_to_dict_json_serializable():
    model, req = parse_model(load_raw("reactor4"))
    text = json.dumps(to_dict(model, req))
    assert "eps_Y" in text
