import json
from pathlib import Path

import numpy as np
import pytest

from dampedmodes import eigenmodes
from dampedmodes.fastmode import ConstrainedSystem, constrained_eigenmodes
from dampedmodes.modelfile import ModelFile, ModelFileError, dump, from_dict, load

MODELS = Path(__file__).resolve().parent.parent / "models"
MODEL_FILES = sorted(p for p in MODELS.glob("*.json") if "schema_version" in p.read_text())


def test_every_type_has_an_example():
    types = {load(p).type for p in MODEL_FILES}
    assert types == {"dense", "single", "pair_example", "uniform_chain", "end_damped_chain", "open_string", "dsl",
                     "fast_mode"}


@pytest.mark.parametrize("path", MODEL_FILES, ids=lambda p: p.stem)
def test_export_round_trip(path):
    model = load(path)
    dense = from_dict(json.loads(dump(model.export_dense())))
    assert dense.type in ("dense", "fast_mode")
    a, b = model.build(), dense.build()
    policy = model.policy.replace(allow_critical=True)
    if isinstance(a, ConstrainedSystem):
        wa, wb = constrained_eigenmodes(a, policy).omegas, constrained_eigenmodes(b, policy).omegas
    else:
        wa, wb = eigenmodes(a, policy).omegas, eigenmodes(b, policy).omegas
    scale = max(1.0, float(np.max(np.abs(wa))))
    assert np.max(np.abs(wa - wb)) <= 1e-12 * scale


def _doc(type_, **params):
    return {"schema_version": 1, "type": type_, "parameters": params}


@pytest.mark.parametrize(
    "doc, message",
    [
        ({"schema_version": 1, "type": "single", "parameters": {"k": 1.0, "gamma": 0.1}, "extra": 1}, "top-level"),
        (_doc("single", k=1.0), "missing"),
        (_doc("single", k=1.0, gamma=0.1, mass=2.0), "unknown parameters"),
        (_doc("nonsense"), "unknown model type"),
        ({"schema_version": 2, "type": "single", "parameters": {"k": 1.0, "gamma": 0.1}}, "schema_version"),
        (_doc("single", k="one", gamma=0.1), "number"),
        (_doc("single", k=True, gamma=0.1), "number"),
        (_doc("dense", k_matrix=[[1.0, 2.0]], gamma_matrix=[[1.0]]), "square"),
        (_doc("dense", k_matrix=[[1.0, 2.0], [0.0, 1.0]], gamma_matrix=np.eye(2).tolist()), "symmetric"),
        (_doc("dense", k_matrix=[[1.0, 0.0], [0.0, 1.0]], gamma_matrix=[[1.0]]), "differ in shape"),
        (_doc("uniform_chain", n=0, k=1.0, gamma=0.1), "positive integer"),
        (_doc("uniform_chain", n=3, k=1.0, gamma=0.1, v=[1.0, 2.0]), "n = 3"),
        (_doc("dsl", n=3, length=1.0, v={"ramp": 1}, gamma=0.0), "step"),
        (_doc("fast_mode", preset="open_string", n=3), "fast_mode"),
        (_doc("fast_mode", preset="bridge", n=3, length=1.0), "preset"),
        (_doc("fast_mode", k_matrix=[[1.0]], gamma_matrix=[[0.0]], coupling_a=[1.0], kappa=1.0, gamma=0.0), "gamma"),
        ({"schema_version": 1, "type": "single", "parameters": {"k": 1.0, "gamma": 0.1}, "numerics": {"bogus": 1}},
         "numerics"),
        ([], "object"),
    ],
)
def test_validation_errors(doc, message):
    with pytest.raises(ModelFileError, match=message):
        from_dict(doc)


def test_load_errors(tmp_path):
    with pytest.raises(ModelFileError, match="cannot read"):
        load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelFileError, match="invalid JSON"):
        load(bad)


def test_numerics_override():
    model = from_dict({"schema_version": 1, "type": "single", "parameters": {"k": 4.0, "gamma": 2.0},
                       "numerics": {"allow_critical": True}})
    assert model.policy.allow_critical
    assert model.build().policy.allow_critical


def test_dsl_profiles():
    step = from_dict(_doc("dsl", n=9, length=1.0, v=0.0, gamma={"step": {"at": 0.5, "left": 0.0, "right": 2.0}}))
    g = np.diag(step.build().gamma_matrix)
    assert np.array_equal(g, [0, 0, 0, 0, 2, 2, 2, 2, 2])
    listed = from_dict(_doc("dsl", n=3, length=1.0, v=[1.0, 2.0, 3.0], gamma=0.5))
    sys = listed.build()
    assert np.allclose(np.diag(sys.k_matrix), 2 * 16 + np.array([1.0, 2.0, 3.0]))


def test_scalar_parameters_and_with_parameter():
    model = load(MODELS / "uniform_chain.json")
    assert model.scalar_parameters() == ["gamma", "k"]
    other = model.with_parameter("gamma", 0.3)
    assert np.allclose(np.diag(other.build().gamma_matrix), 0.6)
    assert model.parameters["gamma"] == 0.1


def test_dump_is_deterministic():
    model = load(MODELS / "fast_sample.json")
    assert dump(model) == dump(from_dict(json.loads(dump(model))))
    assert dump(model).endswith("\n")
