"""Declarative JSON model files.

A model file looks like::

    {"schema_version": 1, "type": "pair_example",
     "parameters": {"gamma": 0.5}, "numerics": {"crit_tol": 1e-9}}

``numerics`` is optional and overrides :class:`NumericsPolicy` fields.
Unknown keys anywhere are rejected.  Complex numbers are written as
``[re, im]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fastmode, models
from .core import DampedModesError, NumericsPolicy, OscillatorSystem

SCHEMA_VERSION = 1

# type -> (required parameters, optional parameters)
PARAMETERS = {
    "dense": ({"k_matrix", "gamma_matrix"}, set()),
    "single": ({"k", "gamma"}, set()),
    "pair_example": ({"gamma"}, set()),
    "uniform_chain": ({"n", "k", "gamma"}, {"v"}),
    "end_damped_chain": ({"n", "k", "gamma"}, {"v"}),
    "open_string": ({"n", "length"}, {"v"}),
    "dsl": ({"n", "length", "v", "gamma"}, set()),
    "fast_mode": (set(), {"preset", "n", "length", "v", "k_matrix", "gamma_matrix", "coupling_a", "kappa", "gamma"}),
}
FAST_PRESET_KEYS = {"preset", "n", "length"}
FAST_DENSE_KEYS = {"k_matrix", "gamma_matrix", "coupling_a", "kappa", "gamma"}


class ModelFileError(DampedModesError, ValueError):
    """Malformed or inconsistent model file."""


def _matrix(name, value):
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"{name} must be a rectangular array of numbers") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ModelFileError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    return m


def _number(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFileError(f"{name} must be a number")
    if not math.isfinite(value):
        raise ModelFileError(f"{name} must be finite")
    return float(value)


def _count(name, value):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ModelFileError(f"{name} must be a positive integer")
    return value


def _profile(name, value):
    """Site profile: scalar, list of N samples, or ``{"step": {"at": x0, "left": a, "right": b}}``."""
    if isinstance(value, dict):
        if set(value) != {"step"} or not isinstance(value["step"], dict):
            raise ModelFileError(f"{name}: only the 'step' profile is supported")
        step = value["step"]
        if set(step) != {"at", "left", "right"}:
            raise ModelFileError(f"{name}.step needs exactly 'at', 'left' and 'right'")
        x0, lo, hi = (_number(f"{name}.step.{k}", step[k]) for k in ("at", "left", "right"))
        return lambda x: lo if x < x0 else hi
    if isinstance(value, list):
        return np.array([_number(f"{name}[{i}]", v) for i, v in enumerate(value)])
    c = _number(name, value)
    return lambda x: c


def _sampled(name, prof, n, length_a):
    if callable(prof):
        delta = length_a / (n + 1)
        return np.array([prof(delta * a) for a in range(1, n + 1)])
    if prof.shape != (n,):
        raise ModelFileError(f"{name} list must have n = {n} entries")
    return prof


def _site_values(name, value, n):
    if value is None:
        return None
    if isinstance(value, list):
        arr = np.array([_number(f"{name}[{i}]", v) for i, v in enumerate(value)])
        if arr.shape != (n,):
            raise ModelFileError(f"{name} list must have n = {n} entries")
        return arr
    return _number(name, value)


@dataclass(frozen=True)
class ModelFile:
    type: str
    parameters: dict
    numerics: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ModelFileError(f"unsupported schema_version {self.schema_version}")
        if self.type not in PARAMETERS:
            raise ModelFileError(f"unknown model type {self.type!r}; expected one of {sorted(PARAMETERS)}")
        if not isinstance(self.parameters, dict):
            raise ModelFileError("parameters must be an object")
        required, optional = PARAMETERS[self.type]
        keys = set(self.parameters)
        if keys - required - optional:
            raise ModelFileError(f"unknown parameters for {self.type}: {sorted(keys - required - optional)}")
        if required - keys:
            raise ModelFileError(f"missing parameters for {self.type}: {sorted(required - keys)}")
        if self.type == "fast_mode":
            preset = "preset" in keys
            allowed = FAST_PRESET_KEYS | {"v"} if preset else FAST_DENSE_KEYS
            needed = FAST_PRESET_KEYS if preset else FAST_DENSE_KEYS
            if keys - allowed or needed - keys:
                raise ModelFileError(
                    "fast_mode needs either preset/n/length[/v] or k_matrix/gamma_matrix/coupling_a/kappa/gamma"
                )
            if preset and self.parameters["preset"] != "open_string":
                raise ModelFileError("the only fast_mode preset is 'open_string'")
        if not isinstance(self.numerics, dict):
            raise ModelFileError("numerics must be an object")
        try:
            NumericsPolicy().replace(**self.numerics)
        except (TypeError, ValueError) as exc:
            raise ModelFileError(str(exc)) from exc
        # build once so every error surfaces at load time
        self.build()

    @property
    def policy(self) -> NumericsPolicy:
        return NumericsPolicy().replace(**self.numerics)

    @property
    def is_constrained(self) -> bool:
        return self.type == "fast_mode"

    def scalar_parameters(self) -> list[str]:
        """Names of real scalar parameters that can be scanned."""
        return sorted(
            k for k, v in self.parameters.items()
            if k != "n" and isinstance(v, (int, float)) and not isinstance(v, bool)
        )

    def with_parameter(self, name: str, value: float) -> "ModelFile":
        params = dict(self.parameters)
        params[name] = float(value)
        return ModelFile(self.type, params, self.numerics, self.schema_version)

    def build(self):
        """The :class:`OscillatorSystem`, or a :class:`ConstrainedSystem` for ``fast_mode``."""
        try:
            return self._build()
        except ModelFileError:
            raise
        except (ValueError, TypeError) as exc:
            raise ModelFileError(f"{self.type}: {exc}") from exc

    def _build(self):
        p = self.parameters
        policy = self.policy
        t = self.type
        if t == "dense":
            k = _matrix("k_matrix", p["k_matrix"])
            g = _matrix("gamma_matrix", p["gamma_matrix"])
            return OscillatorSystem(k, g, policy=policy)
        if t == "single":
            sys = models.build_single(_number("k", p["k"]), _number("gamma", p["gamma"]))
        elif t == "pair_example":
            sys = models.build_pair_example(_number("gamma", p["gamma"]))
        elif t in ("uniform_chain", "end_damped_chain"):
            n = _count("n", p["n"])
            builder = models.build_uniform_chain if t == "uniform_chain" else models.build_end_damped_chain
            sys = builder(n, _number("k", p["k"]), _number("gamma", p["gamma"]), _site_values("v", p.get("v"), n))
        elif t == "open_string":
            n = _count("n", p["n"])
            sys = models.build_open_string(n, _number("length", p["length"]), _site_values("v", p.get("v"), n))
        elif t == "dsl":
            n = _count("n", p["n"])
            length = _number("length", p["length"])
            v = _sampled("v", _profile("v", p["v"]), n, length)
            g = _sampled("gamma", _profile("gamma", p["gamma"]), n, length)
            sys = models.ChainSpec(n, (length / (n + 1)) ** -2, v, g, delta=length / (n + 1)).to_system()
        else:
            return self._build_fast(policy)
        return OscillatorSystem(sys.k_matrix, sys.gamma_matrix, policy=policy)

    def _build_fast(self, policy):
        p = self.parameters
        if "preset" in p:
            n = _count("n", p["n"])
            cs = fastmode.build_open_string_constrained(n, _number("length", p["length"]), _site_values("v", p.get("v"), n))
            base = OscillatorSystem(cs.base.k_matrix, cs.base.gamma_matrix, policy=policy)
            return fastmode.build_constrained(base, cs.coupling_a, cs.kappa, cs.gamma_fast)
        k = _matrix("k_matrix", p["k_matrix"])
        g = _matrix("gamma_matrix", p["gamma_matrix"])
        base = OscillatorSystem(k, g, policy=policy)
        a = np.array(p["coupling_a"], dtype=float)
        return fastmode.build_constrained(base, a, _number("kappa", p["kappa"]), _number("gamma", p["gamma"]))

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "type": self.type, "parameters": self.parameters}
        if self.numerics:
            out["numerics"] = self.numerics
        return out

    def export_dense(self) -> "ModelFile":
        """Equivalent model written out as explicit matrices."""
        obj = self.build()
        if self.is_constrained:
            params = {
                "k_matrix": obj.base.k_matrix.tolist(),
                "gamma_matrix": obj.base.gamma_matrix.tolist(),
                "coupling_a": obj.coupling_a.tolist(),
                "kappa": obj.kappa,
                "gamma": obj.gamma_fast,
            }
            return ModelFile("fast_mode", params, self.numerics)
        params = {"k_matrix": obj.k_matrix.tolist(), "gamma_matrix": obj.gamma_matrix.tolist()}
        return ModelFile("dense", params, self.numerics)


def from_dict(data) -> ModelFile:
    if not isinstance(data, dict):
        raise ModelFileError("model file must contain a JSON object")
    unknown = set(data) - {"schema_version", "type", "parameters", "numerics"}
    if unknown:
        raise ModelFileError(f"unknown top-level fields: {sorted(unknown)}")
    for key in ("schema_version", "type", "parameters"):
        if key not in data:
            raise ModelFileError(f"missing field {key!r}")
    return ModelFile(data["type"], data["parameters"], data.get("numerics") or {}, data["schema_version"])


def load(path) -> ModelFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def dump(model: ModelFile) -> str:
    return json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n"
