"""JSON run configuration: schema validation, parsing and canonical emission.

Complex numbers are ``[re, im]`` pairs (plain reals are accepted), matrices
are row-major nested arrays and polynomial fields are tables mapping a
comma-separated multi-index such as ``"0,1"`` to a coefficient matrix.  A
bare matrix is shorthand for a constant polynomial.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema
import numpy as np

from .errors import ConfigError

_NUMBER = {"type": "number"}
_COMPLEX = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}]}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _COMPLEX}}
_POLY = {"oneOf": [_MATRIX, {"type": "object", "minProperties": 1,
                             "propertyNames": {"pattern": r"^\d+(,\d+)*$"},
                             "additionalProperties": _MATRIX}]}
_VECTOR = {"type": "array", "items": _NUMBER}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "required": ["operator"],
    "additionalProperties": False,
    "properties": {
        "version": {"type": "integer", "enum": [1]},
        "operator": {
            "type": "object",
            "required": ["n", "N", "gamma"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 3},
                "N": _POS_INT,
                "gamma": {"type": "array", "minItems": 1, "items": _POLY},
                "rho": _POLY,
                "connection": {"type": "array", "items": _POLY},
                "potential": _POLY,
                "domain": {"type": "object", "required": ["lo", "hi"], "additionalProperties": False,
                           "properties": {"lo": _VECTOR, "hi": _VECTOR}},
            },
        },
        "ellipticity": {
            "type": "object", "additionalProperties": False,
            "properties": {"directions": _POS_INT, "grid": _POS_INT,
                           "threshold": {"type": "number", "exclusiveMinimum": 0}},
        },
        "interior": {
            "type": "object", "additionalProperties": False,
            "required": ["points"],
            "properties": {
                "points": {"type": "array", "minItems": 1, "items": _VECTOR},
                "weights": _VECTOR,
                "scheme": {"enum": ["polar", "hermite"]},
                "order": {"type": "integer", "minimum": 2},
                "volterra_order": _POS_INT,
                "a2_method": {"enum": ["augmented", "volterra"]},
                "cross_check": {"type": "boolean"},
                "cross_check_order": {"type": "integer", "minimum": 2},
            },
        },
        "boundary": {
            "type": "object", "additionalProperties": False,
            "required": ["points", "weights", "dr", "dxhat"],
            "properties": {
                "points": {"type": "array", "minItems": 1, "items": _VECTOR},
                "weights": _VECTOR,
                "dr": {"type": "array", "items": _VECTOR},
                "dxhat": {"type": "array", "items": {"type": "array", "items": _VECTOR}},
                "order": _POS_INT,
                "contour": {"type": "object", "additionalProperties": False,
                            "properties": {"nodes": _POS_INT, "mu": {"type": "number"},
                                           "u_max": {"type": "number"}}},
                "fast_path": {"type": "boolean"},
                "halfline_check": {"type": "boolean"},
            },
        },
        "oracle": {
            "type": "object", "additionalProperties": False,
            "required": ["geometry", "length"],
            "properties": {
                "geometry": {"enum": ["circle", "interval"]},
                "length": {"type": "number", "exclusiveMinimum": 0},
                "m": {"type": "integer", "minimum": 16},
                "kind": {"enum": ["DbarD", "DDbar", "Delta"]},
                "t_window": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                             "minItems": 2, "maxItems": 2},
                "samples": {"type": "integer", "minimum": 8},
                "k_max": {"type": "integer", "minimum": 0, "maximum": 8},
                "index_times": _VECTOR,
            },
        },
        "finsler": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "samples": {"type": "array", "items": {
                    "type": "object", "required": ["x", "xi", "branch"], "additionalProperties": False,
                    "properties": {"x": _VECTOR, "xi": _VECTOR, "branch": {"type": "integer", "minimum": 0}}}},
                "flow": {"type": "object", "required": ["x", "xi", "branch"], "additionalProperties": False,
                         "properties": {"x": _VECTOR, "xi": _VECTOR,
                                        "branch": {"type": "integer", "minimum": 0},
                                        "dt": {"type": "number", "exclusiveMinimum": 0},
                                        "steps": _POS_INT}},
            },
        },
        "tolerances": {
            "type": "object", "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("a0", "a1", "a2", "cross_check", "index")},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"report": {"type": "string"}, "csv_dir": {"type": "string"}},
        },
    },
}

DEFAULT_TOLERANCES = {"a0": 1e-8, "a1": 1e-8, "a2": 1e-3, "cross_check": 1e-6, "index": 1e-6}


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _complex(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _matrix(rows) -> np.ndarray:
    return np.array([[_complex(v) for v in row] for row in rows], dtype=complex)


def _poly_terms(obj, n: int) -> dict:
    if isinstance(obj, list):
        return {(0,) * n: _matrix(obj)}
    return {tuple(int(a) for a in key.split(",")): _matrix(M) for key, M in obj.items()}


def _check_matrix(rows, N: int, where: list, errors: list) -> None:
    if len(rows) != N:
        errors.append((_path(where), f"matrix has {len(rows)} rows, expected N={N}"))
    for i, row in enumerate(rows):
        if len(row) != N:
            errors.append((_path(where + [i]), f"row has {len(row)} entries, expected N={N}"))


def _check_poly(obj, n: int, N: int, where: list, errors: list) -> None:
    if isinstance(obj, list):
        _check_matrix(obj, N, where, errors)
        return
    for key, M in obj.items():
        alpha = key.split(",")
        if len(alpha) != n:
            errors.append((_path(where + [key]), f"exponent has {len(alpha)} entries, expected n={n}"))
        elif sum(int(a) for a in alpha) > 4:
            errors.append((_path(where + [key]), "total degree exceeds 4"))
        _check_matrix(M, N, where + [key], errors)


def _check_vectors(vectors, length: int, what: str, where: list, errors: list) -> None:
    for i, v in enumerate(vectors):
        if len(v) != length:
            errors.append((_path(where + [i]), f"{what} has {len(v)} entries, expected {length}"))


def _dimension_errors(raw: dict) -> list:
    errors: list = []
    op = raw["operator"]
    n, N = op["n"], op["N"]
    if len(op["gamma"]) != n:
        errors.append(("$.operator.gamma", f"{len(op['gamma'])} gamma fields given, expected n={n}"))
    for k, g in enumerate(op["gamma"]):
        _check_poly(g, n, N, ["operator", "gamma", k], errors)
    if "rho" in op:
        _check_poly(op["rho"], n, N, ["operator", "rho"], errors)
    if "connection" in op:
        if len(op["connection"]) != n:
            errors.append(("$.operator.connection", f"{len(op['connection'])} connection fields, expected n={n}"))
        for k, b in enumerate(op["connection"]):
            _check_poly(b, n, N, ["operator", "connection", k], errors)
    if "potential" in op:
        _check_poly(op["potential"], n, N, ["operator", "potential"], errors)
    if "domain" in op:
        for key in ("lo", "hi"):
            if len(op["domain"][key]) != n:
                errors.append((f"$.operator.domain.{key}", f"expected {n} entries"))
    if "interior" in raw:
        it = raw["interior"]
        _check_vectors(it["points"], n, "point", ["interior", "points"], errors)
        if "weights" in it and len(it["weights"]) != len(it["points"]):
            errors.append(("$.interior.weights", "one weight per interior point is required"))
    if "boundary" in raw:
        b = raw["boundary"]
        K = len(b["points"])
        for key in ("weights", "dr", "dxhat"):
            if len(b[key]) != K:
                errors.append((f"$.boundary.{key}", f"{len(b[key])} entries, expected one per point ({K})"))
        _check_vectors(b["points"], n, "point", ["boundary", "points"], errors)
        _check_vectors(b["dr"], n, "normal covector", ["boundary", "dr"], errors)
        for i, frame in enumerate(b["dxhat"]):
            if len(frame) != n - 1:
                errors.append((_path(["boundary", "dxhat", i]), f"{len(frame)} tangential covectors, expected n-1={n - 1}"))
            _check_vectors(frame, n, "tangential covector", ["boundary", "dxhat", i], errors)
    if "oracle" in raw:
        orc = raw["oracle"]
        if n != 1:
            errors.append(("$.oracle", "discretization oracles require n=1"))
        tw = orc.get("t_window")
        if tw and tw[0] >= tw[1]:
            errors.append(("$.oracle.t_window", "window must be increasing"))
    if "finsler" in raw:
        f = raw["finsler"]
        for i, s in enumerate(f.get("samples", [])):
            for key in ("x", "xi"):
                if len(s[key]) != n:
                    errors.append((_path(["finsler", "samples", i, key]), f"expected {n} entries"))
            if s["branch"] >= N:
                errors.append((_path(["finsler", "samples", i, "branch"]), f"branch must be below N={N}"))
        if "flow" in f:
            for key in ("x", "xi"):
                if len(f["flow"][key]) != n:
                    errors.append((f"$.finsler.flow.{key}", f"expected {n} entries"))
            if f["flow"]["branch"] >= N:
                errors.append(("$.finsler.flow.branch", f"branch must be below N={N}"))
    return errors


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``raw`` keeps the canonical JSON tree."""

    raw: dict

    @property
    def n(self) -> int:
        return self.raw["operator"]["n"]

    @property
    def N(self) -> int:
        return self.raw["operator"]["N"]

    def section(self, name: str) -> dict | None:
        return self.raw.get(name)

    def tolerance(self, key: str) -> float:
        return float(self.raw.get("tolerances", {}).get(key, DEFAULT_TOLERANCES[key]))

    def symbol(self):
        from .symbol import DiracSymbol, PolynomialField

        op = self.raw["operator"]
        n, N = op["n"], op["N"]
        gamma = [PolynomialField(n, N, _poly_terms(g, n)) for g in op["gamma"]]
        rho = PolynomialField(n, N, _poly_terms(op["rho"], n)) if "rho" in op else None
        conn = [PolynomialField(n, N, _poly_terms(b, n)) for b in op["connection"]] if "connection" in op else None
        dom = op.get("domain", {})
        return DiracSymbol.build(gamma, rho, conn, dom.get("lo"), dom.get("hi"))

    def boundary_mesh(self):
        from .boundary import BoundaryMesh
        from .symbol import BoundaryChart

        b = self.raw["boundary"]
        charts = [BoundaryChart(p, dr, np.asarray(f, float).reshape(self.n - 1, self.n))
                  for p, dr, f in zip(b["points"], b["dr"], b["dxhat"])]
        return BoundaryMesh(charts, np.asarray(b["weights"], float))

    def potential(self):
        """Endomorphism ``V`` added to ``Dbar D`` as a field, or None."""
        from .symbol import PolynomialField

        op = self.raw["operator"]
        if "potential" not in op:
            return None
        return PolynomialField(self.n, self.N, _poly_terms(op["potential"], self.n))

    def digest(self) -> str:
        return hashlib.sha256(emit(self).encode()).hexdigest()


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_canonical(v) for v in obj]
    return obj


def validate_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno}, column {exc.colno}", exc.msg)]) from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [(_path(leaf.absolute_path), _short(leaf))
              for e in validator.iter_errors(raw) for leaf in [_deepest(e)]]
    try:
        dims = _dimension_errors(raw)
    except (KeyError, TypeError, ValueError, AttributeError):
        dims = []  # structure too broken for dimension checks; schema errors cover it
    errors = list(dict.fromkeys(errors + dims))
    if errors:
        raise ConfigError(errors)
    raw = copy.deepcopy(raw)
    raw.setdefault("version", 1)
    return RunConfig(_canonical(raw))


def _deepest(err: jsonschema.ValidationError) -> jsonschema.ValidationError:
    """Follow ``oneOf`` failures down to the alternative that got furthest."""
    while err.context:
        deeper = max(err.context, key=lambda e: len(e.absolute_path))
        if len(deeper.absolute_path) <= len(err.absolute_path):
            break
        err = deeper
    return err


def _short(err: jsonschema.ValidationError) -> str:
    if err.validator == "oneOf" and isinstance(err.instance, list) and all(
            isinstance(v, (int, float)) for v in err.instance):
        return f"complex entry must be a number or an [re, im] pair, got {err.instance}"
    if err.validator == "oneOf":
        return f"value {json.dumps(err.instance)[:60]} matches none of the allowed forms"
    return err.message


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return validate_config(fh.read())


def emit(config: RunConfig) -> str:
    """Canonical JSON text (sorted keys, fixed separators)."""
    return json.dumps(config.raw, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def matrix_to_json(M) -> list:
    """Row-major nested list with ``[re, im]`` pairs for complex entries."""
    M = np.asarray(M, complex)
    return [[float(v.real) if v.imag == 0 else [float(v.real), float(v.imag)] for v in row] for row in M]
