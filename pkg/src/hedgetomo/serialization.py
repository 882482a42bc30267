"""JSON schemas for states, POVMs, measurement records and diagnostics.

Matrices are stored row-major as ``[re, im]`` pairs:

    DensityMatrix / Hermitian estimate:
        {"dim": d, "entries": [[re, im], ...]}            # d*d pairs
    Povm:
        {"dim": d, "effects": [[[re, im], ...], ...]}
    MeasurementRecord:
        {"dim": d, "items": [{"effect": [[re, im], ...],
                              "count": n, "weight": w}, ...]}
    Diagnostics sidecar:
        {"iterations": ..., "converged": ..., "final_objective": ...,
         "min_eigenvalue": ...}

Floats are emitted with Python's shortest round-trip representation, so every
file re-parses to exactly the same values.
"""

from __future__ import annotations

import json

import numpy as np

from .estimators import SolverDiagnostics
from .likelihood import MeasurementRecord, RecordItem
from .states import DensityMatrix, Effect, Povm, matrix


class SchemaError(ValueError):
    """A JSON document does not match its declared schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(data: dict, key: str, kind, path: str):
    if not isinstance(data, dict):
        raise SchemaError(path, f"expected an object, got {type(data).__name__}")
    if key not in data:
        raise SchemaError(f"{path}.{key}", "missing field")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{path}.{key}", f"expected {kind.__name__}")
    return value


def matrix_to_pairs(mat) -> list[list[float]]:
    flat = matrix(mat).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def pairs_to_matrix(pairs, dim: int, path: str) -> np.ndarray:
    if not isinstance(pairs, list) or len(pairs) != dim * dim:
        raise SchemaError(path, f"expected {dim * dim} [re, im] pairs")
    flat = np.empty(dim * dim, dtype=complex)
    for i, pair in enumerate(pairs):
        if not isinstance(pair, list) or len(pair) != 2:
            raise SchemaError(f"{path}[{i}]", "expected a [re, im] pair")
        flat[i] = complex(float(pair[0]), float(pair[1]))
    return flat.reshape(dim, dim)


def density_matrix_to_dict(rho) -> dict:
    mat = matrix(rho)
    return {"dim": mat.shape[0], "entries": matrix_to_pairs(mat)}


def density_matrix_from_dict(data: dict, path: str = "$") -> DensityMatrix:
    dim = _require(data, "dim", int, path)
    entries = _require(data, "entries", list, path)
    try:
        return DensityMatrix(pairs_to_matrix(entries, dim, f"{path}.entries"))
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}.entries", str(exc)) from exc


def hermitian_from_dict(data: dict, path: str = "$") -> np.ndarray:
    """Parse the DensityMatrix schema without requiring positivity."""
    dim = _require(data, "dim", int, path)
    entries = _require(data, "entries", list, path)
    return pairs_to_matrix(entries, dim, f"{path}.entries")


def povm_to_dict(povm: Povm) -> dict:
    return {"dim": povm.dim, "effects": [matrix_to_pairs(e) for e in povm]}


def povm_from_dict(data: dict, path: str = "$") -> Povm:
    dim = _require(data, "dim", int, path)
    effects = _require(data, "effects", list, path)
    try:
        return Povm(
            effects=tuple(
                Effect(pairs_to_matrix(e, dim, f"{path}.effects[{i}]"))
                for i, e in enumerate(effects)
            )
        )
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}.effects", str(exc)) from exc


def record_to_dict(record: MeasurementRecord) -> dict:
    return {
        "dim": record.dim,
        "items": [
            {
                "effect": matrix_to_pairs(item.effect),
                "count": item.count,
                "weight": item.weight,
            }
            for item in record.items
        ],
    }


def record_from_dict(data: dict, path: str = "$") -> MeasurementRecord:
    dim = _require(data, "dim", int, path)
    items_data = _require(data, "items", list, path)
    items = []
    for i, item in enumerate(items_data):
        item_path = f"{path}.items[{i}]"
        effect_pairs = _require(item, "effect", list, item_path)
        count = _require(item, "count", int, item_path)
        weight = _require(item, "weight", (int, float), item_path)
        try:
            effect = Effect(pairs_to_matrix(effect_pairs, dim, f"{item_path}.effect"))
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"{item_path}.effect", str(exc)) from exc
        items.append(RecordItem(effect, count, float(weight)))
    try:
        return MeasurementRecord(dim=dim, items=tuple(items))
    except ValueError as exc:
        raise SchemaError(f"{path}.items", str(exc)) from exc


def diagnostics_to_dict(diagnostics: SolverDiagnostics) -> dict:
    return {
        "iterations": diagnostics.iterations,
        "converged": diagnostics.converged,
        "final_objective": diagnostics.final_objective,
        "min_eigenvalue": diagnostics.min_eigenvalue,
    }


def dump_json(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2)
        handle.write("\n")


def load_json(path) -> dict:
    """Load a JSON document, reporting the line/column of syntax errors."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"line {exc.lineno}, column {exc.colno}", exc.msg
        ) from exc
