"""File formats: sample and gradient CSVs, JSON reports.

Samples: header ``chain,iter,theta_1,...,theta_d,accepted``; ``iter``
counts from 1 within each chain; ``accepted`` is 0/1 (always 1 for samplers
without an accept step). Gradients: ``chain,iter,grad_1,...,grad_d``.
Floats are written with 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError

FLOAT_FMT = "%.17g"

SAMPLES_SCHEMA = {"prefix": ["chain", "iter"], "column": "theta_{}", "suffix": ["accepted"]}
GRADIENTS_SCHEMA = {"prefix": ["chain", "iter"], "column": "grad_{}", "suffix": []}

_NUM = {"type": ["number", "null"]}
_NUMS = {"type": "array", "items": _NUM}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["command", "config", "chains"],
    "properties": {
        "command": {"type": "string"},
        "config": {"type": "object"},
        "chains": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["chain", "n"],
                "properties": {
                    "chain": {"type": "integer"},
                    "n": {"type": "integer"},
                    "acceptance_rate": _NUM,
                    "mean": _NUMS,
                    "events": {"type": "integer"},
                    "stats": {"type": "object"},
                },
            },
        },
        "diagnostics": {"type": "object"},
    },
}

DIAGNOSE_SCHEMA = {
    "type": "object",
    "required": ["command", "n_chains", "n_iter", "dim"],
    "properties": {
        "command": {"const": "diagnose"},
        "n_chains": {"type": "integer"},
        "n_iter": {"type": "integer"},
        "dim": {"type": "integer"},
        "rhat": _NUMS,
        "ess": _NUMS,
        "tvd": _NUM,
        "ksd": _NUM,
    },
}

WEIGHTS_SCHEMA = {
    "type": "object",
    "required": ["command", "mode", "weights", "ksd"],
    "properties": {
        "command": {"enum": ["weights", "thin"]},
        "mode": {"type": "string"},
        "weights": _NUMS,
        "indices": {"type": "array", "items": {"type": "integer"}},
        "ksd": _NUM,
        "ksd_uniform": _NUM,
        "converged": {"type": "boolean"},
    },
}

CURVE_SCHEMA = {
    "type": "object",
    "required": ["command", "preset", "columns", "rows"],
    "properties": {
        "command": {"const": "experiment"},
        "preset": {"type": "string"},
        "columns": {"type": "array", "items": {"type": "string"}},
        "rows": {"type": "array", "items": {"type": "array"}},
        "summary": {"type": "object"},
    },
}


def _header(schema, d: int) -> list[str]:
    return schema["prefix"] + [schema["column"].format(i + 1) for i in range(d)] + schema["suffix"]


def _write_rows(path, header, blocks) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for chain, values, extra in blocks:
            n = values.shape[0]
            it = np.arange(1, n + 1)
            for k in range(n):
                row = [str(chain), str(int(it[k]))] + [FLOAT_FMT % v for v in values[k]]
                if extra is not None:
                    row.append(str(int(extra[k])))
                fh.write(",".join(row) + "\n")


def write_samples(path, chains, accepted=None) -> None:
    """``chains``: list of (n, d) arrays; ``accepted``: matching 0/1 arrays or None."""
    chains = [np.atleast_2d(np.asarray(c, dtype=float)) for c in chains]
    d = chains[0].shape[1]
    if accepted is None:
        accepted = [np.ones(c.shape[0], dtype=int) for c in chains]
    _write_rows(path, _header(SAMPLES_SCHEMA, d), [(i, c, a) for i, (c, a) in enumerate(zip(chains, accepted))])


def write_gradients(path, chains) -> None:
    chains = [np.atleast_2d(np.asarray(c, dtype=float)) for c in chains]
    _write_rows(path, _header(GRADIENTS_SCHEMA, chains[0].shape[1]), [(i, c, None) for i, c in enumerate(chains)])


def _read(path, schema):
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}", ["path"]) from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty file", ["path"])
        n_extra = len(schema["suffix"])
        d = len(header) - 2 - n_extra
        if d < 1 or header != _header(schema, d):
            raise ConfigError(f"{path}: header must be {_header(schema, max(d, 1))}", ["path"])
        rows = [r for r in reader if r]
    if not rows:
        raise ConfigError(f"{path}: no data rows", ["path"])
    try:
        arr = np.array(rows, dtype=float)
    except ValueError as e:
        raise ConfigError(f"{path}: non-numeric entry ({e})", ["path"]) from e
    chain = arr[:, 0].astype(int)
    out, extras = [], []
    for c in np.unique(chain):
        block = arr[chain == c]
        out.append(block[:, 2 : 2 + d])
        extras.append(block[:, 2 + d :].astype(int).reshape(-1) if n_extra else None)
    return out, extras


def read_samples(path):
    """Returns ``(chains, accepted)``: lists of (n, d) and (n,) arrays, in chain order."""
    return _read(path, SAMPLES_SCHEMA)


def read_gradients(path) -> list[np.ndarray]:
    return _read(path, GRADIENTS_SCHEMA)[0]


def stack_chains(chains) -> np.ndarray:
    """(L, n, d) array; chains are truncated to the shortest length."""
    n = min(c.shape[0] for c in chains)
    return np.stack([c[:n] for c in chains])


def jsonable(obj):
    """Convert numpy values to plain Python and non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def write_curve_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(v if isinstance(v, str) else FLOAT_FMT % v for v in r) + "\n")
