"""JSON document formats for models, polytopes and scan summaries.

Frequency-table files live in tables.py; everything else that crosses the
CLI boundary is serialized here. Floats go through repr, so files round-trip
to the in-memory values exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .gptmodel import GptModel
from .polytope import HPolytope, VPolytope
from .tomofit import RankScan

__all__ = [
    "save_model",
    "load_model",
    "save_polytope",
    "load_polytope",
    "save_scan",
    "file_sha256",
]


def _matrix(a: np.ndarray) -> list:
    return [[float(x) for x in row] for row in np.asarray(a)]


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_model(model: GptModel, path: str | Path, provenance: dict | None = None) -> None:
    doc = {
        "rank": int(model.rank),
        "tau_labels": None
        if model.tau_labels is None
        else [float(t) for t in model.tau_labels],
        "states": _matrix(model.states),
        "effects_columns": _matrix(model.effects.T),
        "provenance": provenance or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path: str | Path) -> GptModel:
    doc = json.loads(Path(path).read_text())
    labels = doc.get("tau_labels")
    return GptModel(
        states=np.asarray(doc["states"], dtype=float),
        effects=np.asarray(doc["effects_columns"], dtype=float).T,
        rank=int(doc["rank"]),
        tau_labels=None if labels is None else np.asarray(labels, dtype=float),
    )


def save_polytope(poly: VPolytope | HPolytope, path: str | Path) -> None:
    if isinstance(poly, VPolytope):
        doc = {"dimension": poly.ambient_dim, "kind": "V", "rows": _matrix(poly.vertices)}
    else:
        rows = np.column_stack([poly.normals, poly.offsets])
        doc = {"dimension": poly.ambient_dim, "kind": "H", "rows": _matrix(rows)}
    Path(path).write_text(json.dumps(doc))


def load_polytope(path: str | Path) -> VPolytope | HPolytope:
    doc = json.loads(Path(path).read_text())
    rows = np.asarray(doc["rows"], dtype=float)
    if doc["kind"] == "V":
        return VPolytope(rows)
    if doc["kind"] == "H":
        return HPolytope(rows[:, :-1], rows[:, -1])
    raise ValueError(f"unknown polytope kind {doc['kind']!r}")


def save_scan(scan: RankScan, csv_path: str | Path, json_path: str | Path | None = None) -> None:
    """Write per-pair errors as CSV plus a structured summary."""
    lines = ["rank,train_table,test_table,train_error,test_error"]
    n = scan.n_tables
    for ri, k in enumerate(scan.ranks):
        for a in range(n):
            lines.append(f"{k},{a},,{scan.train_errors[ri, a]!r},")
            for b in range(n):
                if a != b:
                    lines.append(f"{k},{a},{b},,{scan.test_errors[ri, a, b]!r}")
    Path(csv_path).write_text("\n".join(lines) + "\n")

    if json_path is not None:
        summary = {
            "ranks": list(scan.ranks),
            "mean_train_error": [float(np.mean(scan.train_errors[i])) for i in range(len(scan.ranks))],
            "mean_test_error": [scan.mean_test_error(k) for k in scan.ranks],
            "diffs": {
                str(k): dict(zip(("mean", "std", "sem"), scan.diff_stats(k)))
                for k in scan.ranks[1:]
            },
        }
        Path(json_path).write_text(json.dumps(summary))
