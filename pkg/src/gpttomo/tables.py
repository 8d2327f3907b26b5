"""Frequency tables: the observed outcome-0 statistics of a prepare-and-measure run.

A single table holds the m x n matrix of relative frequencies for one waiting
time tau, together with the shot count, the seed it was drawn from and the
per-cell binomial variance estimate. Stacked tables concatenate the blocks for
several waiting times that share the same measurements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FrequencyTable",
    "StackedFrequencyTable",
    "binomial_variance",
    "save_table",
    "load_table",
    "load_run_directory",
]


def binomial_variance(entries: np.ndarray, shots: int) -> np.ndarray:
    """Per-cell variance estimate F(1-F)/N, floored at 1/(4 N^2).

    The floor replaces the zero variance of cells with F in {0, 1}, which
    would otherwise get infinite weight in the chi-squared objective; its
    value is one quarter-shot of binomial variance.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    entries = np.asarray(entries, dtype=float)
    floor = 1.0 / (4.0 * shots * shots)
    return np.maximum(entries * (1.0 - entries) / shots, floor)


def _check_entries(entries: np.ndarray) -> np.ndarray:
    entries = np.asarray(entries, dtype=float)
    if entries.ndim != 2 or entries.size == 0:
        raise ValueError("entries must be a nonempty 2-D array")
    if np.any(entries < 0.0) or np.any(entries > 1.0):
        raise ValueError("frequencies must lie in [0, 1]")
    return entries


@dataclass(frozen=True)
class FrequencyTable:
    """Outcome-0 frequencies for one waiting time.

    entries[i, j] is the observed frequency for preparation i and measurement
    j; variance holds the floored binomial estimate and is recomputed from
    (entries, shots) when not supplied.
    """

    entries: np.ndarray
    shots: int
    tau: float
    seed: int
    variance: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        entries = _check_entries(self.entries)
        object.__setattr__(self, "entries", entries)
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.variance is None:
            var = binomial_variance(entries, self.shots)
        else:
            var = np.asarray(self.variance, dtype=float)
            if var.shape != entries.shape:
                raise ValueError("variance shape does not match entries")
            if np.any(var <= 0.0):
                raise ValueError("variance entries must be strictly positive")
        object.__setattr__(self, "variance", var)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class StackedFrequencyTable:
    """Row-wise concatenation of per-tau tables sharing the measurement list.

    Block t occupies rows [t*block_rows, (t+1)*block_rows) and keeps the tau
    label taus[t]; seeds holds the per-block table seeds in the same order.
    """

    entries: np.ndarray
    shots: int
    taus: tuple[float, ...]
    block_rows: int
    seeds: tuple[int, ...]
    variance: np.ndarray

    def __post_init__(self):
        entries = _check_entries(self.entries)
        object.__setattr__(self, "entries", entries)
        if entries.shape[0] != self.block_rows * len(self.taus):
            raise ValueError("row count does not match block_rows * len(taus)")
        var = np.asarray(self.variance, dtype=float)
        if var.shape != entries.shape:
            raise ValueError("variance shape does not match entries")
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def n_blocks(self) -> int:
        return len(self.taus)

    def block_slice(self, t: int) -> slice:
        if not 0 <= t < self.n_blocks:
            raise ValueError(f"block index {t} out of range")
        return slice(t * self.block_rows, (t + 1) * self.block_rows)

    def block(self, t: int) -> FrequencyTable:
        """Return block t as a standalone table (bitwise round-trip)."""
        sl = self.block_slice(t)
        return FrequencyTable(
            entries=self.entries[sl].copy(),
            shots=self.shots,
            tau=self.taus[t],
            seed=self.seeds[t],
            variance=self.variance[sl].copy(),
        )

    @property
    def row_taus(self) -> np.ndarray:
        """Tau label of every row, length block_rows * n_blocks."""
        return np.repeat(np.asarray(self.taus, dtype=float), self.block_rows)


def save_table(table: FrequencyTable, path: str | Path) -> None:
    """Write one table as a JSON document with the run-file schema."""
    doc = {
        "m": table.m,
        "n": table.n,
        "shots": int(table.shots),
        "tau_us": float(table.tau),
        "seed": int(table.seed),
        "rows": [[float(x) for x in row] for row in table.entries],
    }
    Path(path).write_text(json.dumps(doc))


def load_table(path: str | Path) -> FrequencyTable:
    doc = json.loads(Path(path).read_text())
    entries = np.asarray(doc["rows"], dtype=float)
    if entries.shape != (doc["m"], doc["n"]):
        raise ValueError(f"{path}: rows do not match declared m x n")
    return FrequencyTable(
        entries=entries,
        shots=int(doc["shots"]),
        tau=float(doc["tau_us"]),
        seed=int(doc["seed"]),
    )


def table_filename(rep: int, tau_index: int) -> str:
    return f"freqtable-r{rep:03d}-t{tau_index:02d}.json"


def load_run_directory(path: str | Path) -> dict[int, list[FrequencyTable]]:
    """Load a directory of table files, grouped by repetition index.

    Files follow the ``freqtable-r###-t##.json`` convention written by the
    simulate command; within each repetition, tables are ordered by their tau
    index. Unrecognized file names are ignored.
    """
    runs: dict[int, list[tuple[int, FrequencyTable]]] = {}
    for f in sorted(Path(path).glob("freqtable-r*-t*.json")):
        stem = f.stem  # freqtable-r###-t##
        try:
            rep = int(stem.split("-r")[1].split("-t")[0])
            tau_idx = int(stem.split("-t")[1])
        except (IndexError, ValueError):
            continue
        runs.setdefault(rep, []).append((tau_idx, load_table(f)))
    if not runs:
        raise FileNotFoundError(f"no frequency-table files found in {path}")
    return {rep: [t for _, t in sorted(items)] for rep, items in sorted(runs.items())}
