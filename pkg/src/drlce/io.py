"""CSV ingestion/emission and flat JSON run configuration."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .locality import Dataset, InputError

__all__ = ["RunConfig", "load_csv", "write_csv", "write_dataset", "format_number", "load_config"]


def format_number(v) -> str:
    """17 significant digits, enough to round-trip any double."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def load_csv(path, n: int, m: int, header: bool = False, y_bounds=None) -> Dataset:
    """Read ``x_1..x_n, y_1..y_m`` rows into a :class:`Dataset`.

    Rows and columns in error messages are 1-based and count data rows only
    (the header, if any, is not counted). Blank lines are skipped.
    """
    if n < 1 or m < 1:
        raise InputError("n and m must be positive")
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            r = len(rows) + 1
            if len(row) != n + m:
                raise InputError(f"{path}: row {r} has {len(row)} columns, expected {n + m}")
            vals = []
            for c, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"{path}: row {r}, column {c}: cannot parse {cell.strip()!r}") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}: row {r}, column {c}: non-finite value {cell.strip()!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    a = np.array(rows)
    return Dataset(a[:, :n], a[:, n:], y_bounds)


def write_csv(target, header: Sequence[str], rows) -> None:
    """Write a header and rows to a path or an open text stream."""
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_number(v) for v in row])
        return
    with open(target, "w", newline="", encoding="utf-8") as fh:
        write_csv(fh, header, rows)


def write_dataset(path, dataset: Dataset) -> None:
    header = [f"x{j + 1}" for j in range(dataset.n)] + [f"y{j + 1}" for j in range(dataset.m)]
    write_csv(path, header, np.hstack([dataset.xs, dataset.ys]))


@dataclass
class RunConfig:
    """Settings shared by the command-line subcommands.

    ``x0`` is a list of query points, each a list of ``n`` floats. ``grid``
    overrides entries of the default hyperparameter grid by name.
    """

    data: Optional[str] = None
    xdim: int = 1
    ydim: int = 1
    header: bool = False
    x0: List[List[float]] = field(default_factory=list)
    gamma: Optional[float] = None
    gamma_rank: Optional[float] = None
    rho: Optional[float] = None
    rho_factor: Optional[float] = None
    loss: str = "mean"
    tau: float = 0.5
    theta: float = 1.0
    covariate_norm: str = "2"
    method: str = "drce"
    k: Optional[int] = None
    h: Optional[float] = None
    seed: int = 0
    n_samples: int = 100
    runs: int = 100
    window: List[float] = field(default_factory=lambda: [0.28, 0.32])
    grid: dict = field(default_factory=dict)
    out: Optional[str] = None

    def update(self, values: dict, source: str = "config") -> "RunConfig":
        known = {f.name: f for f in fields(self)}
        for key, v in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise InputError(f"{source}: unknown key {key!r}")
            setattr(self, key, v)
        self.validate()
        return self

    def validate(self):
        if self.xdim < 1 or self.ydim < 1:
            raise InputError("xdim and ydim must be positive")
        if self.loss not in ("mean", "quantile", "vecmean2", "vecmeaninf"):
            raise InputError(f"unknown loss {self.loss!r}")
        if self.method not in ("drce", "knn", "nw", "ne", "robustknn"):
            raise InputError(f"unknown method {self.method!r}")
        if not 0 < self.tau < 1:
            raise InputError("tau must lie in (0, 1)")
        if not self.theta > 0:
            raise InputError("theta must be positive")
        if self.gamma is not None and self.gamma_rank is not None:
            raise InputError("give gamma or gamma_rank, not both")
        if self.rho is not None and self.rho_factor is not None:
            raise InputError("give rho or rho_factor, not both")
        self.x0 = [list(np.atleast_1d(np.asarray(p, dtype=float))) for p in self.x0]
        for p in self.x0:
            if len(p) != self.xdim:
                raise InputError(f"query {p} has {len(p)} coordinates, expected {self.xdim}")


def load_config(path) -> dict:
    """Flat JSON object of key/value pairs (see :class:`RunConfig`)."""
    try:
        with open(path, encoding="utf-8") as fh:
            values = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(values, dict):
        raise InputError(f"{path}: expected a JSON object")
    return values
