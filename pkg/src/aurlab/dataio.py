"""Dataset ingestion, cleaning, synthetic generation, splitting and result files."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

MAX_MISSING_FRACTION = 0.2


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV: ``cells[i, j]`` is NaN where the value is missing."""

    columns: tuple
    cells: np.ndarray
    target: str

    def __post_init__(self):
        if len(self.columns) < 2:
            raise DataError("a table needs at least one feature column and a target")
        if self.target not in self.columns:
            raise DataError(f"target column {self.target!r} not found")
        if self.cells.ndim != 2 or self.cells.shape[1] != len(self.columns):
            raise DataError("cell matrix does not match the column list")

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def missing_count(self) -> int:
        return int(np.isnan(self.cells).sum())


@dataclass(frozen=True)
class CleanDataset:
    """Min-max scaled features ``X`` and target ``y`` with a record of every change."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    target_name: str
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def unscale_X(self, X=None) -> np.ndarray:
        X = self.X if X is None else np.asarray(X, dtype=float)
        lo = np.array([self.provenance["bounds"][c][0] for c in self.feature_names])
        hi = np.array([self.provenance["bounds"][c][1] for c in self.feature_names])
        return lo + X * (hi - lo)

    def unscale_y(self, y=None) -> np.ndarray:
        y = self.y if y is None else np.asarray(y, dtype=float)
        lo, hi = self.provenance["bounds"][self.target_name]
        return lo + y * (hi - lo)

    def subset(self, rows) -> "CleanDataset":
        rows = np.asarray(rows)
        prov = dict(self.provenance)
        prov["rows"] = [int(r) for r in rows]
        return CleanDataset(self.X[rows], self.y[rows], self.feature_names, self.target_name, prov)

    def to_raw_table(self) -> RawTable:
        cells = np.column_stack([self.X, self.y])
        return RawTable(tuple(self.feature_names) + (self.target_name,), cells, self.target_name)

    def write(self, path) -> Path:
        """Write ``path`` as CSV and ``<path>.provenance.json`` beside it."""
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(self.feature_names) + [self.target_name])
            for xrow, yv in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in xrow] + [repr(float(yv))])
        sidecar = path.with_name(path.name + ".provenance.json")
        sidecar.write_text(json.dumps(self.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return sidecar


def _parse_cell(token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def ingest_csv(path, target_name: str | None = None, drop_columns=()) -> RawTable:
    """Read a header-row CSV; blank or non-numeric cells become missing.

    ``target_name`` defaults to the last column.  ``drop_columns`` removes
    hand-picked uninformative columns before anything else.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise DataError(f"{path} is not valid UTF-8: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path} has duplicate column names")
    body = rows[1:]
    if not body:
        raise DataError(f"{path} has a header but zero data rows")
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
    target_name = header[-1] if target_name is None else target_name
    if target_name not in header:
        raise DataError(f"target column {target_name!r} not in {path}")
    unknown = set(drop_columns) - set(header)
    if unknown:
        raise DataError(f"cannot drop unknown columns {sorted(unknown)}")
    if target_name in drop_columns:
        raise DataError("the target column cannot be dropped")
    keep = [j for j, h in enumerate(header) if h not in set(drop_columns)]
    cells = np.array([[_parse_cell(row[j]) for j in keep] for row in body], dtype=float)
    return RawTable(tuple(header[j] for j in keep), cells, target_name)


def _minmax(col: np.ndarray):
    lo, hi = float(col.min()), float(col.max())
    if hi == lo:
        return np.full_like(col, 0.5), lo, hi
    return (col - lo) / (hi - lo), lo, hi


def preprocess(table: RawTable) -> CleanDataset:
    """Drop sparse columns, then incomplete rows, then min-max scale everything.

    A feature column is dropped when more than 20% of its cells are missing.
    Constant columns map to 0.5.
    """
    cells = table.cells
    tj = table.columns.index(table.target)
    features = [j for j in range(len(table.columns)) if j != tj]
    missing = np.isnan(cells).mean(axis=0)
    kept = [j for j in features if missing[j] <= MAX_MISSING_FRACTION]
    dropped_cols = [table.columns[j] for j in features if missing[j] > MAX_MISSING_FRACTION]
    if not kept:
        raise DataError("every feature column exceeds the missing-value threshold")
    sub = cells[:, kept + [tj]]
    complete = ~np.isnan(sub).any(axis=1)
    if not complete.any():
        raise DataError("no rows left after dropping incomplete samples")
    sub = sub[complete]
    scaled = np.empty_like(sub)
    names = [table.columns[j] for j in kept] + [table.target]
    bounds = {}
    constant = []
    for c, name in enumerate(names):
        scaled[:, c], lo, hi = _minmax(sub[:, c])
        bounds[name] = [lo, hi]
        if lo == hi:
            constant.append(name)
    provenance = {
        "n_rows_in": table.n_rows,
        "rows_dropped": [int(i) for i in np.flatnonzero(~complete)],
        "columns_dropped": dropped_cols,
        "bounds": bounds,
        "constant_columns": constant,
    }
    return CleanDataset(scaled[:, :-1], scaled[:, -1], tuple(names[:-1]), table.target, provenance)


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 300
    n_informative: int = 5
    n_features: int = 5
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_samples", "n_informative", "n_features"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.n_informative > self.n_features:
            raise ConfigError("n_informative cannot exceed n_features")
        if not (self.noise_sd >= 0 and math.isfinite(self.noise_sd)):
            raise ConfigError("noise_sd must be nonnegative")

    @property
    def dataset_id(self) -> str:
        return (f"synthetic-n{self.n_samples}-k{self.n_features}-i{self.n_informative}"
                f"-s{self.seed}")


def make_synthetic(spec: SyntheticSpec) -> CleanDataset:
    """Gaussian features, Gaussian weights on the first ``n_informative``
    columns, additive Gaussian noise; scaled like real data.

    The unscaled weights are kept in ``provenance["weights"]``.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n_samples, spec.n_features))
    w = np.zeros(spec.n_features)
    w[: spec.n_informative] = rng.standard_normal(spec.n_informative)
    y = X @ w + spec.noise_sd * rng.standard_normal(spec.n_samples)
    names = tuple(f"x{j}" for j in range(spec.n_features))
    table = RawTable(names + ("y",), np.column_stack([X, y]), "y")
    clean = preprocess(table)
    clean.provenance["weights"] = [float(v) for v in w]
    clean.provenance["synthetic"] = {
        "n_samples": spec.n_samples, "n_informative": spec.n_informative,
        "n_features": spec.n_features, "noise_sd": spec.noise_sd, "seed": spec.seed,
    }
    return clean


def split_80_20(dataset: CleanDataset, seed: int):
    """Seeded permutation; the first ``floor(0.8 n)`` rows train, the rest test."""
    n = dataset.n
    if n < 5:
        raise DataError(f"an 80/20 split needs at least 5 rows, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = (4 * n) // 5
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


# ---------------------------------------------------------------------------
# JSON-lines results


def write_jsonl(path, objects, append: bool = False) -> None:
    """Write objects one per line; a fresh file is swapped in atomically."""
    path = Path(path)
    payload = "".join(json.dumps(obj, sort_keys=True) + "\n" for obj in objects)
    if append:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        return
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_jsonl(path) -> list:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{i}: invalid JSON ({exc})") from exc
    return out
