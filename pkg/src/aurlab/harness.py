"""Experiment matrix: sets x radii x seeds x methods, plus summaries.

Each cell ``(dataset, set, rho, seed)`` perturbs the training design only,
fits AUR and WUR under the configured lambda policies and scores both on the
untouched test split.  Cells are independent; every cell seeds its own RNG
from the master seed and its key, and records are sorted by key before they
are written, so the results file does not depend on execution order.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (CleanDataset, SyntheticSpec, ingest_csv, make_synthetic, preprocess,
                     read_jsonl, split_80_20, write_jsonl)
from .errors import AurlabError, ConfigError, DataError
from .geometry import PenaltyMode, SetKind, UncertaintySet, ridge_lambda
from .regression import CvSpec, Method, RegressionProblem, fit_aur, fit_wur, mse, select_lambda_cv
from .sampling import SamplerConfig, SamplingMethod, direct_sample, hit_and_run, nested_level_sample

log = logging.getLogger(__name__)

DEFAULT_RHOS = (0.001, 0.01, 0.05, 0.1, 0.2, 0.3)
SEED_ENV = "AURLAB_SEED"


class LambdaPolicy(str, enum.Enum):
    THEOREM_PAPER = "theorem_paper"
    THEOREM_DERIVED = "theorem_derived"
    CV = "cv"


_THEOREM_MODES = {LambdaPolicy.THEOREM_PAPER: PenaltyMode.PAPER,
                  LambdaPolicy.THEOREM_DERIVED: PenaltyMode.DERIVED}


@dataclass(frozen=True)
class DatasetSource:
    """Either a CSV file (``csv``/``target``) or a :class:`SyntheticSpec`."""

    csv: str | None = None
    target: str | None = None
    drop_columns: tuple = ()
    synthetic: SyntheticSpec | None = None
    name: str | None = None

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ConfigError("a dataset source needs exactly one of 'csv' or 'synthetic'")
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))

    @property
    def dataset_id(self) -> str:
        if self.name:
            return self.name
        if self.synthetic is not None:
            return self.synthetic.dataset_id
        return Path(self.csv).stem

    def load(self) -> CleanDataset:
        if self.synthetic is not None:
            return make_synthetic(self.synthetic)
        return preprocess(ingest_csv(self.csv, self.target, self.drop_columns))

    def to_dict(self) -> dict:
        if self.synthetic is not None:
            out = {"synthetic": asdict(self.synthetic)}
        else:
            out = {"csv": self.csv, "target": self.target, "drop_columns": list(self.drop_columns)}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, obj) -> "DatasetSource":
        if not isinstance(obj, dict):
            raise ConfigError("dataset source must be a JSON object")
        unknown = set(obj) - {"csv", "target", "drop_columns", "synthetic", "name"}
        if unknown:
            raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
        synth = obj.get("synthetic")
        if synth is not None:
            if not isinstance(synth, dict):
                raise ConfigError("'synthetic' must be a JSON object")
            try:
                synth = SyntheticSpec(**synth)
            except TypeError as exc:
                raise ConfigError(f"bad synthetic spec: {exc}") from exc
        return cls(obj.get("csv"), obj.get("target"), tuple(obj.get("drop_columns", ())), synth,
                   obj.get("name"))


def _as_tuple(value, cast, name):
    if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
        raise ConfigError(f"{name} must be a list")
    try:
        return tuple(cast(v) for v in value)
    except ValueError as exc:
        raise ConfigError(f"bad entry in {name}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of an experiment matrix.

    ``seeds`` and ``nesting`` default by data type: 20 seeds and nesting on
    when every dataset is synthetic, 10 seeds and nesting off otherwise.
    ``lambda_policy`` lists the AUR policies, ``wur_policy`` the WUR ones.
    ``sampler`` is ``"direct"`` (exact, any dimension) or ``"har"``.
    """

    dataset: tuple
    sets: tuple = tuple(k.value for k in SetKind)
    rho_list: tuple = DEFAULT_RHOS
    gamma_ratio: float = 0.8
    seeds: tuple | None = None
    lambda_policy: tuple = (LambdaPolicy.THEOREM_DERIVED.value, LambdaPolicy.CV.value)
    wur_policy: tuple = (LambdaPolicy.CV.value,)
    cv: CvSpec = field(default_factory=CvSpec)
    nesting: bool | None = None
    master_seed: int = 0
    sampler: str = SamplingMethod.DIRECT.value
    burn_in: int = 1000
    thinning: int = 10
    perturb_then_split: bool = False
    record_runtime: bool = False

    def __post_init__(self):
        sources = self.dataset
        if isinstance(sources, (DatasetSource, dict)):
            sources = (sources,)
        sources = tuple(s if isinstance(s, DatasetSource) else DatasetSource.from_dict(s) for s in sources)
        if not sources:
            raise ConfigError("at least one dataset is required")
        ids = [s.dataset_id for s in sources]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"dataset ids must be unique, got {ids}")
        object.__setattr__(self, "dataset", sources)
        try:
            sets = tuple(SetKind(s).value for s in _as_tuple(self.sets, str, "sets"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not sets or len(set(sets)) != len(sets):
            raise ConfigError("sets must be a nonempty list without repeats")
        object.__setattr__(self, "sets", sets)
        rhos = _as_tuple(self.rho_list, float, "rho_list")
        if not rhos or any(not math.isfinite(r) or r < 0 for r in rhos):
            raise ConfigError("rho_list must hold nonnegative finite radii")
        if any(b <= a for a, b in zip(rhos, rhos[1:])):
            raise ConfigError("rho_list must be strictly increasing")
        object.__setattr__(self, "rho_list", rhos)
        g = float(self.gamma_ratio)
        if not 0.5 < g <= 1.0:
            raise ConfigError("gamma_ratio must lie in (0.5, 1]")
        object.__setattr__(self, "gamma_ratio", g)
        all_synth = all(s.synthetic is not None for s in sources)
        seeds = self.seeds
        if seeds is None:
            seeds = 20 if all_synth else 10
        if isinstance(seeds, int):
            seeds = range(seeds)
        seeds = _as_tuple(seeds, int, "seeds")
        if not seeds or len(set(seeds)) != len(seeds) or min(seeds) < 0:
            raise ConfigError("seeds must be distinct nonnegative integers")
        object.__setattr__(self, "seeds", seeds)
        for name in ("lambda_policy", "wur_policy"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = (value,)
            try:
                pols = tuple(LambdaPolicy(p).value for p in value)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if not pols or len(set(pols)) != len(pols):
                raise ConfigError(f"{name} must be a nonempty list without repeats")
            object.__setattr__(self, name, pols)
        cv = self.cv
        if isinstance(cv, dict):
            unknown = set(cv) - {"grid", "folds", "seed"}
            if unknown:
                raise ConfigError(f"unknown cv keys: {sorted(unknown)}")
            cv = CvSpec(**cv)
        object.__setattr__(self, "cv", cv)
        if self.nesting is None:
            object.__setattr__(self, "nesting", all_synth)
        try:
            sampler = SamplingMethod(self.sampler)
        except ValueError:
            raise ConfigError(f"unknown sampler {self.sampler!r}") from None
        if sampler is SamplingMethod.REJECTION:
            raise ConfigError("the harness samples with 'direct' or 'har'")
        object.__setattr__(self, "sampler", sampler.value)
        SamplerConfig(0, self.burn_in, self.thinning)
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ConfigError("master_seed must be a nonnegative integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def to_dict(self) -> dict:
        return {
            "dataset": [s.to_dict() for s in self.dataset],
            "sets": list(self.sets),
            "rho_list": list(self.rho_list),
            "gamma_ratio": self.gamma_ratio,
            "seeds": list(self.seeds),
            "lambda_policy": list(self.lambda_policy),
            "wur_policy": list(self.wur_policy),
            "cv": {"grid": list(self.cv.grid), "folds": self.cv.folds, "seed": self.cv.seed},
            "nesting": self.nesting,
            "master_seed": self.master_seed,
            "sampler": self.sampler,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "perturb_then_split": self.perturb_then_split,
            "record_runtime": self.record_runtime,
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, obj) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in obj:
            raise ConfigError("config needs a 'dataset' entry")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)

    def with_master_seed(self, seed: int) -> "ExperimentConfig":
        obj = self.to_dict()
        obj["master_seed"] = seed
        return ExperimentConfig.from_dict(obj)


def apply_seed_override(config: ExperimentConfig, env=None) -> ExperimentConfig:
    """Replace the master seed with ``$AURLAB_SEED`` when it is set."""
    env = os.environ if env is None else env
    value = env.get(SEED_ENV)
    if value is None or value == "":
        return config
    try:
        seed = int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {value!r}") from None
    return config.with_master_seed(seed)


@dataclass(frozen=True)
class ExperimentRecord:
    dataset: str
    set: str
    rho: float
    gamma: float | None
    seed: int
    method: str
    lambda_policy: str
    lambda_used: float
    train_mse: float
    test_mse: float
    n_train: int
    k: int
    runtime_ms: float | None = None

    @property
    def key(self) -> tuple:
        return (self.dataset, self.set, self.rho, self.seed, self.method, self.lambda_policy)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj) -> "ExperimentRecord":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise DataError(f"malformed experiment record: {exc}") from exc


def cell_seed(master_seed: int, dataset: str, kind: str, rho: float, seed: int) -> int:
    """64-bit seed for one cell, stable across processes and Python versions."""
    key = f"{dataset}|{kind}|{rho!r}|{seed}".encode()
    ss = np.random.SeedSequence([master_seed, zlib.crc32(key), seed])
    hi, lo = ss.generate_state(2)
    return (int(hi) << 32) | int(lo)


def _level_set(kind: str, rho: float, gamma_ratio: float, n: int, k: int):
    if rho == 0.0:
        return None
    gamma = gamma_ratio * rho if kind == SetKind.BUDGET.value else None
    return UncertaintySet(kind, rho, n, k, gamma)


def _draw_delta(cfg: ExperimentConfig, kind: str, rho_index: int, n: int, k: int, seed: int):
    rho = cfg.rho_list[rho_index]
    uset = _level_set(kind, rho, cfg.gamma_ratio, n, k)
    if uset is None:
        return None, np.zeros((n, k))
    inner = None
    if cfg.nesting and rho_index > 0:
        inner = _level_set(kind, cfg.rho_list[rho_index - 1], cfg.gamma_ratio, n, k)
    scfg = SamplerConfig(seed, cfg.burn_in, cfg.thinning)
    if inner is not None:
        batch = nested_level_sample(inner, uset, scfg, 1, method=cfg.sampler)
    elif cfg.sampler == SamplingMethod.DIRECT.value:
        batch = direct_sample(uset, seed, 1)
    else:
        batch = hit_and_run(uset, scfg, 1)
    return uset, np.array(batch.samples[0])


def _choose_lambda(policy: str, method: Method, uset, n_train: int, k: int,
                   problem: RegressionProblem, cv: CvSpec) -> float:
    policy = LambdaPolicy(policy)
    if policy is LambdaPolicy.CV:
        return select_lambda_cv(problem, method, cv)[0]
    if uset is None:
        return 0.0
    return ridge_lambda(uset.with_shape(n_train, k), _THEOREM_MODES[policy])


def _run_cell(job):
    """Run every fit of one cell; returns ``(records, error_message)``."""
    cfg, dataset_id, kind, rho_index, seed, train, test = job
    rho = cfg.rho_list[rho_index]
    try:
        s = cell_seed(cfg.master_seed, dataset_id, kind, rho, seed)
        Xtr, ytr = train
        Xte, yte = test
        n_train, k = Xtr.shape
        if cfg.perturb_then_split:
            X_all = np.vstack([Xtr, Xte])
            uset, delta = _draw_delta(cfg, kind, rho_index, X_all.shape[0], k, s)
            Xtr = Xtr + delta[:n_train]
            Xte = Xte + delta[n_train:]
        else:
            uset, delta = _draw_delta(cfg, kind, rho_index, n_train, k, s)
            Xtr = Xtr + delta
        problem = RegressionProblem(Xtr, ytr)
        holdout = RegressionProblem(Xte, yte)
        gamma = uset.gamma if uset is not None else None
        records = []
        plan = [(Method.AUR, p, fit_aur) for p in cfg.lambda_policy]
        plan += [(Method.WUR, p, fit_wur) for p in cfg.wur_policy]
        for method, policy, fitter in plan:
            t0 = time.perf_counter()
            lam = _choose_lambda(policy, method, uset, n_train, k, problem, cfg.cv)
            beta = fitter(problem, lam).beta
            elapsed = (time.perf_counter() - t0) * 1e3
            records.append(ExperimentRecord(
                dataset_id, kind, rho, gamma, seed, method.value, policy, float(lam),
                mse(problem, beta), mse(holdout, beta), n_train, k,
                elapsed if cfg.record_runtime else None,
            ))
        return records, None
    except (AurlabError, np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
        return [], f"{dataset_id}|{kind}|{rho!r}|{seed}: {type(exc).__name__}: {exc}"


@dataclass
class ExperimentResult:
    records: list
    header: dict
    failures: list


def run_experiment(config: ExperimentConfig, out_path=None, workers: int = 1,
                   append: bool = False) -> ExperimentResult:
    """Run the whole matrix; optionally write a JSON-lines results file.

    The file holds one header object (config, version, split seed, failed
    cells) followed by the records in key order.  A failing cell is logged
    and skipped; the rest of the matrix still runs.
    """
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    jobs = []
    split_info = {}
    for source in config.dataset:
        data = source.load()
        train, test = split_80_20(data, config.master_seed)
        split_info[source.dataset_id] = {"n": data.n, "k": data.k, "n_train": train.n, "n_test": test.n}
        for kind in config.sets:
            for seed in config.seeds:
                for i in range(len(config.rho_list)):
                    jobs.append((config, source.dataset_id, kind, i, seed, (train.X, train.y), (test.X, test.y)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_run_cell(job) for job in jobs]
    records, failures = [], []
    for recs, err in outcomes:
        records.extend(recs)
        if err is not None:
            log.warning("cell failed: %s", err)
            failures.append(err)
    records.sort(key=lambda r: r.key)
    failures.sort()
    header = {
        "aurlab_version": __version__,
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "split": {"policy": "one 80/20 split per dataset, seeded by master_seed, shared by all cells",
                  "seed": config.master_seed, "datasets": split_info},
        "failed_cells": failures,
    }
    if out_path is not None:
        write_jsonl(out_path, [{"header": header}] + [r.to_dict() for r in records], append=append)
    return ExperimentResult(records, header, failures)


def load_records(path) -> list:
    """Records from a results file, skipping header objects."""
    return [ExperimentRecord.from_dict(obj) for obj in read_jsonl(path) if "header" not in obj]


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class SummaryRow:
    set: str
    rho: float
    aur_policy: str
    wur_policy: str
    mean_improvement: float
    stderr: float
    count: int
    lambda_distinct_count: int
    wur_lambda_distinct_count: int


def improvement_percent(mse_wur: float, mse_aur: float) -> float:
    if mse_wur == mse_aur:
        return 0.0
    if mse_wur == 0.0:
        raise DataError("WUR test MSE is zero; improvement percentage undefined")
    return 100.0 * (mse_wur - mse_aur) / mse_wur


def _distinct_count(values_by_dataset: dict) -> int:
    return max(len(set(v)) for v in values_by_dataset.values())


def summarize(records) -> list:
    """Mean AUR-over-WUR test-MSE improvement per ``(set, rho, policies)``.

    Every AUR record is paired with the WUR record(s) of the same dataset,
    set, radius and seed.  ``lambda_distinct_count`` is the number of
    distinct lambdas chosen across seeds (the largest over datasets).
    """
    records = list(records)
    if not records:
        raise DataError("no records to summarize")
    aur, wur = {}, {}
    seen = set()
    for r in records:
        if r.key in seen:
            raise DataError(f"duplicate record {r.key}")
        seen.add(r.key)
        cell = (r.dataset, r.set, r.rho, r.seed)
        if r.method == Method.AUR.value:
            aur.setdefault(cell, {})[r.lambda_policy] = r
        elif r.method == Method.WUR.value:
            wur.setdefault(cell, {})[r.lambda_policy] = r
        else:
            raise DataError(f"unexpected method {r.method!r} in record {r.key}")
    unmatched = sorted(set(aur) ^ set(wur))
    if unmatched:
        listing = ", ".join("|".join(str(p) for p in c) for c in unmatched[:10])
        raise DataError(f"{len(unmatched)} cells lack an AUR/WUR pair: {listing}")
    groups = {}
    for cell in sorted(aur):
        dataset, kind, rho, seed = cell
        for ap, ar in aur[cell].items():
            for wp, wr in wur[cell].items():
                g = groups.setdefault((kind, rho, ap, wp), {"imp": [], "al": {}, "wl": {}})
                g["imp"].append(improvement_percent(wr.test_mse, ar.test_mse))
                g["al"].setdefault(dataset, []).append(ar.lambda_used)
                g["wl"].setdefault(dataset, []).append(wr.lambda_used)
    rows = []
    for key in sorted(groups):
        g = groups[key]
        imp = np.asarray(g["imp"])
        se = float(imp.std(ddof=1) / math.sqrt(imp.size)) if imp.size > 1 else 0.0
        rows.append(SummaryRow(key[0], key[1], key[2], key[3], float(imp.mean()), se, int(imp.size),
                               _distinct_count(g["al"]), _distinct_count(g["wl"])))
    return rows


def lambda_stability_table(records) -> list:
    """Distinct lambdas over seeds per ``(dataset, set, rho, method, policy)``."""
    groups = {}
    for r in records:
        groups.setdefault((r.dataset, r.set, r.rho, r.method, r.lambda_policy), []).append(r.lambda_used)
    return [
        {"dataset": k[0], "set": k[1], "rho": k[2], "method": k[3], "lambda_policy": k[4],
         "seeds": len(v), "distinct_lambdas": len(set(v))}
        for k, v in sorted(groups.items())
    ]


PLOT_COLUMNS = ("set", "rho", "aur_policy", "wur_policy", "mean_improvement", "stderr", "n",
                "lambda_distinct_count", "wur_lambda_distinct_count")


def emit_plot_data(summary, path) -> Path:
    """Tidy CSV of a summary; floats are written with ``repr`` so they round-trip."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PLOT_COLUMNS)
            for row in summary:
                writer.writerow([row.set, repr(row.rho), row.aur_policy, row.wur_policy,
                                 repr(row.mean_improvement), repr(row.stderr), row.count,
                                 row.lambda_distinct_count, row.wur_lambda_distinct_count])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def read_plot_data(path) -> list:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != PLOT_COLUMNS:
                raise DataError(f"{path} does not have the plot-data header")
            return [SummaryRow(r["set"], float(r["rho"]), r["aur_policy"], r["wur_policy"],
                               float(r["mean_improvement"]), float(r["stderr"]), int(r["n"]),
                               int(r["lambda_distinct_count"]), int(r["wur_lambda_distinct_count"]))
                    for r in reader]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def write_table_csv(rows, path) -> Path:
    path = Path(path)
    cols = list(rows[0]) if rows else ["dataset", "set", "rho", "method", "lambda_policy", "seeds",
                                       "distinct_lambdas"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path
