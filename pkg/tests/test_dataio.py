import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aurlab.dataio import (
    CleanDataset,
    RawTable,
    SyntheticSpec,
    ingest_csv,
    make_synthetic,
    preprocess,
    read_jsonl,
    split_80_20,
    write_jsonl,
)
from aurlab.errors import ConfigError, DataError


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_marks_missing_cells(tmp_path):
    path = write(tmp_path, "a,b,y\n1,NA,3\n2,,4\nx,5,inf\n")
    table = ingest_csv(path, "y")
    assert table.columns == ("a", "b", "y")
    assert table.missing_count == 4
    assert table.cells[0, 0] == 1.0


def test_ingest_defaults_target_to_last_and_drops_columns(tmp_path):
    path = write(tmp_path, "id,a,y\n1,2,3\n2,3,4\n")
    table = ingest_csv(path, drop_columns=["id"])
    assert table.target == "y" and table.columns == ("a", "y")


@pytest.mark.parametrize("text", ["", "a,y\n", "a,y\n1,2,3\n", "a,a\n1,2\n"])
def test_ingest_rejects_malformed(tmp_path, text):
    with pytest.raises(DataError):
        ingest_csv(write(tmp_path, text))


def test_ingest_errors(tmp_path):
    path = write(tmp_path, "a,y\n1,2\n")
    with pytest.raises(DataError):
        ingest_csv(path, "z")
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "missing.csv")
    with pytest.raises(DataError):
        ingest_csv(path, drop_columns=["q"])
    with pytest.raises(DataError):
        ingest_csv(path, "y", drop_columns=["y"])


def test_preprocess_order_of_operations():
    nan = math.nan
    # column b: 2/5 missing (> 20%) -> dropped before rows are examined
    cells = np.array([
        [1.0, nan, 10.0, 0.0],
        [2.0, 1.0, 10.0, 1.0],
        [nan, nan, 10.0, 2.0],
        [4.0, 1.0, 10.0, 3.0],
        [5.0, 1.0, 10.0, 4.0],
    ])
    clean = preprocess(RawTable(("a", "b", "c", "y"), cells, "y"))
    assert clean.feature_names == ("a", "c")
    assert clean.provenance["columns_dropped"] == ["b"]
    assert clean.provenance["rows_dropped"] == [2]
    assert np.allclose(clean.X[:, 0], [0.0, 0.25, 0.75, 1.0])
    assert np.all(clean.X[:, 1] == 0.5)  # constant column
    assert clean.provenance["constant_columns"] == ["c"]
    assert np.allclose(clean.y, [0, 0.25, 0.75, 1.0])
    assert np.allclose(clean.unscale_y(), [0, 1, 3, 4])
    assert np.allclose(clean.unscale_X()[:, 0], [1, 2, 4, 5])


def test_exactly_twenty_percent_missing_is_kept():
    cells = np.array([[1.0, 0], [math.nan, 1], [3, 2], [4, 3], [5, 4]])
    clean = preprocess(RawTable(("a", "y"), cells, "y"))
    assert clean.feature_names == ("a",) and clean.n == 4


def test_preprocess_all_rows_dropped():
    cells = np.array([[1.0, math.nan], [2.0, math.nan]])
    with pytest.raises(DataError):
        preprocess(RawTable(("a", "y"), cells, "y"))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 30), k=st.integers(1, 5))
def test_preprocess_idempotent(seed, n, k):
    rng = np.random.default_rng(seed)
    cells = rng.standard_normal((n, k + 1)) * rng.uniform(0.1, 100, size=k + 1)
    cells[rng.random((n, k + 1)) < 0.05] = math.nan
    names = tuple(f"c{j}" for j in range(k)) + ("t",)
    try:
        once = preprocess(RawTable(names, cells, "t"))
    except DataError:
        return
    twice = preprocess(once.to_raw_table())
    assert np.array_equal(once.X, twice.X) and np.array_equal(once.y, twice.y)
    assert twice.provenance["rows_dropped"] == [] and twice.provenance["columns_dropped"] == []
    assert once.X.min() >= 0.0 and once.X.max() <= 1.0


def test_synthetic_recovers_weights_when_noiseless():
    data = make_synthetic(SyntheticSpec(n_samples=50, n_informative=3, n_features=5, noise_sd=0.0, seed=4))
    X, y = data.unscale_X(), data.unscale_y()
    w = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(w, data.provenance["weights"], atol=1e-9)
    assert np.all(np.array(data.provenance["weights"][3:]) == 0.0)


def test_synthetic_is_seeded():
    a = make_synthetic(SyntheticSpec(seed=1))
    b = make_synthetic(SyntheticSpec(seed=1))
    assert np.array_equal(a.X, b.X) and a.X.shape == (300, 5)


@pytest.mark.parametrize("bad", [dict(n_samples=0), dict(n_informative=6), dict(noise_sd=-1.0),
                                 dict(n_features=2.5)])
def test_synthetic_spec_validation(bad):
    with pytest.raises(ConfigError):
        SyntheticSpec(**bad)


@pytest.mark.parametrize("n,n_train", [(5, 4), (10, 8), (11, 8), (300, 240), (999, 799)])
def test_split_sizes(n, n_train):
    data = make_synthetic(SyntheticSpec(n_samples=n, seed=0))
    train, test = split_80_20(data, seed=3)
    assert (train.n, test.n) == (n_train, n - n_train)
    rows = train.provenance["rows"] + test.provenance["rows"]
    assert sorted(rows) == list(range(n))


def test_split_too_small_and_seeded():
    with pytest.raises(DataError):
        split_80_20(make_synthetic(SyntheticSpec(n_samples=4)), 0)
    data = make_synthetic(SyntheticSpec(n_samples=40))
    assert split_80_20(data, 1)[0].provenance["rows"] == split_80_20(data, 1)[0].provenance["rows"]
    assert split_80_20(data, 1)[0].provenance["rows"] != split_80_20(data, 2)[0].provenance["rows"]


def test_clean_dataset_write_round_trip(tmp_path):
    data = make_synthetic(SyntheticSpec(n_samples=20, seed=2))
    sidecar = data.write(tmp_path / "clean.csv")
    back = ingest_csv(tmp_path / "clean.csv", "y")
    assert np.array_equal(back.cells[:, :-1], data.X) and np.array_equal(back.cells[:, -1], data.y)
    prov = json.loads(sidecar.read_text())
    assert prov["weights"] == data.provenance["weights"]


def test_jsonl_write_append_read(tmp_path):
    path = tmp_path / "r.jsonl"
    write_jsonl(path, [{"a": 1}, {"b": 2.5}])
    write_jsonl(path, [{"c": None}], append=True)
    assert read_jsonl(path) == [{"a": 1}, {"b": 2.5}, {"c": None}]
    write_jsonl(path, [{"z": 0}])
    assert read_jsonl(path) == [{"z": 0}]
    (tmp_path / "bad.jsonl").write_text("{oops\n")
    with pytest.raises(DataError):
        read_jsonl(tmp_path / "bad.jsonl")
