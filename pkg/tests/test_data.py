import numpy as np
import pytest

from ipdmatch.data import (
    Covariate,
    CovariateSchema,
    CovariateTable,
    encode,
    observed_means,
    read_csv,
)
from ipdmatch.errors import MissingValueError, SingleStudyError, UnknownLevelError


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


SIMPLE = CovariateSchema((Covariate("age", "continuous"),))


def test_minimal_roundtrip(tmp_path):
    path = write(tmp_path, "study,age\nA,1.0\nA,2.0\nB,3.0\nB,4.0\n")
    t = read_csv(path, SIMPLE, study_col="study")
    assert (t.n0, t.n1) == (2, 2)
    assert t.study_labels == ("A", "B")
    assert np.allclose(t.columns["age"], [1.0, 2.0, 3.0, 4.0])
    assert t.response is None


def test_first_seen_label_maps_to_study0_unless_overridden(tmp_path):
    path = write(tmp_path, "study,age\nB,1\nA,2\nB,3\n")
    t = read_csv(path, SIMPLE, study_col="study")
    assert t.study_labels == ("B", "A")
    t2 = read_csv(path, SIMPLE, study_col="study", study0="A")
    assert t2.study_labels == ("A", "B")
    assert list(t2.study) == [1, 0, 1]


def test_missing_value_names_location(tmp_path):
    path = write(tmp_path, "study,age\nA,1.0\nA,\nB,3.0\n")
    with pytest.raises(MissingValueError) as err:
        read_csv(path, SIMPLE, study_col="study")
    assert err.value.row == 2
    assert err.value.col == "age"


def test_single_study_rejected(tmp_path):
    path = write(tmp_path, "study,age\nA,1.0\nA,2.0\n")
    with pytest.raises(SingleStudyError):
        read_csv(path, SIMPLE, study_col="study")


def test_unknown_level_names_location(tmp_path):
    schema = CovariateSchema((Covariate("stage", "categorical", ("I", "II")),))
    path = write(tmp_path, "study,stage\nA,I\nB,III\n")
    with pytest.raises(UnknownLevelError) as err:
        read_csv(path, schema, study_col="study")
    assert (err.value.row, err.value.col, err.value.value) == (2, "stage", "III")


def test_binary_values_validated(tmp_path):
    schema = CovariateSchema((Covariate("flag", "binary"),))
    path = write(tmp_path, "study,flag\nA,1\nB,2\n")
    with pytest.raises(UnknownLevelError):
        read_csv(path, schema, study_col="study")


def test_response_column(tmp_path):
    path = write(tmp_path, "study,age,y\nA,1,0.5\nB,2,1.5\n")
    t = read_csv(path, SIMPLE, study_col="study", response_col="y")
    assert np.allclose(t.response, [0.5, 1.5])


def test_one_hot_definition():
    schema = CovariateSchema((Covariate("g", "categorical", ("A", "B", "C")),))
    t = CovariateTable(
        schema=schema,
        study=np.array([0, 1]),
        columns={"g": np.array([1, 2])},  # B, C
    )
    dm = encode(t)
    assert dm.column_names == ("g=A", "g=B", "g=C")
    assert np.array_equal(dm.X0, [[0.0, 1.0, 0.0]])
    assert np.array_equal(dm.X1, [[0.0, 0.0, 1.0]])


def test_binary_and_continuous_pass_through():
    schema = CovariateSchema(
        (Covariate("b", "binary"), Covariate("x", "continuous"))
    )
    t = CovariateTable(
        schema=schema,
        study=np.array([0, 1]),
        columns={"b": np.array([1, 0]), "x": np.array([2.5, -1.0])},
    )
    dm = encode(t)
    assert dm.n_cols == 2
    assert np.array_equal(dm.X0, [[1.0, 2.5]])
    assert np.array_equal(dm.X1, [[0.0, -1.0]])


def simulation_like_schema() -> CovariateSchema:
    """5 continuous + 7 binary + factors with 4/3/5 levels."""
    covs = []
    for i in range(5):
        covs.append(Covariate(f"c{i}", "continuous"))
    for i in range(7):
        covs.append(Covariate(f"b{i}", "binary"))
    for name, k in (("f4", 4), ("f3", 3), ("f5", 5)):
        covs.append(Covariate(name, "categorical", tuple("ABCDE"[:k])))
    return CovariateSchema(tuple(covs))


def test_simulation_schema_gives_24_columns():
    schema = simulation_like_schema()
    rng = np.random.default_rng(0)
    n = 10
    cols = {}
    for cov in schema:
        if cov.kind == "continuous":
            cols[cov.name] = rng.normal(size=n)
        elif cov.kind == "binary":
            cols[cov.name] = rng.integers(0, 2, size=n).astype(np.int16)
        else:
            cols[cov.name] = rng.integers(0, len(cov.levels), size=n).astype(np.int16)
    t = CovariateTable(
        schema=schema, study=np.array([0] * 5 + [1] * 5, dtype=np.int8), columns=cols
    )
    assert encode(t).n_cols == 5 + 7 + (4 + 3 + 5)


def test_observed_means_arithmetic():
    t = CovariateTable(
        schema=SIMPLE,
        study=np.array([0, 0, 1]),
        columns={"age": np.array([0.0, 2.0, 5.0])},
    )
    _, m0, m1 = observed_means(t)
    assert m0[0] == 1.0
    assert m1[0] == 5.0


def test_observed_means_binary_proportion():
    schema = CovariateSchema((Covariate("b", "binary"),))
    t = CovariateTable(
        schema=schema,
        study=np.array([0, 0, 0, 0, 1]),
        columns={"b": np.array([1, 1, 0, 0, 1])},
    )
    _, m0, _ = observed_means(t)
    assert m0[0] == 0.5


def test_pooled_means_reproduce_published_example():
    # Per-study means (-0.18, -0.12) and (3.08, -0.05) with equal sizes
    # pool to (1.45, -0.085).
    schema = CovariateSchema(
        (Covariate("x1", "continuous"), Covariate("x2", "continuous"))
    )
    n = 4
    x1 = np.concatenate([np.full(n, -0.18), np.full(n, 3.08)])
    x2 = np.concatenate([np.full(n, -0.12), np.full(n, -0.05)])
    t = CovariateTable(
        schema=schema,
        study=np.array([0] * n + [1] * n),
        columns={"x1": x1, "x2": x2},
    )
    _, m0, m1 = observed_means(t)
    pooled = (m0 * n + m1 * n) / (2 * n)
    assert np.allclose(pooled, [1.45, -0.085], atol=1e-12)
    assert np.allclose(np.round(pooled, 2), [1.45, -0.08])


def test_encode_is_deterministic(tmp_path):
    text = "study,age,stage\nA,1.0,I\nA,2.0,II\nB,3.0,I\nB,4.0,II\n"
    schema = CovariateSchema(
        (Covariate("age", "continuous"), Covariate("stage", "categorical", ("I", "II")))
    )
    p1 = write(tmp_path, text, "a.csv")
    p2 = write(tmp_path, text, "b.csv")
    d1 = encode(read_csv(p1, schema, study_col="study"))
    d2 = encode(read_csv(p2, schema, study_col="study"))
    assert d1.column_names == d2.column_names
    assert np.array_equal(d1.X0, d2.X0)
    assert np.array_equal(d1.X1, d2.X1)


def test_dummy_columns_sum_to_one_per_study():
    rng = np.random.default_rng(8)
    schema = CovariateSchema(
        (
            Covariate("f4", "categorical", tuple("ABCD")),
            Covariate("f3", "categorical", tuple("ABC")),
        )
    )
    n = 40
    t = CovariateTable(
        schema=schema,
        study=rng.integers(0, 2, size=n).astype(np.int8),
        columns={
            "f4": rng.integers(0, 4, size=n).astype(np.int16),
            "f3": rng.integers(0, 3, size=n).astype(np.int16),
        },
    )
    dm = encode(t)
    for X in (dm.X0, dm.X1):
        assert np.abs(X[:, :4].sum(axis=1) - 1.0).max() < 1e-12
        assert np.abs(X[:, 4:].sum(axis=1) - 1.0).max() < 1e-12
    # level-column means sum to one within each study as well
    for X in (dm.X0, dm.X1):
        assert abs(X[:, :4].mean(axis=0).sum() - 1.0) < 1e-12


def test_schema_validation():
    with pytest.raises(ValueError):
        Covariate("x", "categorical", ())
    with pytest.raises(ValueError):
        Covariate("x", "categorical", ("A", "A"))
    with pytest.raises(ValueError):
        Covariate("x", "nope")
    with pytest.raises(ValueError):
        CovariateSchema((Covariate("x", "binary"), Covariate("x", "continuous")))


def test_missing_column_in_file(tmp_path):
    path = write(tmp_path, "study,other\nA,1\nB,2\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_csv(path, SIMPLE, study_col="study")
