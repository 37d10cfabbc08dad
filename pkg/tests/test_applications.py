import numpy as np
import pytest

from tpgreg.applications import (
    IngestError,
    MissingColumnError,
    NonFiniteValueError,
    SeriesSchema,
    StationSeries,
    TaskDataset,
    TaskSchema,
    UnparseableRowError,
    build_laplacian,
    build_mlmtl_model,
    build_var_design,
    build_var_model,
    ingest_csv,
    read_coords_csv,
    task_column,
    write_series_csv,
)
from tpgreg.models import SlicewiseModel
from tpgreg.solver import ols_fit
from tpgreg.tensor import unfold

# multi-task ----------------------------------------------------------------


def restaurant_shaped_dataset(seed=0):
    """45 features, 138 consumers x 3 ratings, 3483 instances in total."""
    rng = np.random.default_rng(seed)
    n_tasks = 138 * 3
    sizes = np.full(n_tasks, 3483 // n_tasks)
    sizes[: 3483 - sizes.sum()] += 1
    tasks = [(rng.standard_normal((m, 45)), rng.standard_normal(m)) for m in sizes]
    index = [(c, r) for r in range(3) for c in range(138)]
    return TaskDataset(tasks, index)


def test_restaurant_shape():
    d = restaurant_shaped_dataset()
    m = build_mlmtl_model(d)
    assert m.model_shape == (45, 138, 3)
    assert d.n_instances == 3483
    assert sorted(m.columns) == list(range(414))


def test_single_task_is_identity():
    rng = np.random.default_rng(1)
    X, y = rng.standard_normal((10, 4)), rng.standard_normal(10)
    m = build_mlmtl_model(TaskDataset([(X, y)], [(0,)]))
    assert m.model_shape == (4, 1)
    w = rng.standard_normal((4, 1))
    assert m.loss(w) == pytest.approx(np.sum((y - X @ w[:, 0]) ** 2), rel=1e-12)


def test_two_task_ols_oracle():
    rng = np.random.default_rng(2)
    tasks = [(rng.standard_normal((15, 3)), rng.standard_normal(15)) for _ in range(2)]
    W = ols_fit(build_mlmtl_model(TaskDataset(tasks, [(0,), (1,)])))
    for t, (X, y) in enumerate(tasks):
        np.testing.assert_allclose(W[:, t], np.linalg.solve(X.T @ X, X.T @ y), rtol=1e-6)


def test_task_column_is_kolda_order():
    W = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
    Wm = unfold(W, 0)
    for i in range(3):
        for j in range(4):
            np.testing.assert_array_equal(Wm[:, task_column((i, j), (3, 4))], W[:, i, j])
    with pytest.raises(ValueError):
        task_column((3, 0), (3, 4))


def test_mlmtl_build_errors():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        TaskDataset([(rng.standard_normal((4, 3)), np.zeros(4)), (rng.standard_normal((4, 2)), np.zeros(4))],
                    [(0,), (1,)])
    d = TaskDataset([(np.ones((2, 3)), np.zeros(2))] * 2, [(0,), (0,)], task_shape=(2,))
    with pytest.raises(ValueError):
        build_mlmtl_model(d)


# VAR -----------------------------------------------------------------------


def test_ar1_residuals_orthogonal_to_design():
    rng = np.random.default_rng(4)
    e = rng.standard_normal(400)
    x = np.zeros((400, 1, 1))
    for t in range(1, 400):
        x[t] = 0.5 * x[t - 1] + e[t]
    model = build_var_model(StationSeries(x, lag=1))
    W = ols_fit(model)
    resid = model.Y - np.einsum("tim,ijm->tjm", model.X, W)
    assert W.shape == (1, 1, 1)
    assert abs(W[0, 0, 0] - 0.5) <= 0.1
    assert abs(np.sum(resid[:, 0, 0] * model.X[:, 0, 0])) <= 1e-8 * np.sum(model.X**2)


def test_ar1_noiseless_coefficient():
    x = np.zeros((50, 1, 1))
    x[0] = 1.0
    for t in range(1, 50):
        x[t] = 0.5 * x[t - 1]
    W = ols_fit(build_var_model(StationSeries(x, lag=1)))
    assert abs(W[0, 0, 0] - 0.5) <= 1e-8


@pytest.mark.parametrize("lag, shape", [(3, (97, 15, 2)), (1, (99, 5, 2))])
def test_var_design_shapes(lag, shape):
    values = np.random.default_rng(5).standard_normal((100, 5, 2))
    design, target = build_var_design(values, lag)
    assert design.shape == shape
    assert target.shape == (100 - lag, 5, 2)


def test_var_design_shift_consistency():
    values = np.random.default_rng(6).standard_normal((30, 4, 2))
    for L in range(2, 5):
        dL, _ = build_var_design(values, L)
        dprev, _ = build_var_design(values, L - 1)
        np.testing.assert_array_equal(dL[:, 4:, :], dprev[:-1])


def test_var_design_row_layout():
    values = np.arange(10 * 2 * 1, dtype=float).reshape(10, 2, 1)
    design, target = build_var_design(values, 2)
    np.testing.assert_array_equal(design[0, :, 0], np.concatenate([values[1, :, 0], values[0, :, 0]]))
    np.testing.assert_array_equal(target[0], values[2])


def test_series_validation():
    with pytest.raises(ValueError):
        StationSeries(np.zeros((2, 3, 1)), lag=2)
    bad = np.zeros((5, 2, 1))
    bad[1, 0, 0] = np.nan
    with pytest.raises(ValueError):
        StationSeries(bad)


def test_var_model_penalty_needs_coords():
    with pytest.raises(ValueError):
        build_var_model(StationSeries(np.zeros((5, 2, 1))), mu=1.0)
    m = build_var_model(StationSeries(np.ones((5, 2, 1))), mu=0.0)
    assert isinstance(m, SlicewiseModel)


# Laplacian -----------------------------------------------------------------


def test_laplacian_single_point():
    np.testing.assert_array_equal(build_laplacian(np.zeros((1, 2))), np.zeros((1, 1)))


def test_laplacian_coincident_points():
    L = build_laplacian(np.zeros((3, 2)), bandwidth=1.0)
    np.testing.assert_allclose(L, 3 * np.eye(3) - np.ones((3, 3)), atol=1e-15)


def test_laplacian_quadratic_form_oracle():
    rng = np.random.default_rng(7)
    coords = rng.standard_normal((6, 2))
    h = 0.9
    L = build_laplacian(coords, h)
    for _ in range(10):
        x = rng.standard_normal(6)
        expected = 0.0
        for i in range(6):
            for j in range(6):
                k = np.exp(-np.sum((coords[i] - coords[j]) ** 2) / (2 * h**2))
                expected += 0.5 * k * (x[i] - x[j]) ** 2
        assert x @ L @ x == pytest.approx(expected, rel=1e-12)


def test_laplacian_psd_and_constant_null():
    rng = np.random.default_rng(8)
    L = build_laplacian(rng.uniform(0, 10, size=(15, 2)))
    np.testing.assert_allclose(L, L.T, atol=0)
    np.testing.assert_allclose(L @ np.ones(15), 0.0, atol=1e-12)
    V = rng.standard_normal((15, 1000))
    assert np.min(np.einsum("ij,ik,kj->j", V, L, V)) >= -1e-12


def test_laplacian_bad_bandwidth():
    with pytest.raises(ValueError):
        build_laplacian(np.zeros((2, 2)), bandwidth=0.0)


# CSV -----------------------------------------------------------------------


def test_series_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    s = StationSeries(rng.standard_normal((12, 3, 2)), stations=["a", "b", "c"], variables=["p", "t"])
    path = tmp_path / "series.csv"
    write_series_csv(s, path)
    back, report = ingest_csv(path, SeriesSchema())
    np.testing.assert_array_equal(back.values, s.values)
    assert back.stations == ["a", "b", "c"] and back.variables == ["p", "t"]
    assert report.rows == 72 and report.imputed_total == 0


def test_series_csv_imputation_counts(tmp_path):
    s = StationSeries(np.arange(10 * 2 * 1, dtype=float).reshape(10, 2, 1))
    path = tmp_path / "series.csv"
    write_series_csv(s, path)
    lines = path.read_text().splitlines()
    # drop time 0 for station 0 (leading gap) and times 4, 5 for station 1
    drop = {"0,0,0,", "4,1,0,", "5,1,0,"}
    kept = [ln for ln in lines if not any(ln.startswith(p) for p in drop)]
    path.write_text("\n".join(kept) + "\n")
    back, report = ingest_csv(path, SeriesSchema())
    assert report.imputed_total == 3
    assert report.imputed == {("0", "0"): 1, ("1", "0"): 2}
    # forward fill inside the series, mean fill for the leading gap
    assert back.values[4, 1, 0] == s.values[3, 1, 0] and back.values[5, 1, 0] == s.values[3, 1, 0]
    assert back.values[0, 0, 0] == pytest.approx(np.mean(s.values[1:, 0, 0]))


def test_series_csv_standardize(tmp_path):
    s = StationSeries(np.random.default_rng(10).normal(5.0, 3.0, size=(40, 2, 2)))
    path = tmp_path / "series.csv"
    write_series_csv(s, path)
    back, _ = ingest_csv(path, SeriesSchema(standardize=True))
    np.testing.assert_allclose(back.values.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(back.values.std(axis=0), 1.0, atol=1e-12)


def test_series_csv_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("time,station,value\n0,a,1.0\n")
    with pytest.raises(MissingColumnError):
        ingest_csv(p, SeriesSchema())
    p.write_text("time,station,variable,value\n0,a,v,1.0\n1,a,v,abc\n")
    with pytest.raises(UnparseableRowError):
        ingest_csv(p, SeriesSchema())
    p.write_text("time,station,variable,value\n0,a,v,1.0\n1,a,v,inf\n")
    with pytest.raises(NonFiniteValueError):
        ingest_csv(p, SeriesSchema())
    assert issubclass(MissingColumnError, IngestError) and issubclass(IngestError, ValueError)


def test_task_csv(tmp_path):
    p = tmp_path / "tasks.csv"
    p.write_text(
        "consumer,rating,f1,f2,target\n"
        "u2,food,1,0,3\n"
        "u1,food,0,1,2\n"
        "u1,food,1,1,4\n"
        "u1,service,2,0,1\n"
        "u2,service,0,2,5\n"
    )
    d, report = ingest_csv(p, TaskSchema(task_cols=["consumer", "rating"]))
    assert report.rows == 5
    assert d.task_shape == (2, 2) and d.n_features == 2 and d.n_instances == 5
    assert d.task_ids == [("u1", "food"), ("u1", "service"), ("u2", "food"), ("u2", "service")]
    X, y = d.tasks[0]
    np.testing.assert_array_equal(X, [[0, 1], [1, 1]])
    np.testing.assert_array_equal(y, [2, 4])
    assert build_mlmtl_model(d).model_shape == (2, 2, 2)


def test_task_csv_missing_target(tmp_path):
    p = tmp_path / "tasks.csv"
    p.write_text("task_id,f1\n0,1\n")
    with pytest.raises(MissingColumnError):
        ingest_csv(p, TaskSchema())


def test_coords_csv(tmp_path):
    p = tmp_path / "coords.csv"
    p.write_text("station,lat,lon\nb,1.5,2.5\na,0.5,-1\n")
    np.testing.assert_array_equal(read_coords_csv(p), [[0.5, -1.0], [1.5, 2.5]])
    np.testing.assert_array_equal(read_coords_csv(p, ["b"]), [[1.5, 2.5]])
    with pytest.raises(MissingColumnError):
        read_coords_csv(p, ["c"])
