"""Builders that turn application data into regression models.

Covers multilinear multi-task learning (one coefficient vector per task,
stacked into a tensor) and VAR(L) spatio-temporal forecasting with a
Gaussian-kernel graph Laplacian, together with CSV ingestion for both.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .models import MLMTLModel, VARLaplacianModel

__all__ = [
    "IngestError",
    "MissingColumnError",
    "UnparseableRowError",
    "NonFiniteValueError",
    "TaskDataset",
    "StationSeries",
    "IngestReport",
    "SeriesSchema",
    "TaskSchema",
    "task_column",
    "build_mlmtl_model",
    "build_var_design",
    "build_var_model",
    "build_laplacian",
    "median_pairwise_distance",
    "ingest_csv",
    "read_coords_csv",
    "write_series_csv",
]


class IngestError(ValueError):
    pass


class MissingColumnError(IngestError):
    pass


class UnparseableRowError(IngestError):
    pass


class NonFiniteValueError(IngestError):
    pass


@dataclass
class TaskDataset:
    """Per-task designs ``X_t`` (``m_t x d``), responses ``y_t`` and their tensor position.

    ``task_index[t]`` is the tuple of non-feature mode indices of task ``t``.
    """

    tasks: list
    task_index: list
    task_shape: tuple = None
    task_ids: list = None

    def __post_init__(self):
        if len(self.tasks) != len(self.task_index):
            raise ValueError("need one index per task")
        dims = {np.shape(X)[1] for X, _ in self.tasks}
        if len(dims) > 1:
            raise ValueError(f"tasks disagree on the feature dimension: {sorted(dims)}")
        self.task_index = [tuple(int(i) for i in np.atleast_1d(ix)) for ix in self.task_index]
        if self.task_shape is None:
            self.task_shape = tuple(max(ix[k] for ix in self.task_index) + 1
                                    for k in range(len(self.task_index[0])))

    @property
    def n_features(self):
        return np.shape(self.tasks[0][0])[1]

    @property
    def n_instances(self):
        return sum(len(y) for _, y in self.tasks)


@dataclass
class StationSeries:
    """Measurements ``values[t, p, m]`` (time x location x variable)."""

    values: np.ndarray
    coords: np.ndarray = None
    lag: int = 1
    stations: list = None
    variables: list = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError("series values must have shape (T, P, M)")
        if self.values.shape[0] <= self.lag:
            raise ValueError(f"need more than lag={self.lag} time steps, got {self.values.shape[0]}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series contains non-finite values")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=np.float64)
            if self.coords.shape != (self.values.shape[1], 2):
                raise ValueError("coords must be a P x 2 matrix")


@dataclass
class IngestReport:
    rows: int = 0
    imputed: dict = field(default_factory=dict)

    @property
    def imputed_total(self):
        return int(sum(self.imputed.values()))


def task_column(index, task_shape):
    """Column of ``unfold(W, 0)`` owned by the task at multi-index ``index`` (Kolda order)."""
    col, stride = 0, 1
    for i, d in zip(index, task_shape):
        if not 0 <= i < d:
            raise ValueError(f"task index {index} outside task grid {task_shape}")
        col += i * stride
        stride *= d
    return col


def build_mlmtl_model(d, model_shape=None):
    """Multi-task model whose task ``t`` fits column ``task_column(task_index[t])``."""
    if model_shape is None:
        model_shape = (d.n_features,) + tuple(d.task_shape)
    model_shape = tuple(int(s) for s in model_shape)
    if model_shape[0] != d.n_features:
        raise ValueError(f"model has {model_shape[0]} features, tasks have {d.n_features}")
    n_slots = int(np.prod(model_shape[1:], dtype=np.int64))
    if len(d.tasks) != n_slots:
        raise ValueError(f"{len(d.tasks)} tasks cannot fill {n_slots} task slots of {model_shape}")
    cols = [task_column(ix, model_shape[1:]) for ix in d.task_index]
    if len(set(cols)) != len(cols):
        raise ValueError("two tasks map to the same tensor column")
    return MLMTLModel([X for X, _ in d.tasks], [y for _, y in d.tasks], cols, model_shape)


def build_var_design(values, lag):
    """Lagged design ``(T-L, P*L, M)`` and target ``(T-L, P, M)``.

    Row for time ``t`` is ``[x_{t-1}, ..., x_{t-L}]`` per variable.
    """
    values = np.asarray(values, dtype=np.float64)
    T = values.shape[0]
    if lag < 1 or T <= lag:
        raise ValueError(f"need T > L >= 1, got T={T}, L={lag}")
    blocks = [values[lag - k:T - k] for k in range(1, lag + 1)]
    return np.concatenate(blocks, axis=1), values[lag:]


def median_pairwise_distance(coords):
    coords = np.asarray(coords, dtype=np.float64)
    i, j = np.triu_indices(len(coords), k=1)
    if len(i) == 0:
        return 1.0
    d = np.linalg.norm(coords[i] - coords[j], axis=1)
    med = float(np.median(d))
    return med if med > 0 else 1.0


def build_laplacian(coords, bandwidth=None):
    """Graph Laplacian ``diag(K 1) - K`` of the Gaussian kernel on ``coords``."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] < 1:
        raise ValueError("coords must be a nonempty P x 2 matrix")
    if bandwidth is None:
        bandwidth = median_pairwise_distance(coords)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    sq = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
    K = np.exp(-sq / (2.0 * bandwidth**2))
    L = np.diag(K.sum(axis=1)) - K
    return 0.5 * (L + L.T)


def build_var_model(s, mu=0.0, bandwidth=None):
    design, target = build_var_design(s.values, s.lag)
    P = s.values.shape[1]
    if s.coords is not None:
        L = build_laplacian(s.coords, bandwidth)
    elif mu:
        raise ValueError("a Laplacian penalty needs station coordinates")
    else:
        L = np.zeros((P, P))
    return VARLaplacianModel(design, target, L, mu)


@dataclass
class SeriesSchema:
    """Long-format series CSV: one ``(time, station, variable, value)`` row per reading."""

    time: str = "time"
    station: str = "station"
    variable: str = "variable"
    value: str = "value"
    standardize: bool = False
    lag: int = 1
    bandwidth: float = None  # Laplacian kernel width; None means median pairwise distance
    kind = "series"


@dataclass
class TaskSchema:
    """Task CSV: task index columns, feature columns and a target column."""

    task_cols: list = field(default_factory=lambda: ["task_id"])
    features: list = None
    target: str = "target"
    kind = "tasks"


def schema_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", "series")
    if kind == "series":
        return SeriesSchema(**d)
    if kind == "tasks":
        return TaskSchema(**d)
    raise ValueError(f"unknown schema kind {kind!r}")


def _sorted_ids(values):
    try:
        return sorted(values)
    except TypeError:
        return sorted(values, key=str)


def _read(path, required):
    try:
        df = pd.read_csv(path, skipinitialspace=True, float_precision="round_trip")
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise UnparseableRowError(f"{path}: {exc}") from exc
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing required columns {missing}")
    return df


def _numeric(df, cols, path):
    out = df[cols].apply(pd.to_numeric, errors="coerce")
    bad = out.isna() & df[cols].notna()
    if bad.any().any():
        row = int(np.flatnonzero(bad.any(axis=1).to_numpy())[0])
        raise UnparseableRowError(f"{path}: unparseable numeric value in data row {row + 1}")
    return out


def _ingest_series(path, schema):
    cols = [schema.time, schema.station, schema.variable, schema.value]
    df = _read(path, cols)
    df[[schema.time, schema.value]] = _numeric(df, [schema.time, schema.value], path)
    if df[[schema.time, schema.station, schema.variable]].isna().any().any():
        raise UnparseableRowError(f"{path}: row without time, station or variable")
    if df.duplicated([schema.time, schema.station, schema.variable]).any():
        raise UnparseableRowError(f"{path}: duplicate (time, station, variable) rows")

    times = np.sort(df[schema.time].unique())
    stations = _sorted_ids(df[schema.station].unique())
    variables = _sorted_ids(df[schema.variable].unique())
    full = pd.MultiIndex.from_product([variables, stations, times])
    wide = (df.set_index([schema.variable, schema.station, schema.time])[schema.value]
            .reindex(full)
            .to_numpy()
            .reshape(len(variables), len(stations), len(times)))

    report = IngestReport(rows=len(df))
    values = np.empty((len(times), len(stations), len(variables)))
    for m, var in enumerate(variables):
        for p, st in enumerate(stations):
            x = pd.Series(wide[m, p])
            n_missing = int(x.isna().sum())
            if n_missing:
                report.imputed[(str(st), str(var))] = n_missing
                x = x.ffill()
                x = x.fillna(x.mean())
            x = x.to_numpy()
            if not np.all(np.isfinite(x)):
                raise NonFiniteValueError(f"{path}: series ({st}, {var}) has no finite values")
            if schema.standardize:
                sd = x.std()
                x = (x - x.mean()) / (sd if sd > 0 else 1.0)
            values[:, p, m] = x
    series = StationSeries(values, lag=schema.lag, stations=stations, variables=variables)
    return series, report


def _ingest_tasks(path, schema):
    df = _read(path, list(schema.task_cols) + [schema.target])
    features = schema.features
    if features is None:
        features = [c for c in df.columns if c not in schema.task_cols and c != schema.target]
    elif any(c not in df.columns for c in features):
        raise MissingColumnError(f"{path}: missing feature columns")
    num = _numeric(df, list(features) + [schema.target], path)
    if not np.all(np.isfinite(num.to_numpy())):
        raise NonFiniteValueError(f"{path}: non-finite feature or target values")

    levels = [_sorted_ids(df[c].unique()) for c in schema.task_cols]
    lookup = [{v: i for i, v in enumerate(lv)} for lv in levels]
    keys = list(itertools.product(*levels))
    groups = {
        (k if isinstance(k, tuple) else (k,)): v
        for k, v in df.groupby(list(schema.task_cols), sort=False).indices.items()
    }
    tasks, index, ids = [], [], []
    for key in keys:
        rows = groups.get(key)
        if rows is None:
            continue
        block = num.iloc[np.sort(rows)]
        tasks.append((block[features].to_numpy(), block[schema.target].to_numpy()))
        index.append(tuple(lookup[k][v] for k, v in enumerate(key)))
        ids.append(key)
    shape = tuple(len(lv) for lv in levels)
    return TaskDataset(tasks, index, shape, ids), IngestReport(rows=len(df))


def ingest_csv(path, schema):
    """Read a CSV into a :class:`StationSeries` or :class:`TaskDataset`.

    Returns ``(dataset, IngestReport)``. Series are ordered by variable,
    station and time (ids in sorted order); gaps are forward-filled and
    leading gaps take the series mean, with per-series counts in the report.
    Standardization, when requested, happens after imputation.
    """
    if isinstance(schema, dict):
        schema = schema_from_dict(schema)
    if schema.kind == "series":
        return _ingest_series(path, schema)
    return _ingest_tasks(path, schema)


def read_coords_csv(path, stations=None, station_col="station", lat_col="lat", lon_col="lon"):
    """Coordinates as a ``P x 2`` matrix, ordered like ``stations`` if given."""
    df = _read(path, [station_col, lat_col, lon_col])
    df[[lat_col, lon_col]] = _numeric(df, [lat_col, lon_col], path)
    df[station_col] = df[station_col].astype(str)
    df = df.set_index(station_col)
    order = [str(s) for s in stations] if stations is not None else sorted(df.index)
    missing = [s for s in order if s not in df.index]
    if missing:
        raise MissingColumnError(f"{path}: no coordinates for stations {missing}")
    return df.loc[order, [lat_col, lon_col]].to_numpy(dtype=np.float64)


def write_series_csv(series, path, schema=None):
    schema = schema or SeriesSchema()
    T, P, M = series.values.shape
    stations = series.stations or list(range(P))
    variables = series.variables or list(range(M))
    rows = [
        (t, stations[p], variables[m], series.values[t, p, m])
        for m in range(M) for p in range(P) for t in range(T)
    ]
    df = pd.DataFrame(rows, columns=[schema.time, schema.station, schema.variable, schema.value])
    df.to_csv(path, index=False, float_format="%.17g")
