"""Synthetic low-rank regression benchmark.

Every output of :func:`run_experiment` is a pure function of the
:class:`SyntheticSpec` and grid settings; per-cell seeds are derived with
``numpy.random.SeedSequence``.
"""

import csv
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .models import SlicewiseModel
from .projection import resolve_ranks
from .sketch import SketchSpec
from .solver import SolverConfig, ols_fit, thosvd_fit, tpg_fit
from .tensor import TuckerFactors, slicewise_matmul, tucker_reconstruct

__all__ = [
    "CSV_HEADER",
    "METHODS",
    "SyntheticSpec",
    "ExperimentReport",
    "gen_synthetic",
    "param_rmse",
    "run_experiment",
    "grid_rank",
]

log = logging.getLogger(__name__)

CSV_HEADER = ["run", "method", "sketch_kind", "sketch_k", "param_rmse",
              "final_loss", "iterations", "wall_ms", "status"]
METHODS = ("tpg", "ols", "thosvd")


@dataclass
class SyntheticSpec:
    model_shape: tuple = (15, 15, 8)
    tucker_rank: object = 2
    sample_count: int = 5000
    noise_sigma: float = 0.05
    runs: int = 5
    seed: int = 0

    def __post_init__(self):
        self.model_shape = tuple(int(d) for d in self.model_shape)
        if len(self.model_shape) != 3:
            raise ValueError("synthetic model shape must be (D1, D2, D3)")
        self.tucker_rank = resolve_ranks(self.tucker_rank, self.model_shape)
        if self.sample_count < 1 or self.noise_sigma < 0 or self.runs < 1:
            raise ValueError("need sample_count >= 1, noise_sigma >= 0, runs >= 1")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def to_dict(self):
        d = asdict(self)
        d["model_shape"] = list(self.model_shape)
        d["tucker_rank"] = list(self.tucker_rank)
        return d


def gen_synthetic(spec):
    """Draw ``(X, Y, W_true, E)`` with ``Y[:, :, m] = X[:, :, m] @ W_true[:, :, m] + E[:, :, m]``.

    ``W_true`` has Gaussian core and QR-orthonormalized Gaussian factors;
    ``X`` is standard normal and ``E`` is ``Normal(0, sigma^2)``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    D1, D2, D3 = spec.model_shape
    factors = [np.linalg.qr(rng.standard_normal((d, r)))[0]
               for d, r in zip(spec.model_shape, spec.tucker_rank)]
    core = rng.standard_normal(spec.tucker_rank)
    W_true = tucker_reconstruct(TuckerFactors(core, factors))
    X = rng.standard_normal((spec.sample_count, D1, D3))
    E = spec.noise_sigma * rng.standard_normal((spec.sample_count, D2, D3))
    Y = slicewise_matmul(X, W_true) + E
    return X, Y, W_true, E


def param_rmse(W, W_true):
    W = np.asarray(W, dtype=np.float64)
    W_true = np.asarray(W_true, dtype=np.float64)
    if W.shape != W_true.shape:
        raise ValueError(f"shape mismatch: {W.shape} vs {W_true.shape}")
    return float(np.linalg.norm(W - W_true) / np.sqrt(W.size))


def _child_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


@dataclass
class ExperimentReport:
    records: list = field(default_factory=list)
    spec: dict = None
    settings: dict = None

    def rows(self, timing=False):
        for r in self.records:
            yield [
                r["run"], r["method"], r["sketch_kind"],
                "" if r["sketch_k"] is None else r["sketch_k"],
                _fmt(r["param_rmse"]), _fmt(r["final_loss"]), r["iterations"],
                _fmt(r["wall_ms"]) if timing else "", r["status"],
            ]

    def to_csv(self, timing=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(self.rows(timing))
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"spec": self.spec, "settings": self.settings, "records": self.records},
                          indent=2, sort_keys=True)

    def median(self, method, sketch_k, key="param_rmse"):
        vals = [r[key] for r in self.records
                if r["method"] == method and r["sketch_k"] == sketch_k and r["status"] == "ok"]
        return float(np.median(vals)) if vals else float("nan")


def _fmt(x):
    return "" if x is None else repr(float(x))


def _fit(method, model, rank, cfg):
    if method == "tpg":
        W, rep = tpg_fit(model, replace(cfg, rank=rank, sketch=None))
        return W, rep.iterations
    if method == "ols":
        return ols_fit(model), 0
    if method == "thosvd":
        return thosvd_fit(model, rank), 0
    raise ValueError(f"unknown method {method!r}")


def run_experiment(spec, methods=METHODS, sketch_grid=("none",), out_path=None,
                   sketch_kind="count", solver=None, timing=False):
    """Fit every method at every sketch size for ``spec.runs`` synthetic draws.

    ``sketch_grid`` entries are positive row counts ``K`` or ``"none"``.
    Data are drawn once per run; the sketch for a ``(run, K)`` cell is
    shared by all methods. A failing cell is recorded with status
    ``failed`` and the grid continues. ``final_loss`` is the full-data
    (unsketched) squared error.

    With ``out_path`` set, writes ``<out_path>.csv`` and ``<out_path>.json``.
    Wall times go to the JSON; the CSV ``wall_ms`` column stays empty unless
    ``timing`` is true, so that the CSV is reproducible byte for byte.
    """
    methods = list(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
    grid = [None if k in (None, "none") else int(k) for k in sketch_grid]
    if any(k is not None and k < 1 for k in grid):
        raise ValueError("sketch sizes must be positive")
    solver = solver or SolverConfig()
    rank = spec.tucker_rank

    records = []
    for run in range(spec.runs):
        data_seed = _child_seed(spec.seed, run)
        X, Y, W_true, _ = gen_synthetic(replace(spec, seed=data_seed))
        full = SlicewiseModel(X, Y)
        for K in grid:
            if K is None:
                model, kind = full, "none"
            else:
                sk = SketchSpec(K=K, seed=_child_seed(spec.seed, run, K), kind=sketch_kind)
                model, kind = full.sketched(sk.build(full.n_samples)), sketch_kind
            for method in methods:
                rec = {"run": run, "method": method, "sketch_kind": kind, "sketch_k": K,
                       "param_rmse": None, "final_loss": None, "iterations": 0,
                       "wall_ms": None, "status": "ok"}
                t0 = time.perf_counter()
                try:
                    W, iters = _fit(method, model, rank, solver)
                    rec.update(param_rmse=param_rmse(W, W_true), final_loss=full.loss(W),
                               sketched_loss=model.loss(W), iterations=iters)
                except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                    log.warning("cell run=%d method=%s K=%s failed: %s", run, method, K, exc)
                    rec.update(status="failed", error=str(exc))
                rec["wall_ms"] = 1000.0 * (time.perf_counter() - t0)
                records.append(rec)

    order = {m: i for i, m in enumerate(METHODS)}
    records.sort(key=lambda r: (r["run"], -1 if r["sketch_k"] is None else r["sketch_k"],
                                order[r["method"]]))
    report = ExperimentReport(
        records, spec.to_dict(),
        {"methods": methods, "sketch_grid": ["none" if k is None else k for k in grid],
         "sketch_kind": sketch_kind, "solver": solver.to_dict()},
    )
    if out_path is not None:
        base = os.fspath(out_path)
        with open(base + ".csv", "w", newline="") as fh:
            fh.write(report.to_csv(timing))
        with open(base + ".json", "w") as fh:
            fh.write(report.to_json())
    return report


def grid_rank(model, ranks, folds=5, cfg=None):
    """Pick a rank for a slicewise model by ``folds``-fold cross-validation.

    Samples (mode 0) are split into contiguous folds; each candidate rank is
    fit by TPG on the remaining folds and scored by held-out mean squared
    error. Returns ``(best_rank, {rank: mean_mse})``.
    """
    cfg = cfg or SolverConfig()
    X, Y = model.design_slices()
    n = X.shape[0]
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= {n}")
    edges = np.linspace(0, n, folds + 1).astype(int)
    scores = {}
    for rank in ranks:
        key = rank if np.isscalar(rank) else tuple(rank)
        errs = []
        for f in range(folds):
            test = np.zeros(n, dtype=bool)
            test[edges[f]:edges[f + 1]] = True
            train = type(model)(X[~test], Y[~test]) if type(model) is SlicewiseModel else \
                type(model)(X[~test], Y[~test], model.L, model.mu)
            W, _ = tpg_fit(train, replace(cfg, rank=rank))
            resid = Y[test] - slicewise_matmul(X[test], W)
            errs.append(float(np.mean(resid**2)))
        scores[key] = float(np.mean(errs))
    best = min(scores, key=lambda k: (scores[k], np.sum(k)))
    return best, scores
