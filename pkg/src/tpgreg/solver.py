"""Subsampled tensor projected gradient and the least-squares baselines."""

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import MLMTLModel
from .projection import ProjectionConfig, itp_project, resolve_ranks, thosvd_truncate
from .sketch import SketchSpec
from .tensor import refold

__all__ = [
    "DegenerateDesignError",
    "DivergenceError",
    "SolverConfig",
    "SolverReport",
    "estimate_step_size",
    "tpg_fit",
    "ols_fit",
    "thosvd_fit",
]

log = logging.getLogger(__name__)

MAX_HALVINGS = 20


class DegenerateDesignError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    pass


@dataclass
class SolverConfig:
    rank: object = 2
    step_size: object = "auto"
    max_iters: int = 1000
    grad_tol: float = 1e-7
    loss_tol: float = 0.0
    sketch: SketchSpec = None
    power_tol: float = 1e-8
    power_max_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.sketch, dict):
            self.sketch = SketchSpec.from_dict(self.sketch)
        if isinstance(self.rank, list):
            self.rank = tuple(int(r) for r in self.rank)
        if self.step_size != "auto" and not float(self.step_size) > 0:
            raise ValueError("explicit step size must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def projection(self, loss_evaluator=None):
        return ProjectionConfig(
            rank=self.rank,
            power_tol=self.power_tol,
            power_max_iters=self.power_max_iters,
            early_stop_eps=self.loss_tol,
            loss_evaluator=loss_evaluator,
            seed=self.seed,
        )

    def to_dict(self):
        d = asdict(self)
        d["rank"] = self.rank if np.isscalar(self.rank) else list(self.rank)
        d["sketch"] = None if self.sketch is None else self.sketch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class SolverReport:
    iterations: int
    loss_trace: list = field(default_factory=list)
    step_size: float = 0.0
    stop_reason: str = "max-iters"
    wall_time: float = 0.0
    halvings: int = 0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def _hessian_action(model, V, g0):
    return 0.5 * (model.gradient(V) - g0)


def estimate_step_size(model, iters=50, seed=0):
    """``1 / lambda_max`` of the loss's Hessian-half ``V -> (grad(V) - grad(0)) / 2``.

    ``lambda_max`` is a power-iteration (Rayleigh quotient) estimate from a
    fixed-seed random start.

    Raises
    ------
    DegenerateDesignError
        If the operator is zero, e.g. for an all-zero design.
    """
    shape = tuple(model.model_shape)
    g0 = model.gradient(np.zeros(shape))
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        Hv = _hessian_action(model, v, g0)
        lam = float(np.vdot(v, Hv))
        nrm = np.linalg.norm(Hv)
        if not nrm > 0:
            break
        v = Hv / nrm
    if not lam > 0 or not np.isfinite(lam):
        raise DegenerateDesignError("degenerate design: Hessian has no positive curvature")
    return 1.0 / lam


def tpg_fit(model, cfg):
    """Rank-constrained fit by projected gradient with iterative tensor projection.

    Starts from ``W = 0`` and repeats ``W <- ITP(W - eta * gradient(W))``.
    With ``cfg.sketch`` set, the model's samples are first compressed along
    mode 0 and every reported loss refers to the sketched problem.

    A step whose loss exceeds the previous one is retried from the same
    iterate with half the step size, at most 20 times per run.

    Returns ``(W, SolverReport)``.
    """
    t0 = time.perf_counter()
    if cfg.sketch is not None:
        model = model.sketched(cfg.sketch.build(model.n_samples))
    shape = tuple(model.model_shape)
    resolve_ranks(cfg.rank, shape)
    W = np.zeros(shape)
    cur = model.loss(W)
    trace = [cur]
    if cfg.max_iters == 0:
        return W, SolverReport(0, trace, 0.0, "max-iters", time.perf_counter() - t0)

    if cfg.step_size == "auto":
        # loss is a sum of squares (no 1/2), so its gradient is 2 * lambda_max Lipschitz
        eta = 0.5 * estimate_step_size(model, seed=cfg.seed)
    else:
        eta = float(cfg.step_size)
    evaluator = model.loss if cfg.loss_tol > 0 else None
    pcfg = cfg.projection(evaluator)

    halvings = 0
    reason = "max-iters"
    it = 0
    while it < cfg.max_iters:
        g = model.gradient(W)
        while True:
            step = W - eta * g
            if not np.isfinite(np.linalg.norm(step)):
                raise DivergenceError("diverged (step size too large)")
            W_new = itp_project(step, pcfg).tensor
            new = model.loss(W_new)
            if not np.isfinite(new):
                raise DivergenceError("diverged (step size too large)")
            if new <= cur or halvings >= MAX_HALVINGS:
                break
            halvings += 1
            eta *= 0.5
            log.debug("loss rose at iteration %d; step size halved to %g", it + 1, eta)
        it += 1
        delta = np.linalg.norm(W_new - W) / max(1.0, np.linalg.norm(W))
        W, cur = W_new, new
        trace.append(cur)
        if cur < cfg.loss_tol:
            reason = "loss-tol"
            break
        if delta < cfg.grad_tol:
            reason = "grad-tol"
            break

    report = SolverReport(it, trace, eta, reason, time.perf_counter() - t0, halvings)
    return W, report


def _ridge_solve(X, Y):
    G = X.T @ X
    tr = np.trace(G)
    if not tr > 0:
        return np.zeros((X.shape[1],) + Y.shape[1:])
    lam = 1e-8 * tr / X.shape[1]
    return np.linalg.solve(G + lam * np.eye(G.shape[0]), X.T @ Y)


def ols_fit(model):
    """Unconstrained least squares with a tiny ridge ``1e-8 * trace(X^T X) / D1``.

    Slicewise and VAR models solve one system per slice (the Laplacian
    penalty is not used); multi-task models solve one system per task.
    """
    if isinstance(model, MLMTLModel):
        Wm = np.zeros((model.model_shape[0], int(np.prod(model.model_shape[1:]))))
        for X, y, c in zip(model.Xs, model.ys, model.columns):
            Wm[:, c] = _ridge_solve(X, y)
        return refold(Wm, 0, model.model_shape)
    X, Y = model.design_slices()
    W = np.zeros(model.model_shape)
    for m in range(X.shape[2]):
        W[:, :, m] = _ridge_solve(X[:, :, m], Y[:, :, m])
    return W


def thosvd_fit(model, rank):
    """Least squares followed by truncated HOSVD at ``rank``."""
    W = ols_fit(model)
    return thosvd_truncate(W, resolve_ranks(rank, W.shape))
