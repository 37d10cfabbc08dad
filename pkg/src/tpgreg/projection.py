"""Projection onto tensors of bounded Tucker rank.

Two projectors are provided: :func:`itp_project`, which grows orthonormal
factors one rank-1 component at a time with tensor power iterations, and
:func:`thosvd_truncate`, the truncated higher-order SVD.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .tensor import TuckerFactors, nmode_product, tucker_reconstruct, unfold

__all__ = [
    "DegenerateFiberError",
    "ProjectionConfig",
    "ProjectionResult",
    "resolve_ranks",
    "hosvd_init",
    "rank1_power",
    "itp_project",
    "thosvd_truncate",
    "project_onto_factors",
]

_MAX_RESTARTS = 3


class DegenerateFiberError(ArithmeticError):
    """A power-iteration contraction produced the zero vector."""


def resolve_ranks(rank, shape):
    """Expand a shared rank bound to one entry per mode and validate it."""
    if np.isscalar(rank):
        ranks = (int(rank),) * len(shape)
    else:
        ranks = tuple(int(r) for r in rank)
    if len(ranks) != len(shape):
        raise ValueError(f"rank {ranks} does not match tensor order {len(shape)}")
    for r, d in zip(ranks, shape):
        if not 1 <= r <= d:
            raise ValueError(f"rank {ranks} must satisfy 1 <= R_n <= D_n for shape {tuple(shape)}")
    return ranks


@dataclass
class ProjectionConfig:
    """Settings for :func:`itp_project`.

    ``loss_evaluator`` maps a candidate tensor to the regression loss; when it
    is given, the component loop returns as soon as that loss is at most
    ``early_stop_eps``. ``refine`` enables the closing subspace sweep of
    :func:`itp_project`.
    """

    rank: object
    power_tol: float = 1e-8
    power_max_iters: int = 500
    early_stop_eps: float = 0.0
    loss_evaluator: Optional[Callable] = None
    refine: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.power_tol > 0:
            raise ValueError("power_tol must be positive")
        if self.power_max_iters < 1:
            raise ValueError("power_max_iters must be >= 1")
        if self.early_stop_eps < 0:
            raise ValueError("early_stop_eps must be nonnegative")


@dataclass
class ProjectionResult:
    tensor: np.ndarray
    factors: TuckerFactors
    components_used: int


def _sign_fix(u):
    """Flip ``u`` so its first entry of largest magnitude is positive."""
    k = int(np.argmax(np.abs(u)))
    return -u if u[k] < 0 else u


def hosvd_init(W, ranks):
    """Truncated HOSVD: top-``R_n`` left singular vectors of every unfolding plus the core."""
    W = np.asarray(W, dtype=np.float64)
    ranks = resolve_ranks(ranks, W.shape)
    factors = []
    for n, r in enumerate(ranks):
        U = np.linalg.svd(unfold(W, n), full_matrices=False)[0][:, :r]
        factors.append(np.column_stack([_sign_fix(U[:, j]) for j in range(r)]))
    core = W
    for n, U in enumerate(factors):
        core = nmode_product(core, U.T, n)
    return TuckerFactors(core, factors)


def _contract_except(W, vecs, skip):
    # contract highest modes first so the remaining axis indices stay valid
    out = W
    for k in range(W.ndim - 1, -1, -1):
        if k != skip:
            out = np.tensordot(out, vecs[k], axes=(k, 0))
    return out


def _power_sweeps(W, vecs, tol, max_iters, bases=None):
    """Alternating rank-1 updates; mode ``n`` is confined to ``span(bases[n])`` when given."""
    vecs = [v.copy() for v in vecs]
    scale = np.linalg.norm(W)
    converged = False
    for _ in range(max_iters):
        change = 0.0
        for n in range(W.ndim):
            v = _contract_except(W, vecs, n)
            if bases is not None and bases[n] is not None:
                B = bases[n]
                v = B @ (B.T @ v)
            nrm = np.linalg.norm(v)
            if not nrm > 1e-14 * scale:
                raise DegenerateFiberError(f"degenerate fiber in mode {n}")
            v = v / nrm
            change = max(change, float(np.linalg.norm(v - vecs[n])))
            vecs[n] = v
        if change < tol:
            converged = True
            break
    return [_sign_fix(v) for v in vecs], converged


def rank1_power(W, init, tol=1e-8, max_iters=500):
    """Leading rank-1 component ``(u_1, ..., u_N)`` of ``W`` by higher-order power iteration.

    Each sweep replaces ``u_n`` with ``W`` contracted against all other
    current vectors, then normalizes it. Stops once no vector moves by more
    than ``tol`` in a sweep. Returns ``(vectors, converged)``.

    Raises
    ------
    DegenerateFiberError
        If a contraction vanishes, e.g. for the zero tensor.
    """
    W = np.asarray(W, dtype=np.float64)
    if len(init) != W.ndim:
        raise ValueError("need one initial vector per mode")
    vecs = []
    for n, u in enumerate(init):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (W.shape[n],) or not np.linalg.norm(u) > 0:
            raise ValueError(f"initial vector for mode {n} must be nonzero of length {W.shape[n]}")
        vecs.append(u / np.linalg.norm(u))
    return _power_sweeps(W, vecs, tol, max_iters)


def project_onto_factors(W, factors):
    """``W x_1 U_1 U_1^T ... x_N U_N U_N^T``."""
    out = np.asarray(W, dtype=np.float64)
    for n, U in enumerate(factors):
        out = nmode_product(out, U @ U.T, n)
    return out


def _orthogonalize(v, U):
    """Modified Gram-Schmidt of ``v`` against the columns of ``U`` (twice, for stability)."""
    v = v.copy()
    for _ in range(2):
        for j in range(U.shape[1]):
            v -= (U[:, j] @ v) * U[:, j]
    return v


def _next_column(u, U, candidates, rng):
    """Orthonormal direction to append to ``U``, preferring ``u``."""
    for cand in [u] + [candidates[:, j] for j in range(candidates.shape[1])]:
        w = _orthogonalize(cand, U)
        if np.linalg.norm(w) > 1e-8 * max(np.linalg.norm(cand), 1e-300):
            return w / np.linalg.norm(w)
    while True:
        w = _orthogonalize(rng.standard_normal(U.shape[0]), U)
        if np.linalg.norm(w) > 1e-8:
            return w / np.linalg.norm(w)


def _refine_sweep(W_tilde, factors):
    """One pass of ``U_n <- top left singular vectors of unfold(W_tilde x_{k!=n} U_k^T, n)``."""
    factors = list(factors)
    for n in range(W_tilde.ndim):
        Z = W_tilde
        for k, U in enumerate(factors):
            if k != n:
                Z = nmode_product(Z, U.T, k)
        U = np.linalg.svd(unfold(Z, n), full_matrices=False)[0][:, :factors[n].shape[1]]
        factors[n] = np.column_stack([_sign_fix(U[:, j]) for j in range(U.shape[1])])
    return factors


def itp_project(W_tilde, cfg):
    """Iterative tensor projection of ``W_tilde`` onto Tucker rank at most ``cfg.rank``.

    Factors start empty. Component ``i`` is the leading rank-1 term of the
    residual ``W_tilde - P(W_tilde)`` (``P`` the current projector), found
    by :func:`rank1_power` warm-started from column ``i`` of the truncated
    HOSVD of ``W_tilde``. Each new vector is Gram-Schmidt orthogonalized
    against its mode's factor and appended. Modes whose rank bound is
    already reached keep their factor; their power updates are confined to
    its span.

    When all components are in (no early stop) and ``cfg.refine`` is set,
    each factor is replaced once, in mode order, by the leading left
    singular vectors of ``W_tilde`` contracted with the other factors. The
    greedy spans alone are only a zeroth-order match of the best Tucker
    subspaces under perturbation; this sweep makes the projection exact to
    first order, which is what lets projected gradient settle on a
    stationary point of the constrained least-squares problem.

    Returns a :class:`ProjectionResult` holding the projected tensor, its
    Tucker factors (core ``W_tilde x_n U_n^T``) and the number of
    components used.
    """
    W_tilde = np.asarray(W_tilde, dtype=np.float64)
    if not np.all(np.isfinite(W_tilde)):
        raise ValueError("cannot project a tensor with non-finite entries")
    ranks = resolve_ranks(cfg.rank, W_tilde.shape)
    N = W_tilde.ndim
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    init = hosvd_init(W_tilde, ranks).factors
    factors = [np.zeros((d, 0)) for d in W_tilde.shape]
    W = np.zeros_like(W_tilde)
    scale = np.linalg.norm(W_tilde)
    if not np.isfinite(scale):
        raise OverflowError("tensor norm overflows float64")
    used = 0
    stopped_early = False

    for i in range(max(ranks)):
        residual = W_tilde - W
        if not np.linalg.norm(residual) > 1e-13 * scale:
            break
        open_modes = [i < ranks[n] for n in range(N)]
        bases = [None if open_modes[n] else factors[n] for n in range(N)]
        start = []
        for n in range(N):
            if open_modes[n]:
                v = _orthogonalize(init[n][:, i], factors[n])
                start.append(v if np.linalg.norm(v) > 1e-8 else init[n][:, i])
            else:
                start.append(factors[n][:, 0])

        vecs = None
        for attempt in range(_MAX_RESTARTS + 1):
            try:
                vecs, _ = _power_sweeps(residual, start, cfg.power_tol, cfg.power_max_iters, bases)
                break
            except DegenerateFiberError:
                if attempt == _MAX_RESTARTS:
                    raise
                start = []
                for n in range(N):
                    v = rng.standard_normal(W_tilde.shape[n])
                    if bases[n] is not None:
                        v = bases[n] @ (bases[n].T @ v)
                    start.append(v / np.linalg.norm(v))

        for n in range(N):
            if open_modes[n]:
                col = _next_column(vecs[n], factors[n], init[n], rng)
                factors[n] = np.column_stack([factors[n], col])
        used += 1
        W = project_onto_factors(W_tilde, factors)
        if cfg.loss_evaluator is not None and cfg.loss_evaluator(W) <= cfg.early_stop_eps:
            stopped_early = True
            break

    for n in range(N):
        if factors[n].shape[1] == 0:
            factors[n] = init[n][:, :1]
    if cfg.refine and used and not stopped_early:
        factors = _refine_sweep(W_tilde, factors)
        W = project_onto_factors(W_tilde, factors)
    core = W_tilde
    for n, U in enumerate(factors):
        core = nmode_product(core, U.T, n)
    return ProjectionResult(W, TuckerFactors(core, factors), used)


def thosvd_truncate(W, ranks):
    """Truncated HOSVD reconstruction of ``W`` at the given ranks."""
    return tucker_reconstruct(hosvd_init(W, ranks))
