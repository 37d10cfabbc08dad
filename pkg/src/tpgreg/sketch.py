"""Random sketches applied along the sample mode (mode 0).

All randomness comes from ``numpy.random.Generator`` with the PCG64 bit
generator, seeded from the sketch's 64-bit ``seed``. The same
``(kind, K, N, seed)`` always reproduces the same sketch.
"""

import json
from dataclasses import dataclass

import numpy as np

from .tensor import nmode_product

__all__ = [
    "CountSketch",
    "DenseSketch",
    "SketchSpec",
    "build_count_sketch",
    "build_gaussian_sketch",
    "build_sparse_sketch",
    "make_sketch",
    "sketch_apply",
    "embedding_distortion",
]

SKETCH_KINDS = ("count", "gaussian", "sparse")


def _rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _check_sizes(K, N):
    if int(K) < 1 or int(N) < 1:
        raise ValueError(f"sketch sizes must be positive, got K={K}, N={N}")


@dataclass(frozen=True)
class CountSketch:
    """Implicit ``K x N`` count sketch: column ``j`` holds ``sign_of[j]`` in row ``row_of[j]``."""

    K: int
    N: int
    row_of: np.ndarray
    sign_of: np.ndarray
    seed: int = 0

    def __post_init__(self):
        row_of = np.asarray(self.row_of, dtype=np.int64)
        sign_of = np.asarray(self.sign_of, dtype=np.float64)
        if row_of.shape != (self.N,) or sign_of.shape != (self.N,):
            raise ValueError("row_of and sign_of must have length N")
        if row_of.size and (row_of.min() < 0 or row_of.max() >= self.K):
            raise ValueError("row_of entries must lie in [0, K)")
        if not np.all(np.abs(sign_of) == 1.0):
            raise ValueError("sign_of entries must be +1 or -1")
        object.__setattr__(self, "row_of", row_of)
        object.__setattr__(self, "sign_of", sign_of)

    kind = "count"

    @property
    def shape(self):
        return (self.K, self.N)

    def materialize(self):
        """Dense ``K x N`` matrix. Test oracle only; the solver never calls it."""
        S = np.zeros((self.K, self.N))
        S[self.row_of, np.arange(self.N)] = self.sign_of
        return S

    def apply(self, t):
        t = np.asarray(t, dtype=np.float64)
        if t.shape[0] != self.N:
            raise ValueError(f"sketch expects {self.N} rows along mode 0, tensor has {t.shape[0]}")
        flat = t.reshape(self.N, -1)
        out = np.zeros((self.K, flat.shape[1]))
        # unbuffered scatter-add; accumulates in index order, so deterministic
        np.add.at(out, self.row_of, flat * self.sign_of[:, None])
        return out.reshape((self.K,) + t.shape[1:])


@dataclass(frozen=True)
class DenseSketch:
    """Materialized sketch matrix (Gaussian or sparse random projection)."""

    kind: str
    matrix: np.ndarray
    seed: int = 0

    @property
    def K(self):
        return self.matrix.shape[0]

    @property
    def N(self):
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    def materialize(self):
        return self.matrix

    def apply(self, t):
        t = np.asarray(t, dtype=np.float64)
        if t.shape[0] != self.N:
            raise ValueError(f"sketch expects {self.N} rows along mode 0, tensor has {t.shape[0]}")
        return nmode_product(t, self.matrix, 0)


def build_count_sketch(K, N, seed=0):
    _check_sizes(K, N)
    rng = _rng(seed)
    row_of = rng.integers(0, K, size=N)
    sign_of = 2.0 * rng.integers(0, 2, size=N) - 1.0
    return CountSketch(int(K), int(N), row_of, sign_of, int(seed))


def build_gaussian_sketch(K, N, seed=0):
    """i.i.d. ``Normal(0, 1/K)`` entries, so that ``E[S^T S] = I``."""
    _check_sizes(K, N)
    rng = _rng(seed)
    return DenseSketch("gaussian", rng.standard_normal((K, N)) / np.sqrt(K), int(seed))


def build_sparse_sketch(K, N, seed=0):
    """Achlioptas projection: ``sqrt(3/K) * {+1, 0, -1}`` with probabilities 1/6, 2/3, 1/6."""
    _check_sizes(K, N)
    rng = _rng(seed)
    vals = rng.choice(np.array([1.0, 0.0, -1.0]), size=(K, N), p=[1 / 6, 2 / 3, 1 / 6])
    return DenseSketch("sparse", vals * np.sqrt(3.0 / K), int(seed))


_BUILDERS = {
    "count": build_count_sketch,
    "gaussian": build_gaussian_sketch,
    "sparse": build_sparse_sketch,
}


def make_sketch(kind, K, N, seed=0):
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown sketch kind {kind!r}; expected one of {SKETCH_KINDS}") from None
    return builder(K, N, seed)


@dataclass(frozen=True)
class SketchSpec:
    """Serializable recipe ``{K, N, seed, kind}`` for a sketch.

    ``N`` may be left as ``None`` and bound to the data's sample count at
    build time.
    """

    K: int
    N: int = None
    seed: int = 0
    kind: str = "count"

    def __post_init__(self):
        if self.kind not in SKETCH_KINDS:
            raise ValueError(f"unknown sketch kind {self.kind!r}")
        if int(self.K) < 1:
            raise ValueError("sketch K must be positive")

    def build(self, N=None):
        N = self.N if N is None else N
        if self.N is not None and N != self.N:
            raise ValueError(f"sketch spec declares N={self.N}, data has {N} samples")
        return make_sketch(self.kind, self.K, N, self.seed)

    def to_dict(self):
        return {"K": int(self.K), "N": self.N, "seed": int(self.seed), "kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        return cls(K=int(d["K"]), N=d.get("N"), seed=int(d.get("seed", 0)), kind=d.get("kind", "count"))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def sketch_apply(s, t):
    """Compute ``t x_0 S`` for a sketch ``s`` (count sketches in one pass over entries)."""
    return s.apply(t)


def embedding_distortion(s, A, trials=200, seed=0):
    """Largest observed ``| ||S A x||^2 / ||A x||^2 - 1 |`` over random unit ``x``.

    Directions with ``A x = 0`` are skipped; returns 0.0 if every trial was
    skipped.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != s.N:
        raise ValueError(f"matrix with {A.shape[0] if A.ndim == 2 else '?'} rows cannot be sketched by K x {s.N}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = _rng(seed)
    x = rng.standard_normal((A.shape[1], trials))
    x /= np.linalg.norm(x, axis=0)
    Ax = A @ x
    SAx = s.apply(Ax)
    denom = np.einsum("ij,ij->j", Ax, Ax)
    keep = denom > 0
    if not np.any(keep):
        return 0.0
    num = np.einsum("ij,ij->j", SAx, SAx)
    ratio = num[keep] / denom[keep]
    return float(np.max(np.abs(ratio - 1.0)))
