"""Dense tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. The canonical
linearization is first-index-fastest (Fortran order), and unfoldings follow
the Kolda & Bader index map: entry ``(i_1, ..., i_N)`` lands in row ``i_n``
and column ``sum_{k != n} i_k * J_k`` with ``J_k = prod_{m < k, m != n} D_m``.
"""

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TensorFormatError",
    "MalformedHeaderError",
    "TruncatedPayloadError",
    "UnsupportedVersionError",
    "TuckerFactors",
    "as_tensor",
    "unfold",
    "refold",
    "nmode_product",
    "slicewise_matmul",
    "frobenius_norm",
    "tucker_reconstruct",
    "tensor_write",
    "tensor_read",
]

MAGIC = b"DTNSR"
VERSION = b"1"


class TensorFormatError(ValueError):
    """Base class for binary tensor file errors."""


class MalformedHeaderError(TensorFormatError):
    pass


class TruncatedPayloadError(TensorFormatError):
    pass


class UnsupportedVersionError(TensorFormatError):
    pass


def as_tensor(t):
    """Return ``t`` as a float64 array with strictly positive mode sizes."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d <= 0 for d in arr.shape):
        raise ValueError(f"shape entries must be positive, got {arr.shape}")
    return arr


def _check_mode(ndim, mode):
    if not 0 <= mode < ndim:
        raise ValueError(f"invalid mode {mode} for order-{ndim} tensor")


def unfold(t, mode):
    """Mode-``mode`` matricization, shape ``(D_mode, prod_{k != mode} D_k)``."""
    t = np.asarray(t, dtype=np.float64)
    _check_mode(t.ndim, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def refold(m, mode, shape):
    """Inverse of :func:`unfold`."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(d) for d in shape)
    _check_mode(len(shape), mode)
    rest = tuple(d for k, d in enumerate(shape) if k != mode)
    if m.ndim != 2 or m.shape[0] != shape[mode] or m.shape[1] != int(np.prod(rest, dtype=np.int64)):
        raise ValueError(
            f"matrix of shape {m.shape} is inconsistent with tensor shape {shape} at mode {mode}"
        )
    t = np.reshape(m, (shape[mode],) + rest, order="F")
    return np.moveaxis(t, 0, mode)


def nmode_product(t, M, mode):
    """Multiply matrix ``M`` into ``t`` along ``mode``.

    The result satisfies ``unfold(result, mode) == M @ unfold(t, mode)``.
    """
    t = np.asarray(t, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    _check_mode(t.ndim, mode)
    if M.ndim != 2 or M.shape[1] != t.shape[mode]:
        raise ValueError(
            f"cannot multiply matrix of shape {M.shape} into mode {mode} of tensor {t.shape}"
        )
    return np.moveaxis(np.tensordot(M, t, axes=(1, mode)), 0, mode)


def slicewise_matmul(X, W):
    """Per-slice product: ``out[:, :, m] = X[:, :, m] @ W[:, :, m]``.

    ``X`` has shape ``(T, D1, M)`` and ``W`` shape ``(D1, D2, M)``.
    """
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim != 3 or W.ndim != 3 or X.shape[1] != W.shape[0] or X.shape[2] != W.shape[2]:
        raise ValueError(f"slicewise shapes do not agree: X {X.shape}, W {W.shape}")
    # batch over slices: (M, T, D1) @ (M, D1, D2)
    out = np.matmul(X.transpose(2, 0, 1), W.transpose(2, 0, 1))
    return out.transpose(1, 2, 0)


def frobenius_norm(t):
    return float(np.linalg.norm(np.ravel(t)))


@dataclass(frozen=True)
class TuckerFactors:
    """Tucker model ``core x_1 U_1 x_2 U_2 ... x_N U_N``."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "core", np.asarray(self.core, dtype=np.float64))
        object.__setattr__(
            self, "factors", tuple(np.asarray(U, dtype=np.float64) for U in self.factors)
        )
        if self.core.ndim != len(self.factors):
            raise ValueError("need one factor matrix per core mode")

    @property
    def ranks(self):
        return tuple(U.shape[1] for U in self.factors)

    @property
    def shape(self):
        return tuple(U.shape[0] for U in self.factors)


def tucker_reconstruct(f):
    t = f.core
    for n, U in enumerate(f.factors):
        t = nmode_product(t, U, n)
    return t


def tensor_write(t, path):
    """Write ``t`` in the ``DTNSR1`` binary format."""
    t = as_tensor(t)
    with open(path, "wb") as fh:
        fh.write(MAGIC + VERSION)
        fh.write(struct.pack("<I", t.ndim))
        fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
        fh.write(np.ravel(t, order="F").astype("<f8").tobytes())


def tensor_read(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10 or blob[:5] != MAGIC:
        raise MalformedHeaderError(f"{path}: malformed header (bad magic bytes)")
    if blob[5:6] != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {blob[5:6]!r}")
    (order,) = struct.unpack_from("<I", blob, 6)
    if order < 1:
        raise MalformedHeaderError(f"{path}: malformed header (order {order})")
    header_end = 10 + 8 * order
    if len(blob) < header_end:
        raise MalformedHeaderError(f"{path}: malformed header (missing mode sizes)")
    shape = struct.unpack_from(f"<{order}Q", blob, 10)
    if any(d == 0 for d in shape):
        raise MalformedHeaderError(f"{path}: malformed header (zero mode size)")
    count = int(np.prod(shape, dtype=np.int64))
    payload = blob[header_end:]
    if len(payload) != 8 * count:
        raise TruncatedPayloadError(
            f"{path}: truncated payload (expected {count} scalars, found {len(payload) / 8:g})"
        )
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return np.reshape(data, shape, order="F")
