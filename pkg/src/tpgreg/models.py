"""Regression models: squared-error losses and their exact gradients.

Three variants share one interface (``loss``, ``gradient``, ``sketched``,
``model_shape``):

* :class:`SlicewiseModel` -- ``Y[:, :, m] = X[:, :, m] @ W[:, :, m] + E``.
* :class:`MLMTLModel` -- one least-squares task per column of ``unfold(W, 0)``.
* :class:`VARLaplacianModel` -- slicewise fit of lagged designs plus a graph
  Laplacian penalty on the predictions.
"""

import numpy as np

from .tensor import refold, slicewise_matmul, unfold

__all__ = [
    "SlicewiseModel",
    "MLMTLModel",
    "VARLaplacianModel",
    "loss",
    "gradient",
]


def _check_W(model, W):
    W = np.asarray(W, dtype=np.float64)
    if W.shape != tuple(model.model_shape):
        raise ValueError(f"W has shape {W.shape}, model expects {tuple(model.model_shape)}")
    return W


class SlicewiseModel:
    variant = "slicewise-linear"

    def __init__(self, X, Y):
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.ndim != 3 or Y.ndim != 3 or X.shape[0] != Y.shape[0] or X.shape[2] != Y.shape[2]:
            raise ValueError(f"inconsistent predictor/response shapes {X.shape}, {Y.shape}")
        self.X = X
        self.Y = Y

    @property
    def model_shape(self):
        return (self.X.shape[1], self.Y.shape[1], self.X.shape[2])

    @property
    def n_samples(self):
        return self.X.shape[0]

    def predict(self, W):
        return slicewise_matmul(self.X, _check_W(self, W))

    def loss(self, W):
        r = self.Y - self.predict(W)
        return float(np.vdot(r, r))

    def gradient(self, W):
        r = self.Y - self.predict(W)
        return -2.0 * np.einsum("tim,tjm->ijm", self.X, r)

    def sketched(self, sketch):
        return type(self)(sketch.apply(self.X), sketch.apply(self.Y))

    def design_slices(self):
        return self.X, self.Y


class VARLaplacianModel(SlicewiseModel):
    """Loss ``||X_hat - target||^2 + mu * sum_m tr(X_hat_m L X_hat_m^T)``.

    ``X_hat_m = design[:, :, m] @ W[:, :, m]`` has one row per time step and
    one column per location, so ``L`` is the ``P x P`` location Laplacian.
    """

    variant = "var-laplacian"

    def __init__(self, design, target, laplacian, mu=0.0):
        super().__init__(design, target)
        L = np.asarray(laplacian, dtype=np.float64)
        P = self.Y.shape[1]
        if L.shape != (P, P):
            raise ValueError(f"Laplacian must be {P}x{P}, got {L.shape}")
        if not np.allclose(L, L.T, atol=1e-8) or np.max(np.abs(L.sum(axis=1))) > 1e-8:
            raise ValueError("Laplacian must be symmetric with zero row sums")
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        self.L = L
        self.mu = float(mu)

    def loss(self, W):
        pred = self.predict(W)
        r = self.Y - pred
        penalty = np.einsum("tpm,pq,tqm->", pred, self.L, pred) if self.mu else 0.0
        return float(np.vdot(r, r) + self.mu * penalty)

    def gradient(self, W):
        pred = self.predict(W)
        g = -2.0 * np.einsum("tim,tjm->ijm", self.X, self.Y - pred)
        if self.mu:
            g += 2.0 * self.mu * np.einsum("tim,tpm,pj->ijm", self.X, pred, self.L)
        return g

    def sketched(self, sketch):
        return type(self)(sketch.apply(self.X), sketch.apply(self.Y), self.L, self.mu)


class MLMTLModel:
    """Multilinear multi-task least squares.

    Task ``t`` owns column ``columns[t]`` of ``unfold(W, 0)`` and contributes
    ``||y_t - X_t w_t||^2``.
    """

    variant = "mlmtl"

    def __init__(self, Xs, ys, columns, model_shape):
        self.model_shape = tuple(int(d) for d in model_shape)
        n_cols = int(np.prod(self.model_shape[1:], dtype=np.int64))
        if not len(Xs) == len(ys) == len(columns):
            raise ValueError("need one design, response and column per task")
        self.Xs, self.ys = [], []
        for X, y in zip(Xs, ys):
            X = np.asarray(X, dtype=np.float64)
            y = np.asarray(y, dtype=np.float64).reshape(-1)
            if X.ndim != 2 or X.shape[1] != self.model_shape[0] or X.shape[0] != y.shape[0]:
                raise ValueError(
                    f"task design {X.shape} / response {y.shape} inconsistent with "
                    f"{self.model_shape[0]} features"
                )
            self.Xs.append(X)
            self.ys.append(y)
        self.columns = [int(c) for c in columns]
        if any(not 0 <= c < n_cols for c in self.columns):
            raise ValueError("task column index outside the model tensor")

    @property
    def n_samples(self):
        return sum(len(y) for y in self.ys)

    def loss(self, W):
        Wm = unfold(_check_W(self, W), 0)
        total = 0.0
        for X, y, c in zip(self.Xs, self.ys, self.columns):
            r = y - X @ Wm[:, c]
            total += float(r @ r)
        return total

    def gradient(self, W):
        Wm = unfold(_check_W(self, W), 0)
        G = np.zeros_like(Wm)
        for X, y, c in zip(self.Xs, self.ys, self.columns):
            G[:, c] += -2.0 * X.T @ (y - X @ Wm[:, c])
        return refold(G, 0, self.model_shape)

    def sketched(self, sketch):
        raise ValueError("sketching along the sample mode is not defined for multi-task models")


def loss(model, W):
    """Model loss at ``W`` (always nonnegative)."""
    return model.loss(W)


def gradient(model, W):
    """Exact gradient of :func:`loss`; ``W - eta * gradient`` descends."""
    return model.gradient(_check_W(model, W))
