import numpy as np
import pytest

from tpgreg.bench import SyntheticSpec, gen_synthetic
from tpgreg.models import MLMTLModel, SlicewiseModel, VARLaplacianModel
from tpgreg.applications import build_laplacian


@pytest.fixture(scope="session")
def noiseless_problem():
    """Acceptance-sized noiseless instance: shape (10, 10, 4), rank 2, T = 2000."""
    spec = SyntheticSpec((10, 10, 4), 2, 2000, 0.0, 1, seed=20240)
    X, Y, W, E = gen_synthetic(spec)
    return SlicewiseModel(X, Y), W


def small_models(seed=0):
    """One random instance of each model variant with W of shape (3, 2, 2)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 3, 2))
    Y = rng.standard_normal((6, 2, 2))
    coords = rng.standard_normal((2, 2))
    Xs = [rng.standard_normal((4 + t, 3)) for t in range(4)]
    ys = [rng.standard_normal(4 + t) for t in range(4)]
    return {
        "slicewise": SlicewiseModel(X, Y),
        "var-laplacian": VARLaplacianModel(X, Y, build_laplacian(coords, 0.8), mu=0.7),
        "mlmtl": MLMTLModel(Xs, ys, [0, 1, 2, 3], (3, 2, 2)),
    }
