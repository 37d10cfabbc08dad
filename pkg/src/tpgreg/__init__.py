"""Low-rank tensor regression by subsampled tensor projected gradient."""

from .applications import (
    StationSeries,
    TaskDataset,
    build_laplacian,
    build_mlmtl_model,
    build_var_model,
    ingest_csv,
)
from .bench import SyntheticSpec, gen_synthetic, param_rmse, run_experiment
from .models import MLMTLModel, SlicewiseModel, VARLaplacianModel, gradient, loss
from .projection import (
    ProjectionConfig,
    hosvd_init,
    itp_project,
    rank1_power,
    thosvd_truncate,
)
from .sketch import (
    CountSketch,
    SketchSpec,
    build_count_sketch,
    embedding_distortion,
    sketch_apply,
)
from .solver import SolverConfig, SolverReport, estimate_step_size, ols_fit, thosvd_fit, tpg_fit
from .tensor import (
    TuckerFactors,
    frobenius_norm,
    nmode_product,
    refold,
    slicewise_matmul,
    tensor_read,
    tensor_write,
    tucker_reconstruct,
    unfold,
)

__version__ = "0.1.0"
