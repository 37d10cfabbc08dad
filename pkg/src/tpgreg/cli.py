"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import applications as apps
from .bench import SyntheticSpec, gen_synthetic, grid_rank, run_experiment
from .models import SlicewiseModel, VARLaplacianModel
from .sketch import SketchSpec
from .solver import SolverConfig, ols_fit, thosvd_fit, tpg_fit
from .tensor import TensorFormatError, tensor_read, tensor_write

log = logging.getLogger("tpgreg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _solver_config(d, seed=None):
    d = {k: v for k, v in d.items() if k != "method"}
    cfg = SolverConfig.from_dict(d)
    return cfg if seed is None else replace(cfg, seed=seed)


def cmd_gen(args):
    spec = SyntheticSpec.from_dict(_load_json(args.config))
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    X, Y, W, E = gen_synthetic(spec)
    for name, t in (("X", X), ("Y", Y), ("W_true", W), ("E", E)):
        tensor_write(t, os.path.join(args.out, f"{name}.dtnsr"))
    _dump_json(spec.to_dict(), os.path.join(args.out, "spec.json"))


def _load_model(args, cfg):
    X = tensor_read(args.X)
    Y = tensor_read(args.Y)
    if args.laplacian:
        return VARLaplacianModel(X, Y, tensor_read(args.laplacian), cfg.get("mu", args.mu))
    return SlicewiseModel(X, Y)


def cmd_fit(args):
    raw = _load_json(args.config)
    method = args.method or raw.get("method", "tpg")
    cfg = _solver_config({k: v for k, v in raw.items() if k != "mu"}, args.seed)
    model = _load_model(args, raw)
    os.makedirs(args.out, exist_ok=True)
    if method == "tpg":
        W, report = tpg_fit(model, cfg)
        rep = report.to_dict()
    elif method == "ols":
        W = ols_fit(model)
        rep = {"iterations": 0, "loss_trace": [model.loss(W)]}
    elif method == "thosvd":
        W = thosvd_fit(model, cfg.rank)
        rep = {"iterations": 0, "loss_trace": [model.loss(W)]}
    else:
        raise UsageError(f"unknown method {method!r}")
    rep["method"] = method
    rep["config"] = cfg.to_dict()
    tensor_write(W, os.path.join(args.out, "W.dtnsr"))
    _dump_json(rep, os.path.join(args.out, "report.json"))


def cmd_bench(args):
    cfg = _load_json(args.config)
    if args.grid:
        cfg.update(_load_json(args.grid))
    spec = SyntheticSpec.from_dict(cfg.get("spec", {}))
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    solver = _solver_config(cfg.get("solver", {}))
    run_experiment(
        spec,
        methods=cfg.get("methods", ["tpg", "ols", "thosvd"]),
        sketch_grid=cfg.get("sketch_grid", ["none"]),
        out_path=args.out,
        sketch_kind=cfg.get("sketch_kind", "count"),
        solver=solver,
        timing=args.timing or cfg.get("timing", False),
    )


def cmd_sketch(args):
    spec = SketchSpec.from_dict(_load_json(args.config))
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    t = tensor_read(args.input)
    tensor_write(spec.build(t.shape[0]).apply(t), args.out)


def cmd_ingest(args):
    schema = _load_json(args.config)
    data, report = apps.ingest_csv(args.input, schema)
    os.makedirs(args.out, exist_ok=True)
    summary = {"rows": report.rows, "imputed_total": report.imputed_total,
               "imputed": {f"{k[0]}/{k[1]}": v for k, v in sorted(report.imputed.items())}}
    if isinstance(data, apps.StationSeries):
        tensor_write(data.values, os.path.join(args.out, "values.dtnsr"))
        summary.update(stations=[str(s) for s in data.stations],
                       variables=[str(v) for v in data.variables])
        if args.coords:
            coords = apps.read_coords_csv(args.coords, data.stations)
            tensor_write(coords, os.path.join(args.out, "coords.dtnsr"))
            bandwidth = schema.get("bandwidth")
            tensor_write(apps.build_laplacian(coords, bandwidth),
                         os.path.join(args.out, "laplacian.dtnsr"))
        design, target = apps.build_var_design(data.values, data.lag)
        tensor_write(design, os.path.join(args.out, "X.dtnsr"))
        tensor_write(target, os.path.join(args.out, "Y.dtnsr"))
    else:
        feats = np.vstack([X for X, _ in data.tasks])
        targets = np.concatenate([y for _, y in data.tasks])
        cols = np.concatenate([
            np.full(len(y), apps.task_column(ix, data.task_shape), dtype=np.float64)
            for (_, y), ix in zip(data.tasks, data.task_index)
        ])
        tensor_write(feats, os.path.join(args.out, "features.dtnsr"))
        tensor_write(targets, os.path.join(args.out, "targets.dtnsr"))
        tensor_write(cols, os.path.join(args.out, "task_columns.dtnsr"))
        summary.update(model_shape=[data.n_features] + list(data.task_shape),
                       tasks=len(data.tasks), instances=data.n_instances)
    _dump_json(summary, os.path.join(args.out, "ingest.json"))


def cmd_grid_rank(args):
    raw = _load_json(args.config)
    cfg = _solver_config({k: v for k, v in raw.items() if k != "mu"}, args.seed)
    model = _load_model(args, raw)
    try:
        ranks = [int(r) for r in args.ranks.split(",")]
    except ValueError:
        raise UsageError(f"--ranks must be comma-separated integers, got {args.ranks!r}") from None
    best, scores = grid_rank(model, ranks, folds=args.folds, cfg=cfg)
    result = {"best_rank": best, "cv_mse": {str(k): v for k, v in scores.items()}}
    if args.out:
        _dump_json(result, args.out)
    print(json.dumps(result, sort_keys=True))


def build_parser():
    p = _Parser(prog="tpgreg", description="Low-rank tensor regression toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--seed", type=int, default=None, help="override the seed in the config")
        sp.add_argument("--out", required=out_required, help="output path (directory, file or CSV/JSON stem)")
        sp.add_argument("--config", default=None, help="JSON configuration file")

    sp = sub.add_parser("gen", help="synthetic spec JSON -> tensor files")
    common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("fit", help="model tensors + solver config -> W tensor and report")
    common(sp)
    sp.add_argument("--X", required=True, help="predictor tensor (T, D1, D3)")
    sp.add_argument("--Y", required=True, help="response tensor (T, D2, D3)")
    sp.add_argument("--laplacian", default=None, help="location Laplacian for VAR models")
    sp.add_argument("--mu", type=float, default=0.0, help="Laplacian penalty weight")
    sp.add_argument("--method", choices=["tpg", "ols", "thosvd"], default=None)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("bench", help="spec + grid JSON -> CSV/JSON report")
    common(sp)
    sp.add_argument("--grid", default=None, help="grid JSON merged over --config")
    sp.add_argument("--timing", action="store_true", help="write wall times into the CSV")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("sketch", help="tensor + sketch spec -> sketched tensor")
    common(sp)
    sp.add_argument("--input", required=True, help="tensor file to sketch along mode 0")
    sp.set_defaults(func=cmd_sketch)

    sp = sub.add_parser("ingest", help="CSV + schema -> tensor files")
    common(sp)
    sp.add_argument("--input", required=True, help="series or task CSV")
    sp.add_argument("--coords", default=None, help="station coordinates CSV (station, lat, lon)")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("grid-rank", help="cross-validated rank selection")
    common(sp, out_required=False)
    sp.add_argument("--X", required=True, help="predictor tensor (T, D1, D3)")
    sp.add_argument("--Y", required=True, help="response tensor (T, D2, D3)")
    sp.add_argument("--laplacian", default=None, help="location Laplacian for VAR models")
    sp.add_argument("--mu", type=float, default=0.0, help="Laplacian penalty weight")
    sp.add_argument("--ranks", default="1,2,3", help="comma-separated candidate ranks")
    sp.add_argument("--folds", type=int, default=5, help="number of contiguous folds")
    sp.set_defaults(func=cmd_grid_rank)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError, OSError, TensorFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
