import json
import subprocess
import sys

import numpy as np
import pytest

from tpgreg.cli import main
from tpgreg.tensor import tensor_read, tensor_write

SPEC = {"model_shape": [6, 5, 3], "tucker_rank": 2, "sample_count": 150, "noise_sigma": 0.05, "runs": 1}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def generated(tmp_path):
    cfg = write_json(tmp_path / "spec.json", SPEC)
    out = tmp_path / "data"
    assert main(["gen", "--config", cfg, "--seed", "3", "--out", str(out)]) == 0
    return out


def test_gen_writes_tensors(generated):
    X, Y, W = (tensor_read(generated / f"{n}.dtnsr") for n in ("X", "Y", "W_true"))
    assert X.shape == (150, 6, 3) and Y.shape == (150, 5, 3) and W.shape == (6, 5, 3)
    assert json.loads((generated / "spec.json").read_text())["seed"] == 3


@pytest.mark.parametrize("method", ["tpg", "ols", "thosvd"])
def test_fit(generated, tmp_path, method):
    cfg = write_json(tmp_path / "solver.json", {"rank": 2, "max_iters": 100})
    out = tmp_path / "fit"
    rc = main(["fit", "--X", str(generated / "X.dtnsr"), "--Y", str(generated / "Y.dtnsr"),
               "--config", cfg, "--method", method, "--out", str(out)])
    assert rc == 0
    W = tensor_read(out / "W.dtnsr")
    W_true = tensor_read(generated / "W_true.dtnsr")
    assert np.linalg.norm(W - W_true) <= 0.1 * np.linalg.norm(W_true)
    rep = json.loads((out / "report.json").read_text())
    assert rep["method"] == method


def test_bench_cli(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"spec": SPEC, "solver": {"max_iters": 30}})
    grid = write_json(tmp_path / "grid.json", {"sketch_grid": ["none", 60]})
    out = tmp_path / "res"
    assert main(["bench", "--config", cfg, "--grid", grid, "--seed", "1", "--out", str(out)]) == 0
    lines = (tmp_path / "res.csv").read_text().splitlines()
    assert lines[0].startswith("run,method") and len(lines) == 1 + 2 * 3


def test_sketch_cli(generated, tmp_path):
    cfg = write_json(tmp_path / "sk.json", {"K": 20, "seed": 4})
    out = tmp_path / "sx.dtnsr"
    assert main(["sketch", "--input", str(generated / "X.dtnsr"), "--config", cfg, "--out", str(out)]) == 0
    assert tensor_read(out).shape == (20, 6, 3)


def test_ingest_and_grid_rank(tmp_path):
    rows = ["time,station,variable,value"]
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((60, 3, 2))
    for t in range(60):
        for p in range(3):
            for m in range(2):
                rows.append(f"{t},s{p},v{m},{float(vals[t, p, m])!r}")
    csv_path = tmp_path / "series.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    coords = tmp_path / "coords.csv"
    coords.write_text("station,lat,lon\ns0,0,0\ns1,1,0\ns2,0,1\n")
    schema = write_json(tmp_path / "schema.json", {"kind": "series", "lag": 2, "bandwidth": 0.5})
    out = tmp_path / "ing"
    assert main(["ingest", "--input", str(csv_path), "--config", schema, "--coords", str(coords),
                 "--out", str(out)]) == 0
    assert tensor_read(out / "X.dtnsr").shape == (58, 6, 2)
    L = tensor_read(out / "laplacian.dtnsr")
    np.testing.assert_allclose(L[0, 1], -np.exp(-1 / (2 * 0.5**2)), rtol=1e-12)
    summary = json.loads((out / "ingest.json").read_text())
    assert summary["rows"] == 360 and summary["stations"] == ["s0", "s1", "s2"]

    res = tmp_path / "rank.json"
    rc = main(["grid-rank", "--X", str(out / "X.dtnsr"), "--Y", str(out / "Y.dtnsr"),
               "--laplacian", str(out / "laplacian.dtnsr"), "--mu", "0.1",
               "--ranks", "1,2", "--folds", "3", "--out", str(res)])
    assert rc == 0
    assert json.loads(res.read_text())["best_rank"] in (1, 2)


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--out", "x"])
    assert exc.value.code == 1


def test_bad_ranks_is_usage_error(generated):
    rc = main(["grid-rank", "--X", str(generated / "X.dtnsr"), "--Y", str(generated / "Y.dtnsr"),
               "--ranks", "a,b"])
    assert rc == 1


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.dtnsr"
    bad.write_bytes(b"garbage")
    assert main(["sketch", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["sketch", "--input", str(tmp_path / "missing.dtnsr"), "--out", str(tmp_path / "o")]) == 2
    zero = tmp_path / "zero.dtnsr"
    tensor_write(np.zeros((5, 3, 2)), zero)
    y = tmp_path / "y.dtnsr"
    tensor_write(np.ones((5, 2, 2)), y)
    assert main(["fit", "--X", str(zero), "--Y", str(y), "--out", str(tmp_path / "f")]) == 2


def test_numerical_failure_exit_code(generated, tmp_path):
    X = tensor_read(generated / "X.dtnsr")
    X[0, 0, 0] = 1e300
    huge = tmp_path / "huge.dtnsr"
    tensor_write(X, huge)
    cfg = write_json(tmp_path / "solver.json", {"rank": 2, "step_size": 1.0, "max_iters": 5})
    rc = main(["fit", "--X", str(huge), "--Y", str(generated / "Y.dtnsr"), "--config", cfg,
               "--out", str(tmp_path / "f")])
    assert rc == 3


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tpgreg.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "grid-rank" in r.stdout
