import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from subsetbart import __version__
from subsetbart.cli import main

SCHEMA = {
    "outcome": "y",
    "columns": [
        {"name": "x1", "kind": "continuous"},
        {"name": "g", "kind": "categorical", "levels": ["a", "b", "c"]},
        {"name": "v", "kind": "network", "levels": ["n1", "n2", "n3", "n4"], "network": "ring"},
    ],
}
RING = "n1 n2\nn2 n3\nn3 n4\nn4 n1\n"


@pytest.fixture
def inputs(tmp_path):
    rng = np.random.default_rng(0)
    n = 60
    x1 = rng.uniform(-2, 5, n)
    g = rng.choice(["a", "b", "c"], n)
    v = rng.choice(["n1", "n2", "n3", "n4"], n)
    y = 3 * (x1 > 1) + (g == "b") + rng.normal(scale=0.3, size=n)
    lines = ["x1,g,v,y"] + [f"{float(a)!r},{b},{c},{float(d)!r}" for a, b, c, d in zip(x1, g, v, y)]
    (tmp_path / "train.csv").write_text("\n".join(lines) + "\n")
    (tmp_path / "schema.json").write_text(json.dumps(SCHEMA))
    (tmp_path / "ring.txt").write_text(RING)
    new = ["x1,g,v", "0.5,a,n1", "9.0,c,n3", "-7.0,b,n2"]
    (tmp_path / "new.csv").write_text("\n".join(new) + "\n")
    return tmp_path


def fit_args(d, out, seed=3, *extra):
    return ["fit", "--data", str(d / "train.csv"), "--schema", str(d / "schema.json"),
            "--network", f"ring={d / 'ring.txt'}", "--iters", "40", "--burnin", "20", "--trees", "8",
            "--seed", str(seed), "--out", str(out), *extra]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fit_writes_samples_trees_and_manifest(inputs):
    out = inputs / "run"
    assert main(fit_args(inputs, out)) == 0
    rows = read_csv(out / "samples.csv")
    assert rows[0][:3] == ["draw", "sigma", "mean_leaves"] and len(rows[0]) == 3 + 60
    assert len(rows) == 1 + 20 and all(float(r[1]) > 0 for r in rows[1:])
    trees = (out / "trees.ndjson").read_text().splitlines()
    assert len(trees) == 20
    first = json.loads(trees[0])
    assert first["draw"] == 0 and len(first["trees"]) == 8
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "fit" and m["n_draws"] == 20 and m["data"]["n"] == 60
    assert m["chain"]["seed"] == 3 and m["prior"]["n_trees"] == 8 and m["prior"]["split_strategy"] == "gs2"
    assert set(m["networks"]) == {"ring"} and len(m["data"]["sha256"]) == 64
    assert m["move_stats"]["suff_stat_mismatches"] == 0
    assert "time" not in json.dumps(m).lower()


def test_fit_is_byte_deterministic(inputs):
    for name in ("a", "b"):
        assert main(fit_args(inputs, inputs / name)) == 0
    for f in ("samples.csv", "trees.ndjson", "manifest.json"):
        assert (inputs / "a" / f).read_bytes() == (inputs / "b" / f).read_bytes()
    main(fit_args(inputs, inputs / "c", 4))
    assert (inputs / "a" / "samples.csv").read_bytes() != (inputs / "c" / "samples.csv").read_bytes()


def test_fit_without_trees(inputs):
    assert main(fit_args(inputs, inputs / "r", 3, "--no-trees", "--strategy", "unif")) == 0
    assert not (inputs / "r" / "trees.ndjson").exists()


def test_predict_reproduces_training_fits(inputs):
    out = inputs / "run"
    main(fit_args(inputs, out))
    fits = np.array([[float(v) for v in r[3:]] for r in read_csv(out / "samples.csv")[1:]])
    pred = inputs / "pred.csv"
    assert main(["predict", "--trees", str(out / "trees.ndjson"), "--data", str(inputs / "train.csv"),
                 "--out", str(pred)]) == 0
    rows = read_csv(pred)
    assert rows[0] == ["row", "mean", "lower", "upper"]
    got = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert np.allclose(got[:, 0], fits.mean(axis=0), atol=1e-10)
    assert np.all(got[:, 1] <= got[:, 0] + 1e-12) and np.all(got[:, 0] <= got[:, 2] + 1e-12)


def test_predict_new_rows_outside_training_range(inputs):
    out = inputs / "run"
    main(fit_args(inputs, out))
    pred = inputs / "pred.csv"
    assert main(["predict", "--trees", str(out / "trees.ndjson"), "--manifest", str(out / "manifest.json"),
                 "--data", str(inputs / "new.csv"), "--out", str(pred)]) == 0
    rows = read_csv(pred)[1:]
    assert len(rows) == 3 and all(np.isfinite(float(r[1])) for r in rows)


def test_probit_fit(inputs, tmp_path):
    rows = read_csv(inputs / "train.csv")
    rows = [rows[0]] + [r[:3] + ["1" if float(r[0]) > 1 else "0"] for r in rows[1:]]
    (inputs / "bin.csv").write_text("\n".join(",".join(r) for r in rows) + "\n")
    args = fit_args(inputs, inputs / "p", 3, "--probit")
    args[2] = str(inputs / "bin.csv")
    assert main(args) == 0
    assert json.loads((inputs / "p" / "manifest.json").read_text())["probit"] is True
    pred = inputs / "pp.csv"
    main(["predict", "--trees", str(inputs / "p" / "trees.ndjson"), "--data", str(inputs / "new.csv"),
          "--out", str(pred)])
    p = [float(r[1]) for r in read_csv(pred)[1:]]
    assert all(0 <= v <= 1 for v in p)


def test_bench_is_byte_deterministic(tmp_path, capsys):
    args = ["bench", "--dgp", "dgp2", "--n", "80", "--reps", "2", "--methods", "flex_unif,onehot,oracle",
            "--iters", "20", "--burnin", "10", "--trees", "5", "--n-test", "30", "--seed", "1"]
    for name in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / name)]) == 0
    for f in ("metrics.csv", "summary.json", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = read_csv(tmp_path / "a" / "metrics.csv")
    assert rows[0] == ["method", "fold", "metric", "value"]
    assert {r[0] for r in rows[1:]} == {"flex_unif", "onehot", "oracle"} and {r[1] for r in rows[1:]} == {"0", "1"}
    assert "relative_mse" in capsys.readouterr().out


def test_bench_rejects_incompatible_methods(tmp_path, capsys):
    assert main(["bench", "--dgp", "dgp1", "--methods", "gs2", "--out", str(tmp_path / "x")]) == 2
    assert "network" in capsys.readouterr().err


def test_graph_check(tmp_path, capsys):
    (tmp_path / "ring.txt").write_text(RING)
    assert main(["graph", "check", "--network", str(tmp_path / "ring.txt")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep == {"vertices": 4, "edges": 4, "connected": True, "components": 1, "component_sizes": [4],
                   "log_spanning_trees": pytest.approx(np.log(4)), "spanning_trees": 4}
    (tmp_path / "two.txt").write_text("a b\nc d\n# comment\n")
    assert main(["graph", "check", "--network", str(tmp_path / "two.txt")]) == 1
    rep = json.loads(capsys.readouterr().out)
    assert rep["components"] == 2 and "spanning_trees" not in rep
    (tmp_path / "bad.txt").write_text("a b c\n")
    assert main(["graph", "check", "--network", str(tmp_path / "bad.txt")]) == 2


def test_prior_partitions_on_a_network(tmp_path):
    (tmp_path / "ring.txt").write_text(RING)
    out = tmp_path / "parts.csv"
    assert main(["prior-partitions", "--network", f"ring={tmp_path / 'ring.txt'}", "--strategy", "gs3",
                 "--draws", "200", "--seed", "2", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["draw", "n_blocks", "partition"] and len(rows) == 201
    ring = {"n1": {"n2", "n4"}, "n2": {"n1", "n3"}, "n3": {"n2", "n4"}, "n4": {"n3", "n1"}}
    for r in rows[1:]:
        blocks = [b.split("|") for b in r[2].split(";")]
        assert int(r[1]) == len(blocks)
        assert sorted(v for b in blocks for v in b) == ["n1", "n2", "n3", "n4"]
        for b in blocks:  # every block of a ring partition is a contiguous arc
            if 1 < len(b) < 4:
                assert all(ring[v] & set(b) for v in b)


def test_coclust_from_schema(inputs):
    out = inputs / "cc.csv"
    assert main(["coclust", "--schema", str(inputs / "schema.json"), "--network", f"ring={inputs / 'ring.txt'}",
                 "--column", "g", "--strategy", "unif",
                 "--draws", "500", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["level", "a", "b", "c"]
    mat = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    assert np.allclose(np.diag(mat), 1.0) and np.allclose(mat, mat.T)
    assert np.all((mat >= 0) & (mat <= 1))


def test_analysis_errors(tmp_path):
    assert main(["coclust", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--schema", str(tmp_path / "s.json"),
                 "--out", str(tmp_path / "o")]) == 2


def test_argument_errors():
    with pytest.raises(SystemExit):
        main(["fit", "--data", "x"])
    with pytest.raises(SystemExit):
        main(["prior-partitions", "--strategy", "bogus", "--out", "x"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "subsetbart", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == __version__
