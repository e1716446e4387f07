import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest
import yaml

from simbaopt import bench
from simbaopt.cli import main

SMALL_NLLS = {
    "problem": {"kind": "nlls", "synthetic": {"m": 60, "n": 20, "sparsity": 0.3, "row_norm": 2.0, "seed": 0},
                "init": "normal"},
    "optimizers": [
        {"name": "simba", "lr": 0.05, "coarse_fraction": 0.25, "rank": 4, "floor": "1e-12"},
        {"name": "adam", "lr": 1e-2},
    ],
    "iters": 25,
    "batch_size": 16,
    "seeds": [0, 1, 2],
    "log_every": 5,
}

SMALL_QUAD = {
    "problem": {"kind": "quadratic", "n": 30, "mu": 1.0, "L": 20.0},
    "optimizers": [{"name": "sgd", "lr": 0.01, "momentum": 0.0}],
    "iters": 40,
    "seeds": [0, 1],
    "verify": {"iters": 60, "floor": 1.0, "xi": 0.5, "rank": 5,
               "eps_sweep": [1e-2, 1e-4, 1e-6, 1e-8]},
}


def _write_cfg(tmp_path, cfg, name="cfg.yaml"):
    cfg = dict(cfg, out=str(tmp_path / "out"))
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def test_run_writes_one_trace_per_pair(tmp_path):
    assert main(["run", str(_write_cfg(tmp_path, SMALL_NLLS))]) == 0
    traces = sorted((tmp_path / "out" / "traces").glob("*.csv"))
    assert len(traces) == 6
    assert (tmp_path / "out" / "config.yaml").exists()


def test_trace_schema(tmp_path):
    main(["run", str(_write_cfg(tmp_path, SMALL_NLLS))])
    path = tmp_path / "out" / "traces" / "simba_seed0.csv"
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == bench.TRACE_COLUMNS
    iters = [int(r[2]) for r in rows[1:]]
    assert iters == [0, 5, 10, 15, 20, 25]
    assert all(r[6] in ("init", "coarse") for r in rows[1:])


def test_summary_recomputed_independently(tmp_path):
    main(["run", str(_write_cfg(tmp_path, SMALL_NLLS))])
    out = tmp_path / "out"
    finals = {}
    for f in (out / "traces").glob("*.csv"):
        with open(f) as fh:
            rows = list(csv.DictReader(fh))
        finals.setdefault(rows[-1]["optimizer"], []).append(float(rows[-1]["loss"]))
    with open(out / "summary.csv") as fh:
        summary = {r["optimizer"]: r for r in csv.DictReader(fh)}
    assert list(summary) == ["simba", "adam"]
    for name, vals in finals.items():
        v = np.array(vals)
        assert float(summary[name]["mean_final_loss"]) == pytest.approx(v.mean(), abs=1e-12)
        assert float(summary[name]["std_final_loss"]) == pytest.approx(v.std(), abs=1e-12)
        assert int(summary[name]["runs"]) == 3


def _strip_seconds(path):
    lines = Path(path).read_text().splitlines()
    return [re.sub(r",[^,]*$", "", ln) for ln in lines]


def test_rerun_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir(), b.mkdir()
    main(["run", str(_write_cfg(a, SMALL_NLLS))])
    main(["run", str(_write_cfg(b, SMALL_NLLS))])
    for f in sorted((a / "out" / "traces").glob("*.csv")):
        assert _strip_seconds(f) == _strip_seconds(b / "out" / "traces" / f.name)


def test_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv(bench.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    cfg = _write_cfg(tmp_path, SMALL_NLLS)
    assert main(["run", str(cfg), "--seed", "7", "--iters", "10", "--out", "rel"]) == 0
    traces = sorted((tmp_path / "root" / "rel" / "traces").glob("*.csv"))
    assert [t.name for t in traces] == ["adam_seed7.csv", "simba_seed7.csv"]
    rows = bench.read_trace(traces[0])
    assert rows[-1].iter == 10


@pytest.mark.parametrize("patch", [
    {"optimizers": [{"name": "lbfgs"}]},
    {"optimizers": []},
    {"iters": 0},
    {"seeds": []},
    {"problem": {"kind": "banana"}},
    {"optimizers": [{"name": "simba", "rank": "many"}]},
])
def test_config_errors_exit_2(tmp_path, patch):
    cfg = dict(SMALL_NLLS, **patch)
    assert main(["run", str(_write_cfg(tmp_path, cfg))]) == bench.EXIT_CONFIG


def test_malformed_yaml_exit_2(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("problem: [unclosed\n")
    assert main(["run", str(p)]) == bench.EXIT_CONFIG


def test_missing_files_exit_3(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml")]) == bench.EXIT_IO
    cfg = dict(SMALL_NLLS, problem={"kind": "nlls", "data": "missing.svm"})
    assert main(["run", str(_write_cfg(tmp_path, cfg))]) == bench.EXIT_IO
    (tmp_path / "empty").mkdir()
    assert main(["plot", str(tmp_path / "empty")]) == bench.EXIT_IO


def test_libsvm_data_path(tmp_path):
    from simbaopt.libsvm import write_libsvm
    from simbaopt.problems import synthetic_nlls

    data, _ = synthetic_nlls(40, 12, seed=0)
    write_libsvm(data, tmp_path / "d.svm")
    cfg = dict(SMALL_NLLS, problem={"kind": "nlls", "data": "d.svm", "normalize": "max_abs"},
               seeds=[0])
    assert main(["run", str(_write_cfg(tmp_path, cfg))]) == 0


def test_verify_ok_and_report(tmp_path, capsys):
    code = main(["verify", str(_write_cfg(tmp_path, SMALL_QUAD))])
    assert code == 0
    report = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert report["violations"] == 0
    for s in report["seeds"]:
        ks = [k for _, k in s["K_hat_sweep"]]
        assert np.all(np.diff(ks) > 0)
        assert s["certificate"]["c"] <= s["certificate"]["c_hat"] < 1
    traces = sorted((tmp_path / "out" / "traces").glob("*.csv"))
    assert len(traces) == 2
    assert bench.read_trace(traces[0])[0].step_kind == "init"


def test_verify_inflated_factor_exit_4(tmp_path):
    assert main(["verify", str(_write_cfg(tmp_path, SMALL_QUAD)), "--factor", "1e-3"]) == bench.EXIT_VIOLATION
    report = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert report["violations"] > 0


def test_verify_unsupported_problem(tmp_path):
    assert main(["verify", str(_write_cfg(tmp_path, SMALL_NLLS))]) == bench.EXIT_CONFIG
    with pytest.raises(bench.UnsupportedProblemError):
        bench.verify(SMALL_NLLS)


def test_plot_three_series_in_config_order(tmp_path):
    cfg = dict(SMALL_NLLS, seeds=[0], optimizers=[
        {"name": "sgd", "lr": 0.1},
        {"name": "simba", "lr": 0.05, "rank": 4, "coarse_fraction": 0.25},
        {"name": "adam", "lr": 1e-2},
    ])
    main(["run", str(_write_cfg(tmp_path, cfg))])
    out = tmp_path / "out"
    figs = bench.build_figures(out)
    assert set(figs) == {"loss_vs_iter", "loss_vs_time"}
    for fig in figs.values():
        ax = fig.axes[0]
        assert [ln.get_label() for ln in ax.get_lines()] == ["sgd", "simba", "adam"]
        assert ax.get_yscale() == "log"
    assert main(["plot", str(out)]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs == ["loss_vs_iter.svg", "loss_vs_time.svg"]
    assert (out / "loss_vs_iter.svg").read_text().lstrip().startswith("<?xml")


def test_learning_rate_schedules():
    assert bench.learning_rate(0.1, 5, 10) == 0.1
    assert bench.learning_rate(0.1, 0, 10, {"kind": "cosine"}) == pytest.approx(0.1)
    assert bench.learning_rate(0.1, 10, 10, {"kind": "cosine", "min_factor": 0.1}) == pytest.approx(0.01)
    with pytest.raises(bench.ConfigError):
        bench.learning_rate(0.1, 0, 10, {"kind": "step"})


def test_batch_stream_covers_epoch():
    s = bench.BatchStream(10, 4, np.random.default_rng(0))
    seen = np.concatenate([s.next() for _ in range(3)])
    assert sorted(seen) == list(range(10)) and s.epoch == 0
    s.next()
    assert s.epoch == 1
