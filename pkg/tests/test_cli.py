import json
import subprocess
import sys

import numpy as np
import pytest

from nearconvex.cli import main
from nearconvex.dataset import WeightedPointSet, load_csv, save_csv
from nearconvex.fsvd import FSvd
from nearconvex.sensitivity import SensitivityProfile


@pytest.fixture
def data(tmp_path, rng):
    X = rng.standard_normal((120, 3))
    y = np.where(np.arange(120) % 2 == 0, 1.0, -1.0)
    path = tmp_path / "in.csv"
    save_csv(path, WeightedPointSet(X, None, y), write_weights=False)
    return path


def test_build(tmp_path, data):
    out = tmp_path / "cs.csv"
    js = tmp_path / "f.json"
    assert main(["-q", "build", "--input", str(data), "--loss", "lz", "--z", "2", "--size", "30",
                 "--seed", "1", "--output", str(out), "--fsvd-output", str(js)]) == 0
    cs = load_csv(out)
    assert cs.n == 30 and cs.labels is not None
    header = out.read_text().splitlines()[0]
    assert header == "f0,f1,f2,label,weight,source_row"
    fs = FSvd.from_json(js)
    assert fs.d == 3 and fs.backend == "quadratic-exact"


def test_build_deterministic(tmp_path, data):
    outs = [tmp_path / f"{k}.csv" for k in range(2)]
    for o in outs:
        main(["-q", "build", "--input", str(data), "--loss", "outlier", "--z", "1", "--size", "25",
              "--seed", "3", "--output", str(o)])
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_build_merge_duplicates(tmp_path, data):
    out = tmp_path / "m.csv"
    main(["-q", "build", "--input", str(data), "--loss", "lz", "--z", "2", "--size", "500",
          "--seed", "0", "--output", str(out), "--merge-duplicates"])
    rows = out.read_text().splitlines()[1:]
    src = [r.split(",")[-1] for r in rows]
    assert len(src) == len(set(src)) < 500


def test_sensitivities(tmp_path, data):
    out = tmp_path / "s.csv"
    assert main(["-q", "sensitivities", "--input", str(data), "--loss", "logistic", "--lambda", "4",
                 "--unit-norm", "--output", str(out)]) == 0
    prof = SensitivityProfile.from_csv(out)
    assert prof.n == 120 and prof.loss == "logistic"
    assert out.read_text().splitlines()[1] == "source_row,sensitivity"


def test_logistic_without_unit_norm_fails(tmp_path, data, capsys):
    code = main(["sensitivities", "--input", str(data), "--loss", "logistic",
                 "--output", str(tmp_path / "s.csv")])
    assert code == 2
    assert "norm" in capsys.readouterr().err


def test_bad_lambda_rejected(tmp_path, data):
    with pytest.raises(SystemExit):
        main(["sensitivities", "--input", str(data), "--loss", "svm", "--lambda", "0.5",
              "--output", str(tmp_path / "s.csv")])


def test_bad_input_reports_row(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("f0,f1\n1,2\n3,oops\n")
    assert main(["build", "--input", str(bad), "--loss", "lz", "--size", "2", "--seed", "0",
                 "--output", str(tmp_path / "o.csv")]) == 2
    assert "row 2" in capsys.readouterr().err


def test_bench_synth(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["-q", "bench", "--synth", "outlier,300,3", "--loss", "lz", "--z", "1",
                 "--sizes", "20:60:3", "--trials", "2", "--seed", "0", "--output", str(out),
                 "--no-timing"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "size,method,trial,eps,build_time_ms" and len(lines) == 1 + 3 * 2 * 2
    summ = (tmp_path / "r_summary.csv").read_text().splitlines()
    assert summ[0] == "size,method,mean_eps,std_eps" and len(summ) == 1 + 6


def test_stream(tmp_path, data):
    out, prov = tmp_path / "st.csv", tmp_path / "p.json"
    assert main(["-q", "stream", "--input", str(data), "--loss", "lz", "--z", "2", "--leaf", "8",
                 "--epsilon", "0.5", "--delta", "0.1", "--stream-horizon", "120", "--seed", "0",
                 "--output", str(out), "--max-node-size", "20", "--provenance", str(prov)]) == 0
    cs = load_csv(out)
    assert cs.n <= 20
    doc = json.loads(prov.read_text())
    assert doc["seen"] == 120 and doc["max_live"] <= doc["height"] + 1


def test_entry_point_runs(data, tmp_path):
    res = subprocess.run([sys.executable, "-m", "nearconvex.cli", "-q", "sensitivities", "--input",
                          str(data), "--loss", "lse", "--output", str(tmp_path / "s.csv")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
