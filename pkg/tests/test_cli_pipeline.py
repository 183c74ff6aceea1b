import json

import numpy as np
import pytest

from sewrecon.cli import main, read_cloud
from sewrecon.dataio import GarmentDataset, NormalizationStats
from sewrecon.pattern import load_pattern, validate_pattern
from sewrecon.pipeline import EvalOptions, ShapePredictor, StatsMismatch, evaluate, report_json, write_svg

TINY = ["--set", "epochs=2", "--set", "batch_size=8", "--set", "n_points=64", "--set", "width_divisor=8",
        "--set", "stitch_epochs=2", "--set", "stitch_batch=8"]


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    data = tmp / "data"
    assert main(["gen-synthetic", "--data", str(data), "--families", "skirt=5,top=5,dress=2",
                 "--n-val", "1", "--n-test", "1"]) == 0
    assert main(["prepare-data", "--data", str(data), "--n-points", "64"]) == 0
    assert main(["train-shape", "--data", str(data), "--out", str(tmp / "run"), *TINY]) == 0
    return tmp, data, tmp / "run" / "shape.pt"


def test_usage_errors_exit_1(capsys):
    assert main(["train-shape", "--out", "x", "--set", "epochs"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["evaluate"])
    assert exc.value.code == 1


def test_unknown_config_key_is_usage_error(tmp_path):
    assert main(["train-shape", "--data", str(tmp_path), "--out", str(tmp_path), "--set", "epochz=3"]) == 1


def test_missing_data_root_is_runtime_error(tmp_path, monkeypatch):
    monkeypatch.delenv("SEWRECON_DATA", raising=False)
    assert main(["prepare-data", "--data", str(tmp_path / "nowhere")]) == 2
    assert main(["prepare-data"]) == 1


def test_env_data_root(cli_run, monkeypatch, tmp_path):
    _, data, shape = cli_run
    monkeypatch.setenv("SEWRECON_DATA", str(data))
    out = tmp_path / "r.json"
    assert main(["evaluate", "--shape", str(shape), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert set(rep["splits"]) == {"test_seen", "test_unseen"}
    assert rep["splits"]["test_seen"]["aggregate"]["n"] == 2


def test_train_stitch_cli(cli_run):
    tmp, data, shape = cli_run
    assert main(["train-stitch", "--data", str(data), "--shape", str(shape), "--source", "gt",
                 "--out", str(tmp / "run"), *TINY]) == 0
    assert (tmp / "run" / "stitch_gt.pt").exists()
    assert main(["evaluate", "--data", str(data), "--shape", str(shape), "--stitch",
                 str(tmp / "run" / "stitch_gt.pt"), "--out", str(tmp / "s.json")]) == 0
    agg = json.loads((tmp / "s.json").read_text())["splits"]["test_seen"]["aggregate"]
    assert "recall" in agg


def test_predict_batch_continues_after_bad_file(cli_run, tmp_path, capsys):
    _, data, shape = cli_run
    ds = GarmentDataset(data)
    good = tmp_path / "good.npy"
    np.save(good, ds.cloud(ds.split.test_seen[0], 64, 0).points)
    np.savetxt(tmp_path / "good2.xyz", ds.cloud(ds.split.test_seen[1], 64, 0).points)
    (tmp_path / "bad.xyz").write_text("1 2\nnot numbers\n")
    out = tmp_path / "out"
    code = main(["predict", "--shape", str(shape), "--out", str(out),
                 str(good), str(tmp_path / "bad.xyz"), str(tmp_path / "good2.xyz")])
    assert code == 2
    assert "bad.xyz: error" in capsys.readouterr().err
    for stem in ("good", "good2"):
        p = load_pattern(out / f"{stem}.json")
        assert (out / f"{stem}.log").exists()
        problems = [v for v in validate_pattern(p) if "loop not closed" not in v]
        assert problems == []


def test_read_cloud_formats(tmp_path):
    pts = np.arange(12, dtype=float).reshape(4, 3)
    np.savetxt(tmp_path / "a.csv", pts, delimiter=",")
    np.testing.assert_array_equal(read_cloud(tmp_path / "a.csv"), pts)
    with pytest.raises(ValueError):
        read_cloud(tmp_path / "a.ply")


def test_evaluate_deterministic_and_noise_sweep(cli_run, tmp_path):
    _, data, shape = cli_run
    ds = GarmentDataset(data)
    a = report_json(evaluate(shape, ds, options=EvalOptions(seed=1, sigma=0.3)))
    b = report_json(evaluate(shape, GarmentDataset(data), options=EvalOptions(seed=1, sigma=0.3)))
    assert a == b
    out = tmp_path / "sweep.json"
    assert main(["noise-sweep", "--data", str(data), "--shape", str(shape), "--sigmas", "0", "0.5",
                 "--out", str(out)]) == 0
    sweep = json.loads(out.read_text())
    assert sweep["sigmas"] == [0.0, 0.5] and len(sweep["table"]) == 2


def test_evaluate_refuses_mismatched_stats(cli_run, tmp_path):
    import shutil
    _, data, shape = cli_run
    copy = tmp_path / "copy"
    shutil.copytree(data, copy)
    s = NormalizationStats.load(copy / "norm_stats.json")
    s.points_std = s.points_std * 2
    s.save(copy / "norm_stats.json")
    with pytest.raises(StatsMismatch):
        evaluate(shape, GarmentDataset(copy))
    assert main(["evaluate", "--data", str(copy), "--shape", str(shape)]) == 2


def test_predictor_roundtrip_and_svg(cli_run, tmp_path):
    _, data, shape = cli_run
    ds = GarmentDataset(data)
    pred = ShapePredictor.from_checkpoint(shape)
    sid = ds.split.train[0]
    a = pred.predict_ids(ds, [sid])[0]
    b = pred.predict_ids(ds, [sid])[0]
    assert json.dumps(sorted(a.panels)) == json.dumps(sorted(b.panels))
    write_svg(a, ds.pattern(sid), tmp_path / "p.svg")
    assert (tmp_path / "p.svg").read_text().startswith("<svg")
