import json

import numpy as np
import pytest

from lwr_fno import io
from lwr_fno.cli import main


@pytest.fixture
def tiny_config(tmp_path):
    raw = io.load_config("desk").to_dict()
    raw["grid"] = {"nx": 16, "nt": 40, "dx": 100.0, "dt": 5.0}
    raw["fno"].update(n_layers=1, modes=[3, 5], width=4, proj_hidden=8)
    raw["train"].update(epochs=2, batch_size=4)
    raw["data"].update(ic_classes=[0, 1], bc_classes=[0, 1], samples_per_class_pair=2,
                       min_segment=2)
    raw["evaluation"].update(ic_classes=[0, 1, 2], bc_classes=[0, 1, 2], samples_per_class=2)
    raw["val_fraction"] = 0.5
    raw["lambdas"] = [0.0, 1.0]
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(raw))
    return path


def test_generate_data_is_byte_identical(tiny_config, tmp_path):
    assert main(["generate-data", "--config", str(tiny_config), "--out", str(tmp_path / "a")]) == 0
    assert main(["generate-data", "--config", str(tiny_config), "--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 2 * 8 + 1
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    main(["generate-data", "--config", str(tiny_config), "--out", str(tmp_path / "c"),
          "--seed", "5"])
    assert (tmp_path / "c" / "field_00000.f64").read_bytes() != \
        (tmp_path / "a" / "field_00000.f64").read_bytes()


def test_train_evaluate_pipeline(tiny_config, tmp_path):
    data, ckpt = tmp_path / "data", tmp_path / "model.ckpt"
    assert main(["generate-data", "--config", str(tiny_config), "--out", str(data)]) == 0
    assert main(["train", "--config", str(tiny_config), "--data", str(data),
                 "--out", str(ckpt)]) == 0
    loss = io.read_csv(tmp_path / "model.ckpt.loss.csv")
    assert len(loss) == 2 and list(loss[0]) == list(io.LOSS_HEADER)
    assert io.load_checkpoint(ckpt).train.lam == 2.0

    report = tmp_path / "report.csv"
    assert main(["evaluate", "--ckpt", str(ckpt), "--classes", "i0..i2", "--samples", "2",
                 "--out", str(report)]) == 0
    rows = io.read_csv(report)
    assert [r["class"] for r in rows] == ["i0", "i1", "i2"]
    for r in rows:
        assert 0 <= float(r["mean_mae"]) <= 120
        assert float(r["mean_mae_pct"]) == pytest.approx(float(r["mean_mae"]) / 1.2)


def test_lambda_sweep(tiny_config, tmp_path, capsys):
    data = tmp_path / "data"
    main(["generate-data", "--config", str(tiny_config), "--out", str(data)])
    out = tmp_path / "sweep.csv"
    assert main(["lambda-sweep", "--config", str(tiny_config), "--data", str(data),
                 "--epochs", "1", "--out", str(out)]) == 0
    rows = io.read_csv(out)
    assert [float(r["lambda"]) for r in rows] == [0.0, 1.0]
    (chosen,) = [r for r in rows if r["selected"] == "1"]
    assert float(capsys.readouterr().out.strip().splitlines()[-1]) == float(chosen["lambda"])


def test_simulate_constant_ic(tiny_config, tmp_path):
    out = tmp_path / "field.f64"
    assert main(["simulate", "--config", str(tiny_config), "--ic-class", "0",
                 "--bc-class", "0", "--constant-ic", "30", "--out", str(out)]) == 0
    meta = json.loads((tmp_path / "field.f64.json").read_text())
    field = np.fromfile(out, dtype="<f8").reshape(meta["shape"])
    assert field.shape == (16, 40)
    np.testing.assert_allclose(field, 30.0, atol=1e-12)


def test_invalid_config_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"nx": 32, "nt": 120, "dx": 100.0, "dt": 10.0}}))
    assert main(["generate-data", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path, capsys):
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"hello world, not a model")
    assert main(["evaluate", "--ckpt", str(junk), "--classes", "i0", "--out",
                 str(tmp_path / "r.csv")]) == 2
    assert "magic" in capsys.readouterr().err


def test_gradcheck_command():
    assert main(["gradcheck"]) == 0
