import json
import xml.etree.ElementTree as ET

import pytest

from demoguide import demo as demo_io
from demoguide.cli import main
from demoguide.curves import emit_curves, render_svg
from demoguide.harness import RunRecord, read_csv
from helpers import proportional_checkpoint

SMALL = ["--epochs", "2", "--steps-per-epoch", "200"]
SVG = "{http://www.w3.org/2000/svg}"


def _rec(rewards):
    return RunRecord([{"epoch": i, "env_steps": (i + 1) * 100, "mean_episode_reward": r, "pi_loss": 0.0,
                       "vf_loss": 0.0, "approx_kl": 0.0, "demo_frames_used": 0}
                      for i, r in enumerate(rewards)])


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    ck = base / "expert.json"
    proportional_checkpoint().save(ck)
    assert main(["record-demo", "--env", "point_reach", "--checkpoint", str(ck), "--episodes", "10",
                 "--out", str(base / "demo.jsonl")]) == 0
    assert main(["train", "--mode", "vanilla", "--seeds", "0,1", "--out", str(base / "van"), *SMALL]) == 0
    assert main(["train", "--mode", "guided", "--demo", str(base / "demo.jsonl"), "--seeds", "0,1",
                 "--out", str(base / "gui"), *SMALL]) == 0
    return base


def test_record_demo_output(runs):
    data = demo_io.load(runs / "demo.jsonl")
    assert data.meta["episodes"] == 10 and data.frames.done.sum() == 10
    assert main(["validate-demo", str(runs / "demo.jsonl"), "--env", "point_reach"]) == 0


def test_train_outputs(runs):
    for sub in ("van", "gui"):
        assert len(read_csv(runs / sub / "seed_1.csv").rows) == 2
        cfg = json.loads((runs / sub / "config.json").read_text())
        assert cfg["epochs"] == 2


def test_train_uses_env_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv("DEMOGUIDE_OUT", str(tmp_path / "envout"))
    assert main(["train", "--seeds", "3", *SMALL]) == 0
    assert (tmp_path / "envout" / "seed_3.csv").exists()


def test_train_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 5, "steps_per_epoch": 200, "seeds": [0]}))
    assert main(["train", "--config", str(cfg), "--epochs", "1", "--out", str(tmp_path / "o")]) == 0
    assert len(read_csv(tmp_path / "o" / "seed_0.csv").rows) == 1


def test_train_bad_config_exit_code(tmp_path, capsys):
    assert main(["train", "--mode", "guided", "--out", str(tmp_path)]) == 2
    assert "demo" in capsys.readouterr().err


def test_compare(runs, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["compare", "--guided", str(runs / "gui"), "--vanilla", str(runs / "van"),
                 "--ablation", str(runs / "gui"), "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "level" in text and "ablation final reward" in text
    report = json.loads(out.read_text())
    assert len(report["ratios"]) == 4
    assert report["ablation"]["overfit_flag"] is False


def test_plot(runs, tmp_path):
    out = tmp_path / "curves.svg"
    assert main(["plot", str(runs / "van"), str(runs / "gui"), "--out", str(out)]) == 0
    root = ET.parse(out).getroot()
    assert len(root.findall(f"{SVG}polyline")) == 2
    assert len(root.findall(f"{SVG}polygon")) == 2
    texts = [t.text for t in root.iter(f"{SVG}text")]
    assert "env steps" in texts and "mean episode reward" in texts


def test_svg_single_seed_has_no_band_and_is_deterministic(tmp_path):
    groups = {"a": [_rec([-3.0, -2.0, -1.0])]}
    svg = render_svg(groups)
    assert svg == render_svg(groups)
    root = ET.fromstring(svg)
    assert len(root.findall(f"{SVG}polygon")) == 0
    assert len(root.findall(f"{SVG}polyline")) == 1


def test_svg_median_points():
    groups = {"a": [_rec([0.0, 0.0]), _rec([1.0, 2.0]), _rec([2.0, 4.0])]}
    root = ET.fromstring(render_svg(groups))
    pts = root.find(f"{SVG}polyline").get("points").split()
    band = root.find(f"{SVG}polygon").get("points").split()
    ys = [float(p.split(",")[1]) for p in pts]
    # median curve (1, 2) sits strictly inside the band (0..2, 0..4) in pixel space
    assert len(pts) == 2 and len(band) == 4
    assert ys[1] < ys[0]


def test_plot_errors(tmp_path):
    with pytest.raises(ValueError):
        render_svg({})
    (tmp_path / "empty").mkdir()
    assert main(["plot", str(tmp_path / "empty"), "--out", str(tmp_path / "x.svg")]) == 2


def test_emit_curves_from_csv(runs, tmp_path):
    svg = emit_curves([runs / "van" / "seed_0.csv"], tmp_path / "one.svg")
    assert "seed_0" in svg
