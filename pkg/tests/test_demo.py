import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demoguide import demo, envs
from demoguide.errors import DemoFormatError
from demoguide.rollout import Frames
from helpers import proportional_checkpoint

SPEC = envs.make_env("point_reach")


def test_record_single_episode_counts_frames():
    data = demo.record(SPEC, proportional_checkpoint(), 1, rng=np.random.default_rng(0))
    assert data.frames.done[-1] and data.frames.done.sum() == 1
    assert 1 <= len(data) <= SPEC.horizon
    assert data.meta["episodes"] == 1 and data.meta["env"] == "point_reach"


def test_record_mean_reward_recomputed():
    data = demo.record(SPEC, proportional_checkpoint(), 5, rng=np.random.default_rng(1))
    assert data.meta["mean_episode_reward"] == np.mean(demo.episode_returns(data))
    assert len(demo.episode_returns(data)) == 5


def test_record_deterministic_given_seed():
    a = demo.record(SPEC, proportional_checkpoint(), 3, rng=np.random.default_rng(4))
    b = demo.record(SPEC, proportional_checkpoint(), 3, rng=np.random.default_rng(4))
    assert a == b
    c = demo.record(SPEC, proportional_checkpoint(), 3, deterministic=False, rng=np.random.default_rng(4))
    assert np.all(np.abs(c.frames.a) <= 1.0)


def test_controller_reaches_targets():
    data = demo.record(SPEC, proportional_checkpoint(), 10, rng=np.random.default_rng(2))
    # successful episodes end before the horizon
    assert len(data) < 10 * SPEC.horizon
    assert demo.validate(data, SPEC).passed


def test_record_rejects_zero_episodes():
    with pytest.raises(ValueError):
        demo.record(SPEC, proportional_checkpoint(), 0)


def test_returns_to_go_restart_per_episode():
    data = demo.record(SPEC, proportional_checkpoint(), 2, rng=np.random.default_rng(3))
    g = demo.returns_to_go(data, 1.0)
    ends = np.flatnonzero(data.frames.done)
    assert g[0] == pytest.approx(demo.episode_returns(data)[0], abs=1e-9)
    assert g[ends[0] + 1] == pytest.approx(demo.episode_returns(data)[1], abs=1e-9)


def _random_dataset(rng):
    n_ep = int(rng.integers(1, 5))
    lengths = rng.integers(1, 12, size=n_ep)
    n = int(lengths.sum())
    done = np.zeros(n, dtype=bool)
    done[np.cumsum(lengths) - 1] = True
    scale = 10.0 ** rng.integers(-6, 6)
    fr = Frames(rng.normal(size=(n, 6)) * scale, rng.normal(size=(n, 6)), rng.normal(size=n),
                rng.uniform(-1, 1, size=(n, 2)), done)
    meta = {"env": "point_reach", "checkpoint_id": "abc", "episodes": n_ep,
            "mean_episode_reward": float(rng.normal())}
    return demo.DemoDataset(fr, meta)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_jsonl_roundtrip_identity(seed, tmp_path_factory):
    data = _random_dataset(np.random.default_rng(seed))
    path = tmp_path_factory.mktemp("demo") / "d.jsonl"
    demo.save(data, path)
    back = demo.load(path)
    assert back == data
    assert back.frames.s.tobytes() == data.frames.s.tobytes()


def test_truncated_file_reports_line(tmp_path):
    data = _random_dataset(np.random.default_rng(0))
    path = tmp_path / "d.jsonl"
    demo.save(data, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DemoFormatError, match="truncated"):
        demo.load(path)
    path.write_text("\n".join(lines[:2] + ['{"s": [1, 2'] + lines[3:]) + "\n")
    with pytest.raises(DemoFormatError, match="line 3"):
        demo.load(path)


def test_bad_meta_and_empty(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("")
    with pytest.raises(DemoFormatError):
        demo.load(path)
    path.write_text(json.dumps({"frames": []}) + "\n")
    with pytest.raises(DemoFormatError, match="line 1"):
        demo.load(path)
    with pytest.raises(DemoFormatError):
        demo.save(demo.DemoDataset(Frames.empty(6, 2)), path)


def test_validate_flags_problems():
    data = demo.record(SPEC, proportional_checkpoint(), 2, rng=np.random.default_rng(0))
    assert demo.validate(data, SPEC).passed
    fr = data.frames
    broken = Frames(fr.s.copy(), fr.s_next.copy(), fr.r.copy(), fr.a.copy(), fr.done.copy())
    broken.r[0] = np.nan
    broken.s[1, 0] += 1.0
    broken.done[-1] = False
    report = demo.validate(demo.DemoDataset(broken, data.meta), SPEC)
    reasons = [msg for _, msg in report.failures]
    assert not report.passed
    assert "non-finite r" in reasons
    assert any("s_next differs" in m for m in reasons)
    assert any("last frame" in m for m in reasons)
    assert any("meta declares" in m for m in reasons)
    wrong_dims = demo.validate(data, envs.EnvSpec("point_reach", obs_dim=4))
    assert not wrong_dims.passed
