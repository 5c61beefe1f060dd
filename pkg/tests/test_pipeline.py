import json

import numpy as np
import pytest

from vidbound import fileio
from vidbound.config import load_config
from vidbound.pipeline import StageError, read_video_dir, run_pipeline
from vidbound.raster import RasterError


def test_outputs_and_determinism(tmp_path, small_video, fast_config):
    cfg = load_config(fast_config)
    a = run_pipeline(cfg, small_video, tmp_path / "a")
    b = run_pipeline(cfg, small_video, tmp_path / "b", jobs=2)
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    assert a == b
    names = set(a["artifacts"])
    for t in range(3):
        assert {f"merged_{t:05d}.pfm", f"ucm_{t:05d}_tree.txt", f"video_{t:05d}.png"} <= names
    assert {"bpr.csv", "vpr.csv", "summary.txt"} <= names
    assert 0 <= a["summary"]["vpr.ods"] <= 1
    timings = json.loads((tmp_path / "a" / "timings.json").read_text())
    assert "merge" in timings


def test_resume_reuses_outputs(tmp_path, small_video, fast_config, monkeypatch):
    cfg = load_config(fast_config)
    first = run_pipeline(cfg, small_video, tmp_path / "o")

    def forbidden(*_a, **_k):
        raise AssertionError("merge recomputed on resume")

    monkeypatch.setattr("vidbound.pipeline._merge_frame", forbidden)
    again = run_pipeline(cfg, small_video, tmp_path / "o", resume=True)
    assert again == first
    assert "resume" in json.loads((tmp_path / "o" / "timings.json").read_text())


def test_missing_frames(tmp_path, small_video):
    (small_video / "frame_00001.png").unlink()
    with pytest.raises(RasterError):
        read_video_dir(small_video)
    with pytest.raises(RasterError):
        read_video_dir(tmp_path / "nope")


def test_stage_error_names_stage(tmp_path, small_video, fast_config, monkeypatch):
    def broken(*_a, **_k):
        raise ValueError("boom")

    monkeypatch.setattr("vidbound.pipeline.extract_superpixels", broken)
    with pytest.raises(StageError) as exc:
        run_pipeline(load_config(fast_config), small_video, tmp_path / "o")
    assert exc.value.stage == "superpixels"


def test_estimates_flow_without_flo_files(tmp_path, small_video, fast_config):
    for p in small_video.glob("*.flo"):
        p.unlink()
    m = run_pipeline(load_config(fast_config), small_video, tmp_path / "o")
    assert m["frames"] == 3
    seg = [fileio.load_labels(tmp_path / "o" / f"video_{t:05d}.png") for t in range(3)]
    assert all(s.shape == (32, 32) for s in seg)
    assert np.unique(np.stack(seg)).size >= 2
