import contextlib
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


ACCEPTANCE: dict[int, bool] = {}


@pytest.fixture
def criterion():
    """``with criterion(n):`` records PASS/FAIL for acceptance criterion n."""
    @contextlib.contextmanager
    def run(n):
        try:
            yield
        except BaseException:
            ACCEPTANCE[n] = False
            print(f"criterion {n}: FAIL")
            raise
        ACCEPTANCE[n] = True
        print(f"criterion {n}: PASS")
    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ACCEPTANCE[n] else 'FAIL'}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_video(tmp_path):
    """Three 32x32 frames with exact flow and ground truth on disk."""
    from synth import moving_square, write_video_dir

    fr, fw, bw, gt = moving_square(n_frames=3, size=32, side=12, x0=4, y0=10)
    return write_video_dir(tmp_path / "video", fr, fw, bw, gt)


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text("cues = detector:1, flow_boundaries:1, temporal_smooth:1\n"
                    "eval.granularities = 0.2, 0.5\n")
    return path
