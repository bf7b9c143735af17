import numpy as np
import pytest

from sr3d.pipeline import PipelineConfig
from sr3d.pos_embed import SinusoidConfig
from sr3d.scene import save_scene
from sr3d.synth import make_scene


def small_config(**overrides) -> PipelineConfig:
    """Pipeline config scaled down for fast tests (constants still divisible)."""
    kwargs = dict(
        frame_count=4,
        token_dim=12,
        sinusoid=SinusoidConfig(channels_per_axis=8),
        seed=0,
    )
    kwargs.update(overrides)
    return PipelineConfig(**kwargs)


@pytest.fixture
def small_scene():
    return make_scene(seed=3, n_frames=4, n_boxes=6)


@pytest.fixture
def scene_manifest(tmp_path):
    scene = make_scene(seed=3, n_frames=4, n_boxes=6)
    return save_scene(scene, tmp_path / "scene")


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


_acceptance_results = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _acceptance_results:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}: {name}")
