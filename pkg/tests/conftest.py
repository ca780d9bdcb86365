import numpy as np
import pytest

from unite.data import ClassSpec, SynthSpec, synth_dataset
from unite.model import ModelConfig


TINY = ModelConfig(n_f=4, t_s=16, d_s=8, grid_g=2, d_model=16, n_h=4,
                   depth=2, mlp_ratio=2, dropout_rate=0.1, n_c=2)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A 24-video binary synthetic dataset shared across test modules."""
    out = tmp_path_factory.mktemp("smallds")
    spec = SynthSpec(
        n_videos=24, t_s=16, d_s=8, seed=3, test_fraction=0.25,
        frames_min=12, frames_max=20,
        classes=[
            ClassSpec(0, "real", "real", 0.5),
            ClassSpec(1, "face", "face", 0.25, 1.0),
            ClassSpec(1, "background", "background", 0.25, 1.0),
        ])
    manifest = synth_dataset(spec, out)
    return out / "manifest.json", manifest


@pytest.fixture
def rng():
    return np.random.default_rng(0)
