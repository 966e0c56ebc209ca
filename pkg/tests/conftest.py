import pytest

from shotgenre import featurestore as fs


@pytest.fixture(scope="session")
def planted():
    """Small low-noise planted dataset shared across training tests."""
    cfg = fs.SynthConfig(num_videos=200, num_genres=5, d_v=8, d_a=8, d_l=8,
                         shots_per_video=6, frames_per_shot=3,
                         noise_sigma_v=0.05, noise_sigma_a=0.05, noise_sigma_l=0.1)
    dataset, table, truth = fs.synth_dataset(cfg, seed=77)
    return cfg, dataset, table, truth
