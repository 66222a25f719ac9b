import numpy as np
import pytest
import torch

from chromaflow.synthetic import Shape, SyntheticScene, render_scene


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_scene(frames=5, seed=3, size=(64, 64)):
    return SyntheticScene(
        size=size,
        frames=frames,
        seed=seed,
        shapes=[
            Shape("disc", color=(0.4, -0.3), velocity=(2, 1), position=(20, 22), radius=9),
            Shape("rectangle", color=(-0.5, 0.2), velocity=(-1, 1), position=(38, 36), size=(14, 12)),
        ],
    )


@pytest.fixture(scope="session")
def scene_render():
    return render_scene(small_scene())
