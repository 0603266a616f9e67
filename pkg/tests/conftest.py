import numpy as np
import pytest

from layerprobe.encoder import EncoderConfig, random_model

TOY_CONV = ((32, 10, 5), (32, 8, 4), (32, 8, 4), (32, 8, 4), (32, 4, 2))


@pytest.fixture(scope="session")
def toy_config():
    return EncoderConfig(
        num_layers=4, hidden_dim=16, num_heads=4, ffn_dim=32, conv_stack=TOY_CONV
    )


@pytest.fixture(scope="session")
def toy_model(toy_config):
    return random_model(toy_config, seed=123)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
