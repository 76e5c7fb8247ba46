import pytest
import torch

from rollforge.denoiser import UNetDenoiser

from helpers import TINY_CONFIG, RandomConvDenoiser


@pytest.fixture(scope="session")
def tiny_model():
    torch.manual_seed(0)
    return UNetDenoiser(TINY_CONFIG)


@pytest.fixture(scope="session")
def random_denoiser():
    return RandomConvDenoiser(seed=1)
