"""Shared fixtures: deterministic trained units reused across test modules."""

import pytest
from hypothesis import HealthCheck, settings

from rbmlogic.training import TrainConfig, train

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def trained_adder1():
    """1-bit adder, 6 hidden units, default schedule."""
    return train("adder1", 6, TrainConfig(seed=0))


@pytest.fixture(scope="session")
def trained_mult2():
    """2-bit multiplier, 12 hidden units, default schedule."""
    return train("mult2", 12, TrainConfig(seed=0))


@pytest.fixture(scope="session")
def trained_adder4():
    """4-bit adder, 64 hidden units; seed 1 reaches a perfect table."""
    return train("adder4", 64, TrainConfig(seed=1))


@pytest.fixture(scope="session")
def trained_mult4():
    """4-bit multiplier, 64 hidden units; longer stages for a hard table."""
    return train(
        "mult4", 64,
        TrainConfig(seed=0, epochs_per_stage=30, k_max=30, patience=4),
    )
