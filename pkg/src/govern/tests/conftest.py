"""Shared fixtures for the govern tests."""

import numpy as np
import pytest

from govern.mcg import GovernorWeights
from govern.plant import (
    CombinedOutputPlant,
    DualOutputPendulum,
    InputInterval,
    LinearPlant,
    PendulumPlant,
)


@pytest.fixture(scope='session')
def base_config():
    from govern.tests.tests import mock_config

    return mock_config


@pytest.fixture
def pendulum():
    """The single-output pendulum with its default parameters."""
    return PendulumPlant()


@pytest.fixture
def dual_pendulum():
    """The pendulum with an additional rate constraint."""
    return DualOutputPendulum()


@pytest.fixture
def linear_plant():
    """A stable second-order linear plant constrained to ``x1 <= 1``.

    Its rest state under a constant command ``v`` is ``[v, 0]``.
    """
    base = LinearPlant(
        A=[[1.0, 0.1], [-0.05, 0.9]],
        B=[0.0, 0.05],
        C=[[1.0, 0.0]],
        D=[0.0],
        input_interval=InputInterval(-2.0, 2.0),
    )
    return CombinedOutputPlant(base, [[1.0]], [-1.0])


@pytest.fixture
def weights():
    return GovernorWeights()


@pytest.fixture
def short_weights():
    return GovernorWeights(horizon=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
