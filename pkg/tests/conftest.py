import random

import pytest

from trufl.pki import TestProvider


@pytest.fixture
def provider():
    return TestProvider(seed=7)


@pytest.fixture
def rng():
    return random.Random(1234)
