import sys
from pathlib import Path

import numpy as np
import pytest

from rdlasso import Dataset

sys.path.insert(0, str(Path(__file__).parent))


def random_instance(rng, n=200, p=10, signal=1.0):
    """A small estimation problem with a few informative covariates."""
    x = rng.uniform(-1.0, 1.0, size=n)
    z = rng.standard_normal((n, p))
    coef = np.zeros(p)
    coef[: min(3, p)] = signal * np.array([1.0, -0.5, 0.25])[: min(3, p)]
    y = (0.3 + 0.4 * (x >= 0) + 0.8 * x - 0.3 * x * (x >= 0)
         + z @ coef + 0.5 * rng.standard_normal(n))
    return Dataset(y=y, x=x, z=z)


@pytest.fixture
def rng():
    return np.random.default_rng(171)
