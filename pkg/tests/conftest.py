import numpy as np
import pytest

from pspin_complexity.constants import master_seed
from pspin_complexity.potential import (
    Potential,
    example_paper_potential,
    pure_power_potential,
)


@pytest.fixture(scope="session")
def seed() -> int:
    return master_seed()


@pytest.fixture(scope="session")
def paper_potential() -> Potential:
    """V = |x|^4 - |x|^5 + |x|^6 with p = 2 (the worked example)."""
    return example_paper_potential(2)


@pytest.fixture(scope="session")
def quartic_p2() -> Potential:
    """V = x^4 with p = 2, used by the counting oracle experiments."""
    return pure_power_potential(4.0, p=2)


@pytest.fixture(scope="session")
def quartic_sextic_p3() -> Potential:
    """V = x^4 + x^6 with p = 3 (small-t limit experiments)."""
    return Potential(
        terms=((1.0, 4.0), (1.0, 6.0)), p=3, q=4.0, q1=4.0, q2=6.0, c_bound=35.0
    )


@pytest.fixture()
def rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)
