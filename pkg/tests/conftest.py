import numpy as np
import pytest
from hypothesis import settings

from monocount.monodromy import SolutionRegistry, registry_insert
from monocount.polysys import parse_system

# property tests draw the same instances on every run
settings.register_profile("seeded", derandomize=True, print_blob=True)
settings.load_profile("seeded")

SQUARE_ROOT = '{"vars": ["x"], "params": ["p"], "polys": [[{"c": 1, "v": {"x": 2}}, {"c": -1, "p": {"p": 1}}]]}'

# (p + 1) x^2 - p
RATIONAL = ('{"vars": ["x"], "params": ["p"], "polys": [[{"c": 1, "v": {"x": 2}, "p": {"p": 1}}, '
            '{"c": 1, "v": {"x": 2}}, {"c": -1, "p": {"p": 1}}]]}')


@pytest.fixture
def square_root():
    return parse_system(SQUARE_ROOT)


@pytest.fixture
def rational():
    return parse_system(RATIONAL)


def make_registry(system, base, points, dedup_tol=1e-6):
    reg = SolutionRegistry(system, base, dedup_tol)
    for x in points:
        registry_insert(reg, np.atleast_1d(x))
    return reg


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
