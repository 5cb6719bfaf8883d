import numpy as np
import pytest

from lending.services.core import UtilityConfig
from lending.services.datagen import ApplicantPool


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def utility():
    return UtilityConfig(interest_rate=0.35, subsidy=0.0)


@pytest.fixture
def uniform_pool():
    """Every applicant returns with probability 0.8."""
    features = np.random.default_rng(3).uniform(0.0, 4.0, (500, 3))
    return ApplicantPool(features, np.full(500, 0.8), np.ones(500, dtype=np.int64))


@pytest.fixture
def csv_pool(tmp_path):
    """Write a two-feature CSV pool with constant return probability; returns the `csv:` name."""
    def make(prob, rows=200, name='pool.csv'):
        rng = np.random.default_rng(11)
        lines = ['a,b,prob'] + [f"{a:.4f},{b:.4f},{prob}" for a, b in rng.uniform(0.0, 4.0, (rows, 2))]
        path = tmp_path / name
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        return f'csv:{path}'
    return make
