import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from util import gender_age_dataset


@pytest.fixture
def worked_pair_dataset():
    return gender_age_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
