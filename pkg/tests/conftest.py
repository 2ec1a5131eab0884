import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _recipes import BUDGET  # noqa: E402


@pytest.fixture(scope="session")
def budget():
    return BUDGET
