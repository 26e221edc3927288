import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ebssa.templates import build_templates


@pytest.fixture(scope="session")
def bank():
    return build_templates(36, 7)
