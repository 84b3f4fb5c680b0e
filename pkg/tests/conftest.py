import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vplat.platform import property_catalog  # noqa: E402


@pytest.fixture
def props():
    return property_catalog()


@pytest.fixture
def quiet_props():
    """Catalog with the compiled fast path off: pure interpreter runs."""
    catalog = property_catalog()
    catalog.set("system.cpu.turbo", False)
    return catalog
