import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pncsim import pnc_core


@pytest.fixture(scope="session")
def constellation():
    return pnc_core.QamConstellation.default_4qam()


@pytest.fixture(scope="session")
def catalog(constellation):
    """The regenerated mapping catalog; built once per test session."""
    return pnc_core.offline_search(constellation)
