import sys
from pathlib import Path

import pytest

from abexrat import backends

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(params=backends.available())
def backend(request):
    """Run the test once per importable kernel backend."""
    with backends.use(request.param) as be:
        yield be
