import numpy as np
import pytest
from hypothesis import settings

from ioi_attack.image_core import Image

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")

from acceptance_log import RESULTS as ACCEPTANCE


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng, h, w, c=3):
    return Image(rng.random((h, w, c)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
