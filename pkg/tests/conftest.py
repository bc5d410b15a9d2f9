import pathlib
import sys

import pytest

from qpalg.cli import fixture_path
from qpalg.syntax import parse_program

sys.path.insert(0, str(pathlib.Path(__file__).parent))


def load(name):
    return parse_program(fixture_path(name).read_text())


@pytest.fixture
def fixture():
    return load
