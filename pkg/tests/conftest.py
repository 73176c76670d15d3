from pathlib import Path

import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist-desk"
MNIST_IMAGES = MNIST_DIR / "images-idx3-ubyte.gz"
MNIST_LABELS = MNIST_DIR / "labels-idx1-ubyte.gz"

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mnist_paths():
    if not (MNIST_IMAGES.exists() and MNIST_LABELS.exists()):
        pytest.skip("desk MNIST not present; run scripts/fetch_mnist_desk.py")
    return str(MNIST_IMAGES), str(MNIST_LABELS)


def pytest_configure(config):
    config._criteria_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_criteria_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record and print one pass/fail line: ``criterion(n, name, passed, detail)``."""
    def report(number, name, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        request.config._criteria_lines.append(line)
        print(line)
        assert passed, line
    return report
