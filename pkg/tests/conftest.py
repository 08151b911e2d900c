import numpy as np
import pytest

from srminimal.presets import heisenberg, rototranslation


def pytest_addoption(parser):
    parser.addoption("--regen-goldens", action="store_true", default=False,
                     help="rewrite tests/golden/*.json from the current code")


@pytest.fixture(scope="session")
def regen_goldens(request):
    return request.config.getoption("--regen-goldens")


@pytest.fixture(scope="session")
def h1():
    return heisenberg()


@pytest.fixture(scope="session")
def h1_mirror():
    return heisenberg(vertical=-1)


@pytest.fixture(scope="session")
def e2():
    return rototranslation()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.notes = number, title, []

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.number:>2} {status}: {self.title}"
        if self.notes:
            line += " [" + "; ".join(self.notes) + "]"
        if exc_type is not None and exc is not None:
            line += f" ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        _ACCEPTANCE.append((self.number, line))
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
