import numpy as np
import pytest
from hypothesis import settings

from ffdgan.grammar import GrammarConfig, generate_wing

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_cfg():
    return GrammarConfig(M=9, N=65)


@pytest.fixture(scope="session")
def small_wings(small_cfg):
    """A handful of grammar wings at reduced resolution."""
    return np.stack([generate_wing(small_cfg, 3, i) for i in range(24)])


@pytest.fixture(scope="session")
def wing(small_wings):
    return small_wings[0]


def box_grid(rng, M=5, N=9):
    """Random grid with points strictly inside the unit cube."""
    return rng.uniform(0.05, 0.95, (M, N, 3))


# --- acceptance reporting -------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title, self.details = number, title, []

    def note(self, text: str):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.details)
        if exc is not None:
            detail = (detail + "; " if detail else "") + f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        _CRITERIA[self.number] = (status, self.title, detail)
        print(f"CRITERION {self.number} {status}: {self.title} | {detail}")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[k]
        terminalreporter.write_line(f"{status} criterion {k}: {title} | {detail}")
