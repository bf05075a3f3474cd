import pytest
from hypothesis import settings

# numba kernels compile on first use; keep hypothesis from flagging that as slow
settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE = {}


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (title, passed, detail)


@pytest.fixture
def record():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {n:>2}. {title}: {detail}")
