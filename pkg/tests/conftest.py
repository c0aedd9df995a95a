import numpy as np
import pytest

_CRITERIA: list[tuple[str, bool, str]] = []


class CriterionLog:
    def record(self, name: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA.append((name, bool(ok), detail))
        print(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok


@pytest.fixture
def criterion():
    return CriterionLog()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
