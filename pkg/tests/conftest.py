import numpy as np
import pytest

from delaywave import run_mode
from delaywave.scenario import bundled


@pytest.fixture(scope="session")
def sec4():
    return bundled("sec4_tau01")


@pytest.fixture(scope="session")
def sec4_full_run(sec4):
    """The section-4 closed loop at tau = 0.1 with diagnostics, run once."""
    return run_mode(sec4, "full", diagnostics=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance report ---------------------------------------------------------------
# Each criterion may be checked by several tests; its line reads PASS only when
# every recorded part passed.

_CRITERIA = {}


class _Criterion:
    def record(self, number: int, ok: bool, detail: str) -> bool:
        _CRITERIA.setdefault(number, []).append((bool(ok), detail))
        status = "PASS" if ok else "FAIL"
        print(f"criterion {number:>2}: {status}  {detail}")
        return bool(ok)


@pytest.fixture(scope="session")
def criterion():
    return _Criterion()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
