import warnings

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# criterion id -> (passed, detail); filled by the acceptance suite
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(cid, passed, detail=""):
        # a criterion checked in several parts passes only if all parts do
        if cid in ACCEPTANCE:
            ok, prev = ACCEPTANCE[cid]
            ACCEPTANCE[cid] = (ok and bool(passed), f"{prev}; {detail}")
        else:
            ACCEPTANCE[cid] = (bool(passed), detail)

    return _record


@pytest.fixture(autouse=True)
def _quiet_mode_cap():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*exceeds the recommended cap.*")
        yield


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
