import time
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"
SUITE_BUDGET_S = 300.0

# filled by test_acceptance.py; printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
_START = time.perf_counter()


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


def write_tsv(path: Path, header: list[str], rows: list[list]) -> Path:
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def pytest_sessionfinish(session, exitstatus):
    # criterion 6 also bounds the whole suite's wall time
    if 6 in ACCEPTANCE:
        elapsed = time.perf_counter() - _START
        ok, detail = ACCEPTANCE[6]
        within = elapsed < SUITE_BUDGET_S
        ACCEPTANCE[6] = (ok and within, f"{detail}; suite runtime {elapsed:.0f}s (budget {SUITE_BUDGET_S:.0f}s)")
        if not within:
            session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
