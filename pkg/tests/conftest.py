"""Shared fixtures and the acceptance-criteria summary hook."""

from __future__ import annotations

from pathlib import Path

import pytest

from casrun.scenarios import default_data_dir

TESTS_DIR = Path(__file__).parent


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return default_data_dir()


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return TESTS_DIR / "data"


@pytest.fixture(scope="session")
def conveyor_manual(data_dir: Path) -> str:
    return (data_dir / "procedures" / "conveyor_belt.proc.txt").read_text(
        encoding="utf-8"
    )


@pytest.fixture(scope="session")
def booking_routine_text(data_dir: Path) -> str:
    return (data_dir / "routines" / "train_booking.routine.txt").read_text(
        encoding="utf-8"
    )


# --- acceptance reporting -------------------------------------------------
# test_acceptance.py tags its tests with @pytest.mark.acceptance(n, label);
# the terminal summary prints one pass/fail line per criterion.

_ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(num, label): acceptance criterion metadata"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        num, label = marker.args
        _ACCEPTANCE_RESULTS[num] = (
            "PASS" if report.passed else "FAIL",
            label,
        )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE_RESULTS):
        status, label = _ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[criterion {num}] {status}: {label}")
