from __future__ import annotations

from pathlib import Path

import pytest

from miniric.demos import DEMOS, descriptor_path, schema_path
from miniric.ric import NearRtRic

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE = {
    "test_ac01_route_table_conformance": "AC1 route-table conformance",
    "test_ac02_distribution_semantics": "AC2 distribution semantics",
    "test_ac03_lifecycle_conformance": "AC3 lifecycle conformance",
    "test_ac04_a1_flow": "AC4 A1 policy flow",
    "test_ac05_subscription_protocol": "AC5 subscription protocol",
    "test_ac06_merge_semantics": "AC6 subscription merge semantics",
    "test_ac07_telemetry_loop": "AC7 telemetry loop",
    "test_ac08_sdl_semantics": "AC8 SDL semantics",
    "test_ac09_teardown_invariant": "AC9 teardown invariant",
    "test_ac10_end_to_end_demo": "AC10 end-to-end demo",
}
_outcomes: dict[str, list[str]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def ric(tmp_path) -> NearRtRic:
    return NearRtRic(workdir=tmp_path / "run")


@pytest.fixture
def demo_ric(ric) -> NearRtRic:
    """A platform with one reference gNodeB and every demo chart onboarded."""
    ric.add_gnb()
    for name in DEMOS:
        ric.appmgr.onboard(descriptor_path(name), schema_path(name))
    return ric


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    func = report.nodeid.split("::")[-1].split("[")[0]
    if func not in ACCEPTANCE:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(func, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for func, label in ACCEPTANCE.items():
        results = _outcomes.get(func)
        if results is None:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"{status:7} {label}")
