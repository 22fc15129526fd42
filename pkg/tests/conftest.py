from pathlib import Path

import numpy as np
import pytest

from ssvepbench.core import AcquisitionConfig, Epoch

FIXTURE_DIR = Path(__file__).parent / "fixtures"


_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS, key=lambda n: int(n.split("_")[2])):
        label = name.split("_", 3)[-1].replace("_", " ")
        num = name.split("_")[2]
        terminalreporter.write_line(
            f"ACCEPTANCE {num} ({label}): {_ACCEPTANCE_RESULTS[name]}"
        )


@pytest.fixture
def config():
    return AcquisitionConfig()


@pytest.fixture
def random_epoch(config):
    rng = np.random.default_rng(11)
    return Epoch(config, rng.normal(0.0, 1.0, (config.channel_count, 2000)))
