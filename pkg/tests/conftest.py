from __future__ import annotations

import pytest

from blindsim.presets import (
    reference_detector,
    salt_rate_for,
    signal_rate_for,
)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        verdict = "PASS" if report.passed else "FAIL"
        label = getattr(item.function, "criterion", item.name)
        print(f"\n[acceptance] {label}: {verdict}", flush=True)


@pytest.fixture(scope="session")
def ref_detector():
    return reference_detector()


@pytest.fixture(scope="session")
def ref_signal_rate(ref_detector):
    return signal_rate_for(ref_detector)


@pytest.fixture(scope="session")
def ref_salt_rate(ref_detector):
    return salt_rate_for(ref_detector)
