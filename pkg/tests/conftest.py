"""Shared fixtures plus a per-criterion summary for the acceptance suite."""

import re

import numpy as np
import pytest

from advsplat.victim import ClassVocabulary
from advsplat.victim.reference import ReferenceClassifier

ACCEPTANCE_CRITERIA = {
    1: "background bit-exactness over 50 runs x 100 iterations",
    2: "box constraint on every iterate",
    3: "single-step reduction matches the direct one-step oracle",
    4: "zero-mask identity",
    5: "analytic gradient matches central finite differences",
    6: "attack efficacy on the reference victim",
    7: "l-infinity budget per trace",
    8: "metrics oracle and table average-row recomputation",
    9: "split contract 41 -> 35/6 with no leakage",
    10: "integration: adversarial-image top-1 degradation",
    11: "integration: misclassification confidence rises",
    12: "integration: render-transfer direction",
}

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def vocab3():
    return ClassVocabulary(labels=("ant", "bee", "cat"))


@pytest.fixture
def victim96(vocab3):
    return ReferenceClassifier.seeded(vocab3, seed=5, input_side=96)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes: dict[int, set] = {}
    for status in ("passed", "failed", "skipped", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            match = _CRITERION_RE.search(nodeid)
            if not match:
                continue
            outcomes.setdefault(int(match.group(1)), set()).add(status)
    if not outcomes:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(outcomes):
        statuses = outcomes[number]
        if "failed" in statuses or "error" in statuses:
            verdict = "FAIL"
        elif "passed" in statuses:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        description = ACCEPTANCE_CRITERIA.get(number, "")
        terminalreporter.write_line(
            f"criterion {number:2d} [{verdict}] {description}"
        )
