"""Shared pytest wiring: a summary block for the acceptance criteria."""

import re

CRITERIA_LABELS = {
    1: "sampler agreement with exact grid posteriors",
    2: "posterior cost curve strictly decreasing",
    3: "budget inversion complementary slackness",
    4: "penalized-objective minimizer property",
    5: "population budget curve and budget exhaustion",
    6: "majority-vote loss within twice stochastic regret",
    7: "certificate coverage rate",
    8: "systematic resampling counts and unbiasedness",
    9: "Bernoulli kl identities and inversion round-trip",
    10: "byte-identical study outputs for identical seeds",
    11: "first design benchmark gains at costs 0.25 and 0.75",
    12: "second design benchmark gains at budget 0.5",
    13: "method ordering and random-line dominance",
}

_PATTERN = re.compile(r"test_acceptance\.py::test_c(\d{2})_")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            match = _PATTERN.search(getattr(report, "nodeid", "") or "")
            if match is None:
                continue
            num = int(match.group(1))
            # a failed setup or teardown must not be masked by a passed call
            if outcomes.get(num) in ("failed", "error"):
                continue
            outcomes[num] = status
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    words = {"passed": "PASS", "failed": "FAIL", "error": "FAIL",
             "skipped": "SKIP"}
    for num in sorted(outcomes):
        word = words.get(outcomes[num], outcomes[num].upper())
        label = CRITERIA_LABELS.get(num, "")
        terminalreporter.write_line(
            f"[acceptance] criterion {num:02d} {word} - {label}")
