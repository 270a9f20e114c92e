"""Shared test helpers and the acceptance-criteria summary hook."""

import numpy as np
import pytest

from integraft.data import MultiStudy, Study

_CRITERIA = {}


def random_multistudy(rng, n_per=(30, 25), p=4, censor_rate=0.3, signal=1.0):
    """Small random survival data with roughly the requested censoring."""
    studies = []
    for n in n_per:
        x = rng.normal(size=(n, p))
        beta = rng.normal(size=p) * signal
        log_t = 0.5 + x @ beta + rng.normal(size=n)
        if censor_rate > 0.0:
            spread = np.std(log_t) + 1.0
            log_c = rng.uniform(
                np.quantile(log_t, censor_rate / 2), log_t.max() + spread, size=n
            )
        else:
            log_c = np.full(n, np.inf)
        y = np.minimum(log_t, log_c)
        delta = (log_t <= log_c).astype(float)
        if delta.sum() < 2:
            delta[:2] = 1.0
        studies.append(Study.from_data(y, delta, x))
    return MultiStudy(tuple(studies))


def record(num: int, title: str, ok: bool, detail: str = ""):
    """Register one acceptance criterion outcome, then assert it.

    Recording before asserting keeps the criterion visible in the
    terminal summary even when it fails.
    """
    _CRITERIA[num] = (title, bool(ok), str(detail))
    assert ok, f"acceptance criterion {num} failed: {title} ({detail})"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[num]
        line = f"[{num:2d}] {'PASS' if ok else 'FAIL'} {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
