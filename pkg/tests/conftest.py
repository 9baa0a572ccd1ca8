import numpy as np
import pytest

from wanbody.perfmodel import DAS3_NETWORK, DAS3_SITES, GLOBAL_GRID_NETWORK, GLOBAL_GRID_SITE, RunSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def das3_spec(s=1, n_side=256, m_side=128, theta=0.3, p=60, r_samp=1 / 2500, **kw):
    order = ("VU", "UvA", "LIACS", "TU", "MM")
    return RunSpec(n_side**3, m_side**3, theta, p, tuple(DAS3_SITES[k] for k in order[:s]), DAS3_NETWORK, r_samp, **kw)


def global_spec(n_side=2048, m_side=256, p=2048, theta=0.5, r_samp=1e-4):
    return RunSpec(n_side**3, m_side**3, theta, p, (GLOBAL_GRID_SITE,), GLOBAL_GRID_NETWORK, r_samp)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
