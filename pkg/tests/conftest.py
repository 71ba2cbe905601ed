import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def gen():
    return np.random.default_rng(20240601)


def random_spd(gen, d, cond=10.0):
    """SPD matrix with eigenvalues spread over ``[1, cond]``."""
    q, _ = np.linalg.qr(gen.standard_normal((d, d)))
    eig = np.exp(gen.uniform(0.0, np.log(cond), size=d))
    m = (q * eig) @ q.T
    return 0.5 * (m + m.T)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for an acceptance criterion and assert on it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _verdict(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
