import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_blobs(n_per_class=60, k=5, d=10, spread=0.6, seed=0):
    """Gaussian blobs around random centres; small ``spread`` keeps them separable."""
    r = np.random.default_rng(seed)
    centers = r.normal(0, 4, size=(k, d))
    X = np.concatenate([c + spread * r.normal(size=(n_per_class, d)) for c in centers])
    y = np.repeat(np.arange(k), n_per_class)
    return X, y


_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the run summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(tag: str, ok: bool, detail: str) -> bool:
        line = f"criterion {tag}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(s.split()[1].rstrip(":abc")), s)):
            terminalreporter.write_line(line)
