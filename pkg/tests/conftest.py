import itertools

import numpy as np
import pytest

from reachdesign import benchmarks as bm


def brute_force_support(c, G, l):
    """Max of l.v over all sign-combination vertices (independent of the library)."""
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float).reshape(c.shape[0], -1)
    best = -np.inf
    for signs in itertools.product((-1.0, 1.0), repeat=G.shape[1]):
        v = c + G @ np.array(signs) if G.shape[1] else c
        best = max(best, float(np.dot(l, v)))
    return best


def extreme_points(c, G):
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float).reshape(c.shape[0], -1)
    if G.shape[1] == 0:
        return c[None, :]
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=G.shape[1])))
    return c + signs @ G.T


@pytest.fixture(scope="session")
def suspension():
    return bm.suspension_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
