import numpy as np
import pytest
from hypothesis import settings

from dbay.dcop import ContinuousDomain, DcopInstance, Operator, UtilityFunction

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")


class Const:
    """Evaluator returning a fixed value."""

    def __init__(self, value):
        self.value = value

    def __call__(self, *xs):
        return self.value


class Linear:
    """``sum(c_j * x_j)``; slopes are the Lipschitz constants."""

    def __init__(self, coefs):
        self.coefs = tuple(coefs)

    def __call__(self, *xs):
        total = 0.0
        for c, x in zip(self.coefs, xs):
            total += c * x
        return total


def make_instance(n_agents, scopes, evaluators=None, operator=Operator.SUM, domain=(0.0, 1.0), lipschitz=1.0):
    functions = []
    for i, scope in enumerate(scopes):
        ev = evaluators[i] if evaluators is not None else Const(0.0)
        functions.append(UtilityFunction(i, tuple(scope), ev, (lipschitz,) * len(scope)))
    domains = [ContinuousDomain(*domain) for _ in range(n_agents)]
    return DcopInstance(tuple(range(n_agents)), tuple(domains), tuple(functions), operator=operator)


# edges of the five-agent example: a1-a2, a1-a3, a3-a4, a3-a5 and the pseudo edge a1-a4 (0-based)
FIVE_AGENT_EDGES = [(0, 1), (0, 2), (2, 3), (2, 4), (0, 3)]


@pytest.fixture
def five_agent_instance():
    return make_instance(5, FIVE_AGENT_EDGES)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; the lines are echoed again in the terminal summary."""

    def emit(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":").rstrip("abcd"))):
            terminalreporter.write_line(line)
