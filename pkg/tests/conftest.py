import numpy as np
import pytest

from stochnpv.instances import example1_instance
from stochnpv.project import Activity, ProjectNetwork, Scenario, earliest_starts
from stochnpv.instances import OMEGA1, Instance


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow suites")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow suite; pass --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def ex1():
    return example1_instance()


def random_small_omega1(rng, max_acts=3, max_support=3, n_scen=None, beta=0.9, slack=3):
    """Tiny random omega1 instance used by several property suites."""
    k = int(rng.integers(1, max_acts + 1))
    arcs = set()
    for a in range(1, k + 1):
        for b in range(a + 1, k + 1):
            if rng.random() < 0.4:
                arcs.add((a, b))
    for j in range(1, k + 1):
        if not any(x[1] == j for x in arcs):
            arcs.add((0, j))
        if not any(x[0] == j for x in arcs):
            arcs.add((j, k + 1))
    n_scen = n_scen or int(rng.integers(1, 4))
    durs = rng.integers(1, max_support + 1, size=(n_scen, k))
    fixed = np.round(rng.uniform(-10, -1, size=k), 2)
    var = np.round(rng.uniform(-10, -1, size=k), 2)
    rev = np.round(rng.uniform(0, 100, size=k), 2)
    acts = [Activity(0)]
    for j in range(k):
        acts.append(Activity(j + 1, float(fixed[j]), float(var[j]), float(rev[j]),
                             int(durs[:, j].min()), int(durs[:, j].max())))
    end_rev = float(np.round(rng.uniform(0, 50), 2))
    acts.append(Activity(k + 1, revenue=end_rev))
    draft = ProjectNetwork(tuple(acts), tuple(arcs), beta, 0)
    worst = int(earliest_starts(draft, draft.d_max)[-1])
    net = ProjectNetwork(draft.activities, draft.arcs, beta, worst + int(rng.integers(0, slack + 1)))
    scen = []
    for row in durs:
        d = [0, *(int(x) for x in row), 0]
        scen.append(Scenario(1.0 / n_scen, d, [a.cash(x) for a, x in zip(acts, d)]))
    return Instance(net, tuple(scen), OMEGA1, {"seed": None})


# --- acceptance reporting ------------------------------------------------------

ACCEPTANCE_DETAILS: dict[int, str] = {}
N_CRITERIA = 11


def record(criterion: int, detail: str) -> None:
    ACCEPTANCE_DETAILS[criterion] = detail


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            k = int(nodeid.split("test_criterion_")[1].split("_")[0])
            if rep.when == "call" or key in ("skipped", "error"):
                outcomes[k] = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP", "error": "FAIL"}[key]
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        status = outcomes.get(k, "NOT RUN")
        detail = ACCEPTANCE_DETAILS.get(k, "slow suite, run with --runslow" if status == "SKIP" else "")
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {detail}")
