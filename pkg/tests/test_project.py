import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochnpv.project import (
    Activity,
    InfeasibleDeadlineError,
    ProjectNetwork,
    Schedule,
    cpm_bounds,
    example1,
    precedence_feasible,
    schedule_npv,
    topological_order,
    validate_network,
)


def chain(n, d=1, deadline=20):
    acts = [Activity(0)] + [Activity(j, d_min=d, d_max=d) for j in range(1, n + 1)] + [Activity(n + 1)]
    arcs = [(j, j + 1) for j in range(n + 1)]
    return ProjectNetwork(tuple(acts), tuple(arcs), 0.9, deadline)


def test_example1_is_valid():
    net, scen = example1()
    assert validate_network(net).ok
    assert net.n_nodes == 5 and net.end == 4
    assert [s.prob for s in scen] == [0.5, 0.5]


def test_arcs_deduplicated_and_sorted():
    net = ProjectNetwork((Activity(0), Activity(1, d_max=1, d_min=1), Activity(2)), ((1, 2), (0, 1), (1, 2)), 0.9, 5)
    assert net.arcs == ((0, 1), (1, 2))


def test_cycle_reported():
    acts = (Activity(0), Activity(1), Activity(2), Activity(3))
    net = ProjectNetwork(acts, ((0, 1), (1, 2), (2, 1), (2, 3)), 0.9, 5)
    rep = validate_network(net)
    assert not rep
    assert any("cycle" in v for v in rep.violations)


def test_dangling_activity_reported():
    acts = (Activity(0), Activity(1), Activity(2), Activity(3))
    net = ProjectNetwork(acts, ((0, 1), (1, 3)), 0.9, 5)
    rep = validate_network(net)
    assert any("dangling activity 2" in v for v in rep.violations)


def test_deadline_below_worst_case_makespan():
    net = chain(3, d=2, deadline=5)
    rep = validate_network(net)
    assert any("deadline 5 below worst-case makespan 6" in v for v in rep.violations)


def test_cpm_bounds_example1_scenario2():
    net, scen = example1()
    es, ls = cpm_bounds(net, scen[1].durations)
    assert es.tolist() == [0, 0, 1, 1, 11]
    assert ls.tolist() == [29, 29, 35, 30, 40]


def test_cpm_infeasible_deadline():
    net, scen = example1()
    with pytest.raises(InfeasibleDeadlineError):
        cpm_bounds(net, scen[1].durations, deadline=10)


def test_schedule_npv_example1_optima():
    net, scen = example1()
    assert schedule_npv(Schedule((0, 0, 1, 5, 6)), scen[0].cash_flows, 0.9) == pytest.approx(221.2659, abs=1e-9)
    assert schedule_npv((0, 0, 6, 1, 11), scen[1].cash_flows, 0.9) == pytest.approx(44.1804609, abs=1e-6)


def test_precedence_feasible():
    net, scen = example1()
    assert precedence_feasible(net, (0, 0, 1, 5, 6), scen[0].durations)
    assert not precedence_feasible(net, (0, 0, 1, 5, 6), scen[1].durations)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_es_le_ls_and_es_feasible(n, seed):
    rng = np.random.default_rng(seed)
    arcs = {(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < 0.3}
    arcs |= {(0, j) for j in range(1, n + 1)} | {(j, n + 1) for j in range(1, n + 1)}
    d = [0, *rng.integers(0, 6, size=n).tolist(), 0]
    acts = [Activity(j, d_min=d[j], d_max=d[j]) for j in range(n + 2)]
    net = ProjectNetwork(tuple(acts), tuple(arcs), 0.9, 100)
    es, ls = cpm_bounds(net, d)
    assert (es <= ls).all()
    assert precedence_feasible(net, es.tolist(), d)
    assert precedence_feasible(net, ls.tolist(), d, deadline=100) or ls[0] > 0


def test_topological_order_none_on_cycle():
    assert topological_order(3, [(0, 1), (1, 2), (2, 1)]) is None
    assert topological_order(3, [(0, 2), (2, 1)]) == [0, 2, 1]
