import json

import numpy as np
import pytest
from scipy import stats

from stochnpv.instances import (
    OMEGA1,
    OMEGA2,
    ArcStats,
    GenConfig,
    InstanceFormatError,
    VersionMismatchError,
    dumps_instance,
    estimate_deadline,
    generate_instance,
    instance_to_dict,
    loads_instance,
    read_instance,
    uniform_duration_sampler,
    write_instance,
)
from stochnpv.project import earliest_starts, example1, validate_network


def two_point_sampler(rng, size):
    d = np.zeros((size, 5), dtype=np.int64)
    d[:, 1] = 1
    d[:, 2] = 5
    d[:, 3] = np.where(rng.random(size) < 0.5, 1, 10)
    return d


def test_deadline_two_point_law():
    net, _ = example1()
    assert estimate_deadline(net, two_point_sampler, GenConfig(deadline_quantile=0.9)) == 11
    assert estimate_deadline(net, two_point_sampler, GenConfig(deadline_quantile=0.4)) == 6


def test_deadline_monotone_in_quantile():
    inst = generate_instance(GenConfig(family=OMEGA2, n_nondummy=6, seed=3))
    s = uniform_duration_sampler(inst.network, 1, 10)
    lo = estimate_deadline(inst.network, s, GenConfig(deadline_quantile=0.90, seed=1))
    hi = estimate_deadline(inst.network, s, GenConfig(deadline_quantile=0.95, seed=1))
    assert hi >= lo


def test_duration_sampler_uniform_chi_square():
    net, _ = example1()
    d = uniform_duration_sampler(net, 1, 10)(np.random.default_rng(0), 100_000)[:, 1]
    counts = np.bincount(d, minlength=11)[1:]
    assert stats.chisquare(counts).pvalue > 0.001
    assert d.min() == 1 and d.max() == 10


def test_direct_arc_frequency():
    st = ArcStats()
    for seed in range(1000):
        generate_instance(GenConfig(n_nondummy=6, seed=seed, mc_replications=10), stats=st)
    assert abs(st.direct_arcs / st.eligible_pairs - 0.2) < 0.02


@pytest.mark.parametrize("family", [OMEGA1, OMEGA2])
def test_generated_instances_valid(family):
    for seed in range(20):
        inst = generate_instance(GenConfig(family=family, n_nondummy=7, n_scenarios=3, seed=seed, mc_replications=500))
        net = inst.network
        assert validate_network(net).ok
        assert net.deadline >= earliest_starts(net, net.d_max)[-1]
        for a in net.activities[1:-1]:
            assert 1 <= a.d_min <= a.d_max <= 10
        if family == OMEGA1:
            assert len(inst.scenarios) == 3
            assert sum(s.prob for s in inst.scenarios) == pytest.approx(1.0)
            for s in inst.scenarios:
                assert list(s.cash_flows) == [a.cash(d) for a, d in zip(net.activities, s.durations)]
        else:
            assert inst.scenarios is None


def test_generation_deterministic():
    cfg = GenConfig(n_nondummy=8, n_scenarios=5, seed=11, mc_replications=1000)
    assert dumps_instance(generate_instance(cfg)) == dumps_instance(generate_instance(cfg))


def test_round_trip(tmp_path):
    inst = generate_instance(GenConfig(n_nondummy=6, n_scenarios=4, seed=5, mc_replications=200))
    p = tmp_path / "i.json"
    write_instance(inst, p)
    back = read_instance(p)
    assert back == inst
    assert dumps_instance(back) == p.read_text()


def test_file_layout_sorted(ex1):
    doc = instance_to_dict(ex1)
    assert doc["version"] == "1"
    assert doc["arcs"] == sorted(doc["arcs"])
    assert [a["id"] for a in doc["activities"]] == [0, 1, 2, 3, 4]


def _doc(ex1):
    return instance_to_dict(ex1)


def test_missing_field(ex1):
    doc = _doc(ex1)
    del doc["beta"]
    with pytest.raises(InstanceFormatError, match="missing field 'beta'"):
        loads_instance(json.dumps(doc))


def test_version_mismatch(ex1):
    doc = _doc(ex1)
    doc["version"] = "9"
    with pytest.raises(VersionMismatchError):
        loads_instance(json.dumps(doc))


def test_probabilities_must_sum_to_one(ex1):
    doc = _doc(ex1)
    doc["scenarios"][0]["prob"] = 0.6
    with pytest.raises(InstanceFormatError, match="sum to 1"):
        loads_instance(json.dumps(doc))


def test_malformed_json_reports_line():
    with pytest.raises(InstanceFormatError, match="line 2"):
        loads_instance('{"version": "1",\n "family": }')


def test_invalid_network_rejected(ex1):
    doc = _doc(ex1)
    doc["arcs"].append([4, 1])
    with pytest.raises(InstanceFormatError, match="cycle"):
        loads_instance(json.dumps(doc))


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(arc_prob=1.5).validate()
    with pytest.raises(ValueError):
        GenConfig(family="omega3").validate()
