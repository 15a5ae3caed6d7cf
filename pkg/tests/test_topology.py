import pytest

from hubnet.topology import (
    CLUSTER_LEAVE,
    HUB_JOIN,
    HUB_LEAVE,
    NetworkTopology,
    TopologyError,
    TopologyEvent,
    reweight,
)


def basic_topology(events=None):
    return NetworkTopology(
        clusters={"c1": ["h1", "h2"], "c2": ["h3"]},
        weights={"c1": 2.0, "c2": 1.0},
        events=events or [],
    )


def test_hub_in_two_clusters_rejected():
    with pytest.raises(TopologyError):
        NetworkTopology(clusters={"c1": ["h1"], "c2": ["h1"]})


def test_event_validation_rules():
    with pytest.raises(TopologyError):
        TopologyEvent(kind="hub_join", time=3)  # missing hub/cluster
    with pytest.raises(TopologyError):
        TopologyEvent(kind="nova", time=0, cluster="c1")
    topo = basic_topology(events=[TopologyEvent(kind=CLUSTER_LEAVE, time=7, cluster="c2")])
    with pytest.raises(TopologyError):
        topo.validate_events(t_rh=12, known_hubs={"h1", "h2", "h3"})


def test_hub_leave_and_join_mutate_only_target_cluster():
    topo = basic_topology(
        events=[
            TopologyEvent(kind=HUB_LEAVE, time=5, hub="h2", cluster="c1"),
            TopologyEvent(kind=HUB_JOIN, time=8, hub="h2", cluster="c2"),
        ]
    )
    before_c2 = topo.members("c2")
    applied = topo.apply_events(5, t_rh=12)
    assert [e.kind for e in applied] == [HUB_LEAVE]
    assert topo.members("c1") == ["h1"]
    assert topo.members("c2") == before_c2
    assert topo.cluster_of("h2") is None
    topo.apply_events(8, t_rh=12)
    assert topo.members("c2") == ["h2", "h3"]


def test_cluster_event_off_boundary_rejected_at_runtime():
    topo = basic_topology(events=[TopologyEvent(kind=CLUSTER_LEAVE, time=5, cluster="c2")])
    with pytest.raises(TopologyError):
        topo.apply_events(5, t_rh=12)


def test_cluster_leave_deactivates():
    topo = basic_topology(events=[TopologyEvent(kind=CLUSTER_LEAVE, time=12, cluster="c2")])
    topo.apply_events(12, t_rh=12)
    assert topo.active_cluster_ids() == ["c1"]
    assert topo.applied_events[0].cluster == "c2"


def test_reweight_examples():
    topo = NetworkTopology(clusters={"c1": ["h1"], "c2": ["h2"], "c3": ["h3"]})
    annual = {"h1": 123_000.0, "h2": 26_000.0, "h3": 4_000.0}
    weights = reweight(topo, annual)
    assert weights == {"c1": 123.0, "c2": 26.0, "c3": 4.0}
    merged = NetworkTopology(clusters={"c12": ["h1", "h2"], "c3": ["h3"]})
    weights = reweight(merged, annual)
    assert weights["c12"] == 149.0  # additivity of the underlying demands
    assert weights["c3"] == 4.0


def test_reweight_removes_empty_cluster():
    topo = basic_topology(events=[TopologyEvent(kind=HUB_LEAVE, time=0, hub="h3", cluster="c2")])
    topo.apply_events(0, t_rh=12)
    weights = reweight(topo, {"h1": 5_000.0, "h2": 7_000.0})
    assert "c2" not in weights
    assert topo.active_cluster_ids() == ["c1"]
    assert weights["c1"] == 12.0
