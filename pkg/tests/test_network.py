import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from essplan.fixtures import ac5_network, dc4_network, venue_day, venue_network, hybrid9_network, overload_network
from essplan.network import (
    Branch,
    Bus,
    ConfigurationError,
    HybridNetwork,
    Scenario,
    ScenarioError,
    SchemaError,
    TopologyError,
    Vsc,
    default_tariff,
    dump_network,
    load_network,
    load_scenario,
    load_tariff,
    network_from_dict,
    price_at,
    save_network,
    save_scenario,
    validate_network,
    validate_scenario,
)


def test_venue_fixture_has_21_nodes_and_two_converters():
    net = venue_network()
    assert net.n_ac + net.n_dc == 21
    assert net.h == 2
    assert len(net.subsystems()) == 3
    assert net.synthetic


def test_single_bus_is_a_valid_tree():
    net = validate_network(HybridNetwork("one", (Bus(1, "ac", "A", slack=True),), (), ()))
    assert net.branches == ()


def test_duplicated_branch_is_a_cycle():
    doc = {
        "buses": [{"id": 1, "kind": "ac", "subsystem": "A", "slack": True}, {"id": 2, "kind": "ac", "subsystem": "A"}],
        "branches": [{"from": 1, "to": 2, "r_ohm": 0.1}, {"from": 1, "to": 2, "r_ohm": 0.1}],
    }
    with pytest.raises(TopologyError) as err:
        network_from_dict(doc)
    assert set(err.value.cycle) == {1, 2}


def test_loop_reports_cycle_members():
    buses = tuple(Bus(i, "ac", "A", slack=i == 1) for i in range(1, 4))
    branches = (Branch(1, 2, 0.1), Branch(2, 3, 0.1), Branch(3, 1, 0.1))
    with pytest.raises(TopologyError, match="not radial") as err:
        validate_network(HybridNetwork("loop", buses, branches, ()))
    assert sorted(err.value.cycle) == [1, 2, 3]


def test_missing_slack_is_a_configuration_error():
    buses = (Bus(1, "ac", "A"), Bus(2, "ac", "A"))
    with pytest.raises(ConfigurationError):
        validate_network(HybridNetwork("noslack", buses, (Branch(1, 2, 0.1),), ()))


def test_dc_needs_exactly_one_udcq():
    buses = (Bus(1, "ac", "A", slack=True), Bus(2, "dc", "D"), Bus(3, "dc", "D"))
    vscs = (Vsc("a", 1, 2, 100, 100, 100, "PQ"),)
    with pytest.raises(ConfigurationError, match="Udc-Q"):
        validate_network(HybridNetwork("dc", buses, (Branch(2, 3, 0.1),), vscs))


def test_schema_error_names_field():
    doc = {"buses": [{"id": 1, "kind": "ac", "subsystem": "A", "slack": True, "colour": "red"}]}
    with pytest.raises(SchemaError) as err:
        network_from_dict(doc)
    assert "colour" in err.value.field
    with pytest.raises(SchemaError, match="kind"):
        network_from_dict({"buses": [{"id": 1, "kind": "xx", "subsystem": "A"}]})


def test_branch_across_subsystems_rejected():
    buses = (Bus(1, "ac", "A", slack=True), Bus(2, "ac", "B", slack=True))
    with pytest.raises(TopologyError, match="VSC"):
        validate_network(HybridNetwork("x", buses, (Branch(1, 2, 0.1),), ()))


def test_branches_oriented_away_from_slack():
    net = venue_network()
    slack = net.slack_buses()
    seen = set(slack.values())
    for br in net.branches:
        assert br.from_bus in seen
        seen.add(br.to_bus)
    assert slack["DC"] == 1  # Udc-Q terminal


def test_network_round_trip(tmp_path):
    for net in (venue_network(), ac5_network(), dc4_network(), hybrid9_network(), overload_network()):
        path = tmp_path / f"{net.name}.toml"
        save_network(net, path)
        again = load_network(path)
        assert again == net


def test_bad_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[network\nname=")
    with pytest.raises(SchemaError):
        load_network(path)


@pytest.mark.parametrize("t, price", [(18, 0.196), (3, 0.044), (10, 0.116), (23, 0.044), (7, 0.116), (17, 0.196)])
def test_tou_bands(t, price):
    assert price_at(default_tariff(), t) == price


def test_price_out_of_range():
    with pytest.raises(ValueError):
        price_at(default_tariff(), 24)
    with pytest.raises(ValueError):
        price_at(default_tariff(), -1)


def test_tariff_file(tmp_path):
    path = tmp_path / "tariff.csv"
    path.write_text("start_hour,end_hour,price\n0,12,0.05\n12,24,0.2\n")
    t = load_tariff(path)
    assert price_at(t, 11) == 0.05 and price_at(t, 12) == 0.2
    path.write_text("0,12,0.05\n")
    with pytest.raises(ScenarioError):
        load_tariff(path)


@given(st.lists(st.integers(1, 23), min_size=1, max_size=5, unique=True), st.floats(0.01, 1.0))
def test_tariff_partition_property(cuts, price):
    edges = [0] + sorted(cuts) + [24]
    t = default_tariff().__class__(tuple((a, b, price) for a, b in zip(edges, edges[1:])))
    assert np.allclose(t.hourly(), price)


def test_unknown_node_rejected():
    net = venue_network()
    day = venue_day(net)
    bad = Scenario("bad", 1, {99: np.ones(24)}, {}, {}, day.price, day.t_ext, day.v_wind)
    with pytest.raises(ScenarioError, match="99"):
        validate_scenario(bad, net)


def test_zero_day_and_winter_day_valid():
    net = venue_network()
    day = venue_day(net, "winter")
    assert validate_scenario(day, net) is day
    zero = Scenario("zero", 1, {}, {}, {}, day.price, day.t_ext, day.v_wind)
    assert validate_scenario(zero, net) is zero
    assert day.t_ext.shape == (24,)


def test_scenario_schema_checks():
    p = default_tariff().hourly()
    t = np.full(24, 280.0)
    w = np.zeros(24)
    with pytest.raises(ScenarioError, match="24"):
        Scenario("s", 1, {1: np.ones(23)}, {}, {}, p, t, w)
    with pytest.raises(ScenarioError, match="negative"):
        Scenario("s", 1, {1: -np.ones(24)}, {}, {}, p, t, w)
    with pytest.raises(ScenarioError, match="non-finite"):
        Scenario("s", 1, {1: np.full(24, np.nan)}, {}, {}, p, t, w)
    with pytest.raises(ScenarioError, match="day weight"):
        Scenario("s", 0, {}, {}, {}, p, t, w)


def test_reactive_load_on_dc_node_rejected():
    net = venue_network()
    day = venue_day(net)
    bad = Scenario("q", 1, {}, {2: np.ones(24)}, {}, day.price, day.t_ext, day.v_wind)
    with pytest.raises(ScenarioError, match="DC"):
        validate_scenario(bad, net)


def test_scenario_csv_round_trip(tmp_path):
    net = venue_network()
    day = venue_day(net, "summer")
    path = tmp_path / "summer.csv"
    save_scenario(day, path)
    again = load_scenario(path, "summer", days=day.days)
    for node in day.load_p:
        assert np.allclose(again.p_load(node), day.p_load(node))
    assert np.allclose(again.t_ext, day.t_ext)
    assert np.allclose(again.price, day.price)
