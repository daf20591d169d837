import pytest

from vnfplace.topology import load_topology
from vnfplace.traffic import (
    TABLE_II,
    VNF,
    ChainDemand,
    Demand,
    ServiceChain,
    TrafficError,
    TrafficProfile,
    build_service_chains,
    chains_from_json,
    chains_to_json,
    demands_from_json,
    demands_to_json,
    generate_background_traffic,
    table_profile,
)


@pytest.fixture(scope="module")
def nobel():
    return load_topology("nobel-us")


def random_profile(conn, **kw):
    args = dict(connections=conn, bg_bandwidth=160.0, dc_bandwidth=35.0, demands_per_chain=5, background="random")
    args.update(kw)
    return TrafficProfile(**args)


def test_zero_connections(nobel):
    assert generate_background_traffic(nobel, random_profile(0)) == []


def test_random_background_counts_and_range(nobel):
    demands = generate_background_traffic(nobel, random_profile(30, seed=4))
    assert len(demands) == 30
    assert len({(d.source, d.destination) for d in demands}) == 30
    assert all(0 < d.bandwidth <= 160 for d in demands)


def test_too_many_connections(nobel):
    with pytest.raises(TrafficError):
        generate_background_traffic(nobel, random_profile(14 * 13 + 1))


def test_all_pairs_background(nobel):
    demands = generate_background_traffic(nobel, table_profile("nobel-us", 2))
    assert len(demands) == 14 * 13 // 2
    assert len({frozenset((d.source, d.destination)) for d in demands}) == len(demands)
    assert all(0 < d.bandwidth <= 160 for d in demands)


@pytest.mark.parametrize("name", sorted(TABLE_II))
def test_background_deterministic(name):
    net = load_topology(name)
    a = generate_background_traffic(net, table_profile(name, 7))
    b = generate_background_traffic(net, table_profile(name, 7))
    c = generate_background_traffic(net, table_profile(name, 8))
    assert a == b and a != c
    assert all(0 < d.bandwidth <= TABLE_II[name][2] for d in a)


def test_two_chains_shape(nobel):
    chains = build_service_chains(nobel, 2, 2, table_profile("nobel-us", 0))
    assert len(chains) == 2
    assert chains[0].egress != chains[1].egress
    for s in chains:
        assert [v.replicable for v in s.vnfs] == [False, True]
        assert len(s.demands) == TABLE_II["nobel-us"][0]
        assert all(d.bandwidth == 35.0 for d in s.demands)


def test_single_anchor_chain(nobel):
    (s,) = build_service_chains(nobel, 1, 1, random_profile(1))
    assert s.vnfs == (VNF(0, False),)


def test_too_many_chains():
    net = load_topology("nobel-us")
    with pytest.raises(TrafficError):
        build_service_chains(net, 15, 2, random_profile(1))


def test_chain_invariants():
    with pytest.raises(TrafficError):
        ServiceChain("s", (VNF(0, True),), "A", ())
    with pytest.raises(TrafficError):
        ServiceChain("s", (), "A", ())
    with pytest.raises(TrafficError):
        ServiceChain("s", (VNF(0, False), VNF(2, True)), "A", ())
    with pytest.raises(TrafficError):
        ServiceChain("s", (VNF(0, False),), "A", (), r_max=-1)
    with pytest.raises(TrafficError):
        Demand("d", "A", "A", 1.0)
    with pytest.raises(TrafficError):
        ChainDemand("d", 0.0)
    with pytest.raises(TrafficError):
        TrafficProfile(1, -1.0, 1.0, 1)


def test_json_round_trip(nobel):
    prof = table_profile("nobel-us", 3)
    bg = generate_background_traffic(nobel, prof)
    chains = build_service_chains(nobel, 2, 3, prof, r_max=2)
    assert demands_from_json(demands_to_json(bg)) == bg
    assert chains_from_json(chains_to_json(chains)) == chains
