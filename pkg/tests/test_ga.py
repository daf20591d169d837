import numpy as np
import pytest

from vnfplace.exact import InfeasibleError, solve_ra_exact, solve_te_exact
from vnfplace.ga import (
    GaParams,
    evolve,
    run_full_ga,
    run_ga_pipeline,
    run_ra_ga,
    run_rr_ga,
    run_te_ga,
    trace_to_csv,
)
from vnfplace.harness import build_instance
from vnfplace.solution import validate
from vnfplace.topology import load_topology
from vnfplace.traffic import Demand, generate_background_traffic, table_profile

from conftest import make_chain, make_net, with_all_paths
from oracle import random_instance

SMALL = GaParams(population_size=30, generations=40, seed=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"population_size": 1},
        {"crossover_rate": 1.5},
        {"mutation_rate": -0.1},
        {"elite_count": 100},
        {"tournament_size": 0},
        {"generations": -1},
    ],
)
def test_params_rejected(kwargs):
    with pytest.raises(ValueError):
        GaParams(**kwargs)


def test_evolve_finds_minimum_and_best_never_worsens():
    rng = np.random.default_rng(0)
    upper = np.full(12, 4)
    run = evolve(rng, upper, lambda pop: pop.sum(axis=1).astype(float), GaParams(population_size=40, generations=60))
    assert run.cost == 0.0
    assert not run.genes.any()
    bests = [b for _, b, _ in run.trace]
    assert all(a >= b for a, b in zip(bests, bests[1:]))
    assert len(run.trace) == 61


def test_evolve_keeps_seed_individual():
    rng = np.random.default_rng(1)
    upper = np.full(30, 5)
    target = np.zeros(30, dtype=np.int64)
    run = evolve(rng, upper, lambda pop: pop.sum(axis=1).astype(float), GaParams(population_size=4, generations=0), [target])
    assert run.cost == 0.0


# --- TE-GA ------------------------------------------------------------------


def test_te_ga_bottleneck_matches_exact(cost_set, bottleneck):
    net, demands = bottleneck
    ga = run_te_ga(net, cost_set, demands, SMALL)
    assert ga.cost == solve_te_exact(net, cost_set, demands).cost
    assert validate(net, te=ga.solution, bg_demands=demands).ok


def test_te_ga_missing_path(cost_set):
    net = with_all_paths(make_net([("A", "B"), ("C", "D")]))
    with pytest.raises(InfeasibleError):
        run_te_ga(net, cost_set, [Demand("d", "A", "D", 1.0)], SMALL)


def test_te_ga_deterministic(cost_set):
    base = load_topology("nobel-us", capacity=400)
    bg = generate_background_traffic(base, table_profile("nobel-us", 1))
    net = with_all_paths(base)
    a = run_te_ga(net, cost_set, bg, SMALL)
    b = run_te_ga(net, cost_set, bg, SMALL)
    assert a.cost == b.cost and a.solution == b.solution
    assert a.trace == b.trace
    bests = [row[1] for row in a.trace]
    assert all(x >= y for x, y in zip(bests, bests[1:]))
    assert validate(net, te=a.solution, bg_demands=bg, enforce_capacity=False).ok


@pytest.mark.parametrize("seed", range(5))
def test_te_ga_never_beats_exact(cost_set, seed):
    rng = np.random.default_rng(seed)
    net = with_all_paths(make_net([("A", "B"), ("B", "C"), ("C", "D"), ("D", "A"), ("A", "C"), ("B", "E"), ("E", "D")]), k=3)
    demands = []
    for i in range(8):
        s, t = rng.choice(len(net.nodes), 2, replace=False)
        demands.append(Demand(f"d{i}", net.nodes[s], net.nodes[t], float(rng.integers(20, 70))))
    exact = solve_te_exact(net, cost_set, demands)
    assert exact.proven_optimal
    assert run_te_ga(net, cost_set, demands, SMALL).cost >= exact.cost - 1e-12


# --- RA-GA and RR-GA --------------------------------------------------------


def test_ra_ga_diamond_matches_exact(cost_set, diamond, diamond_chain, zero_bg):
    ga = run_ra_ga(diamond, cost_set, [diamond_chain], zero_bg, SMALL)
    assert ga.cost == pytest.approx(solve_ra_exact(diamond, cost_set, [diamond_chain], zero_bg).cost)
    assert ga.replica_counts == {"s0": 0}
    assert validate(diamond, [diamond_chain], ra=ga.solution).ok


def test_rr_ga_diamond_adds_one_replica(cost_set, diamond, diamond_chain, zero_bg):
    chain = diamond_chain.with_r_max(1)
    ga = run_ga_pipeline(diamond, cost_set, [chain], zero_bg, SMALL)
    assert ga.cost == 0.0
    assert ga.replica_counts == {"s0": 1}
    assert validate(diamond, [chain], ra=ga.solution).ok
    stages = {row[0] for row in ga.trace}
    assert stages == {0, 1}


def test_rr_ga_keeps_zero_cost_placement(cost_set, diamond, zero_bg):
    # 20 Mbps cannot reach the first nonzero segment, so no replica pays off
    chain = make_chain("s0", "D", [10, 10], r_max=2)
    ga = run_ga_pipeline(diamond, cost_set, [chain], zero_bg, SMALL)
    assert ga.cost == 0.0
    assert ga.replica_counts == {"s0": 0}


def test_rr_ga_never_raises_cost(cost_set):
    net, chains, bg = random_instance(44)
    chains = [s.with_r_max(2) for s in chains]
    rng = np.random.default_rng(0)
    ra = run_ra_ga(net, cost_set, chains, bg, SMALL, rng)
    rr = run_rr_ga(net, cost_set, chains, ra, bg, SMALL, rng)
    assert rr.cost <= ra.cost
    for s in chains:
        assert rr.replica_counts[s.id] <= s.r_max
    assert validate(net, chains, ra=rr.solution, enforce_capacity=False).ok


@pytest.mark.parametrize("seed", range(15))
def test_ga_brackets_exact_on_random_instances(cost_set, seed):
    net, chains, bg = random_instance(seed)
    try:
        exact = solve_ra_exact(net, cost_set, chains, bg)
    except InfeasibleError:
        return
    try:
        ga = run_ga_pipeline(net, cost_set, chains, bg, SMALL)
    except InfeasibleError:
        # the heuristic may miss a tight joint placement; the exact search may not
        return
    assert ga.cost >= exact.cost - 1e-9
    assert validate(net, chains, ra=ga.solution, enforce_capacity=False).ok
    again = run_ga_pipeline(net, cost_set, chains, bg, SMALL)
    assert again.cost == ga.cost and again.solution == ga.solution


def test_full_ga_on_nobel(cost_set):
    base = load_topology("nobel-us", capacity=2500)
    profile = table_profile("nobel-us", 0)
    bg = generate_background_traffic(base, profile)
    inst = build_instance(base, profile, 2, 2, 5)
    chains = [s.with_r_max(1) for s in inst.chains]
    res = run_full_ga(inst.net, cost_set, inst.bg_demands, chains, SMALL)
    assert validate(inst.net, chains, res.te.solution, res.ra.solution, inst.bg_demands, enforce_capacity=False).ok
    assert res.elapsed >= res.te.elapsed
    assert len(bg) == len(inst.bg_demands)


def test_trace_csv():
    text = trace_to_csv([(0, 1.5, 2.0), (1, 3, 1.0, 1.25)])
    lines = text.splitlines()
    assert lines[0] == "stage,generation,bestCost,meanCost"
    assert lines[1] == "0,0,1.5,2.0"
    assert lines[2] == "1,3,1.0,1.25"
