"""Command line: solve-te, solve-ra, experiment, validate.

Exit codes: 0 success, 2 infeasible instance, 1 any other error (including a
solution that fails validation).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path as FsPath

from .costmodel import default_cost_set
from .exact import InfeasibleError, SearchBudget, solve_ra_exact
from .ga import run_ga_pipeline
from .harness import (
    SOLVERS,
    ConfigError,
    ExperimentConfig,
    build_instance,
    load_config,
    run_experiment,
    solve_te_stage,
    write_solution,
)
from .rfpa import run_rfpa
from .solution import solution_from_json, validate
from .topology import build_path_catalog, load_topology
from .traffic import chains_from_json, demands_from_json

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.topology:
            cfg = replace(cfg, topology=args.topology)
        return cfg
    if not args.topology:
        raise ConfigError("give --topology or --config")
    return ExperimentConfig(topology=args.topology)


def _instance(cfg: ExperimentConfig, seed: int):
    base = load_topology(cfg.topology, capacity=cfg.capacity_override)
    inst = build_instance(base, cfg.profile(seed), cfg.chain_count, cfg.vnfs_per_chain, cfg.k_paths)
    return base, inst


def cmd_solve_te(args) -> int:
    cfg = _config(args)
    cost_set = default_cost_set()
    base, inst = _instance(cfg, args.seed)
    te = solve_te_stage(inst, cost_set, cfg.te_max_nodes, replace(cfg.ga_params, seed=args.seed))
    print(f"TE ({te.method}) cost {te.cost:.6f} over {len(inst.bg_demands)} demands")
    if args.out:
        write_solution(args.out, inst, te.solution, None, (), te.cost, base.name or cfg.topology)
    return EXIT_OK


def cmd_solve_ra(args) -> int:
    cfg = _config(args)
    cost_set = default_cost_set()
    base, inst = _instance(cfg, args.seed)
    te = solve_te_stage(inst, cost_set, cfg.te_max_nodes, replace(cfg.ga_params, seed=args.seed))
    chains = [s.with_r_max(args.rmax) for s in inst.chains]
    if args.solver == "exact":
        res = solve_ra_exact(inst.net, cost_set, chains, te.loads,
                             SearchBudget(max_nodes=cfg.exact_max_nodes, time_limit=cfg.exact_time_limit))
        sol, cost, note = res.solution, res.cost, "optimal" if res.proven_optimal else "budget exhausted"
    elif args.solver == "ga":
        res = run_ga_pipeline(inst.net, cost_set, chains, te.loads, replace(cfg.ga_params, seed=args.seed))
        sol, cost, note = res.solution, res.cost, f"replicas {res.replica_counts}"
    else:
        res = run_rfpa(inst.net, cost_set, chains, te.loads, seed=args.seed)
        sol, cost, note = res.solution, res.cost, f"replicas {res.replica_counts}"
    report = validate(inst.net, chains, te.solution, sol, inst.bg_demands, enforce_capacity=False)
    if not report.ok:
        print(str(report), file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.solver} r_max={args.rmax} seed={args.seed}: cost {cost:.6f} ({note})")
    if args.out:
        write_solution(args.out, inst, te.solution, sol, chains, cost, base.name or cfg.topology)
    return EXIT_OK


def cmd_experiment(args) -> int:
    if not args.config:
        raise ConfigError("experiment needs --config")
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.topology:
        cfg = replace(cfg, topology=args.topology)
    records = run_experiment(cfg, config_text=FsPath(args.config).read_text())
    for r in records:
        print(f"{r.topology} {r.solver:5s} r_max={r.r_max} seed={r.seed} {r.status:16s} cost={r.cost:.6f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    doc = json.loads(FsPath(args.solution).read_text())
    spec = doc.get("instance")
    if spec is None:
        raise ConfigError("solution file carries no instance; produce it with solve-te or solve-ra --out")
    topo = args.topology or spec["topology"]
    base = load_topology(topo, capacity=spec.get("capacity"))
    bg = demands_from_json(spec["backgroundDemands"])
    chains = chains_from_json(spec["chains"])
    pairs = [(d.source, d.destination) for d in bg]
    pairs += [(n, s.egress) for s in chains for n in base.nodes if n != s.egress]
    net, _ = build_path_catalog(base, pairs)
    te, ra = solution_from_json(net, doc)
    report = validate(net, chains, te, ra, bg, enforce_capacity=args.enforce_capacity)
    print(str(report))
    return EXIT_OK if report.ok else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vnfplace", description="VNF placement with replicas for load balancing")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--topology", help="bundled topology name or SNDlib native file")
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output file (solve-*) or directory (experiment)")

    sp = sub.add_parser("solve-te", help="route background traffic")
    common(sp)
    sp.set_defaults(func=cmd_solve_te)

    sp = sub.add_parser("solve-ra", help="place chains after the TE stage")
    common(sp)
    sp.add_argument("--solver", choices=SOLVERS, default="exact")
    sp.add_argument("--rmax", type=int, default=0)
    sp.set_defaults(func=cmd_solve_ra)

    sp = sub.add_parser("experiment", help="run a full experiment config")
    common(sp)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("validate", help="check a solution file against every constraint")
    sp.add_argument("solution")
    sp.add_argument("--topology", help="override the topology recorded in the file")
    sp.add_argument("--no-capacity", dest="enforce_capacity", action="store_false")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - the CLI maps every failure to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
