"""Command-line interface.

Subcommands: generate (scenario JSON), solve (one slot, full report),
sweep (trade-off records CSV), gains (saturated-backhaul reduction table),
validate (oracle suite), solve-conic (standard-form problem file).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from cachebeam import conic, oracle
from cachebeam.costmodel import network_cost
from cachebeam.harness import (
    ExperimentConfig,
    HarnessError,
    gain_table,
    read_records_csv,
    render_gain_table,
    run_tradeoff_sweep,
    write_records_csv,
)
from cachebeam.relaxation import LiftedScenario, mm_optimize
from cachebeam.rounding import gaussian_randomize
from cachebeam.scenario import Scenario, ScenarioError, stream_rng


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    elif args.preset == "paper":
        cfg = ExperimentConfig.paper()
    else:
        cfg = ExperimentConfig.desk()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "paper_faithful_rounding", False):
        cfg = replace(cfg, rounding=replace(cfg.rounding, paper_faithful=True))
    return cfg


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="experiment config JSON (overrides --preset)")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--paper-faithful-rounding", action="store_true")


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    scen = cfg.scenario(mode=args.mode, cache_size=args.cache_size)
    out = args.out or Path("scenario.json")
    if out.is_dir():
        out = out / "scenario.json"
    scen.to_json(out)
    print(f"wrote {out}")
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    if args.scenario:
        scen = Scenario.from_json(args.scenario)
    else:
        scen = cfg.scenario(mode=args.mode, cache_size=args.cache_size)
    slot = scen.slot(args.slot)
    lam = args.lam
    qos = cfg.qos(lam)
    lifted = LiftedScenario(
        channels=slot.channels,
        delta=scen.placement.delta,
        popularity=scen.popularity.probabilities,
        sinr_targets=qos.sinr_targets,
        noise_power_w=scen.noise_power_w,
        p_max_w=cfg.p_max_w,
        weight_lambda=lam,
        theta=cfg.theta,
        bs_count=scen.geometry.bs_count,
        antennas_per_bs=scen.channel.antennas_per_bs,
    )
    rel = mm_optimize(lifted, cfg.solver, cfg.mm)
    report_doc = {
        "slot": args.slot,
        "lambda": lam,
        "relaxation": {
            "status": rel.status.value,
            "objective": rel.objective,
            "rounds": rel.rounds,
            "cuts": rel.cut_count,
            "max_violation": rel.max_violation,
            "solver_residuals": list(rel.solver_residuals),
        },
    }
    if rel.status.value != "infeasible":
        rng = stream_rng(scen.master_seed, f"rounding/{scen.placement.mode}/{scen.placement.cache_size}/{lam!r}", args.slot)
        rounding = gaussian_randomize(
            rel.w_matrices,
            slot.channels,
            scen.placement,
            scen.popularity,
            qos,
            scen.noise_power_w,
            cfg.rounding.trials,
            rng,
            cfg.rounding,
        )
        report_doc["rounding"] = rounding.to_dict()
        if rounding.feasible:
            print(
                f"slot {args.slot}: relaxed={rel.objective:.6g} exact_total={rounding.best_objective:.6g} "
                f"power={rounding.best_cost.power_cost:.6g} backhaul={rounding.best_cost.backhaul_cost:.6g}"
            )
        else:
            print(f"slot {args.slot}: rounding found no feasible candidate")
    else:
        print(f"slot {args.slot}: infeasible")
    if args.out:
        out = args.out / "slot_report.json" if args.out.is_dir() else args.out
        out.write_text(json.dumps(report_doc, indent=1))
        print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    records = run_tradeoff_sweep(cfg, log=print if args.verbose else None)
    out = args.out or Path(".")
    if out.suffix == ".csv":
        csv_path = out
        csv_path.parent.mkdir(parents=True, exist_ok=True)
    else:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "records.csv"
    write_records_csv(records, csv_path)
    print(f"wrote {csv_path}")
    return 0


def cmd_gains(args) -> int:
    records = read_records_csv(args.records)
    table = gain_table(records)
    print(render_gain_table(table))
    if args.out:
        out = args.out / "gains.json" if args.out.is_dir() else args.out
        out.write_text(json.dumps(table, indent=1))
        print(f"wrote {out}")
    return 0


def cmd_validate(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 2024)
    n_sdp, n_grid, n_single = (10, 4, 5) if args.quick else (50, 20, 20)
    reports = oracle.run_validation_suite(rng, n_random_sdp=n_sdp, n_grid=n_grid, n_single_user=n_single)
    print(oracle.render_report_table(reports))
    if args.out:
        out = args.out / "validation.json" if args.out.is_dir() else args.out
        out.write_text(json.dumps([r.to_dict() for r in reports], indent=1))
        print(f"wrote {out}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_solve_conic(args) -> int:
    prob = conic.ConicProblem.from_json(args.problem)
    sol = conic.solve(prob)
    doc = sol.to_dict()
    if args.out:
        out = args.out / "solution.json" if args.out.is_dir() else args.out
        out.write_text(json.dumps(doc, indent=1))
    print(f"status={sol.status.value} objective={sol.objective:.9g} residuals={sol.residuals}")
    if sol.status == conic.SolveStatus.OPTIMAL:
        return 0
    if sol.status == conic.SolveStatus.INFEASIBLE:
        return 2
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cachebeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a scenario JSON document")
    _add_common(p)
    p.add_argument("--mode", choices=["none", "uncoded", "coded"], default="coded")
    p.add_argument("--cache-size", type=int, default=3)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="optimize one time slot and report costs")
    _add_common(p)
    p.add_argument("--scenario", type=Path, help="scenario JSON from `generate`")
    p.add_argument("--mode", choices=["none", "uncoded", "coded"], default="coded")
    p.add_argument("--cache-size", type=int, default=3)
    p.add_argument("--slot", type=int, default=0)
    p.add_argument("--lam", type=float, default=0.6)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run the full trade-off sweep, write records CSV")
    _add_common(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gains", help="saturated-backhaul reduction table from sweep records")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_gains)

    p = sub.add_parser("validate", help="run the oracle cross-check suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-conic", help="solve a dumped standard-form conic problem")
    p.add_argument("problem", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_solve_conic)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HarnessError, ScenarioError, conic.ConicFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
