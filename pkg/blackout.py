#!/usr/bin/env python3
"""
Cascading Blackout Risk Engine

Find the multi-branch outages that black out a transmission grid and
estimate the risk they carry when branch failures are spatially correlated:

- simulate:      run one DC cascade (or the full N-1 screen)
- rc-campaign:   Random Chemistry search for minimal blackout sets
- brute-force:   exhaustive N-2 / N-3 enumeration for small cases
- estimate-size: Chao and RCP bounds on the number of N-3 malignancies
- jointp:        joint outage probability of a branch set
- risk:          system risk over a correlation grid
- load-sweep:    risk against system load level
- analyze:       CSV datasets for accumulation, frequencies and distributions

Usage:
    python blackout.py simulate --case data/cases/stress_pockets.json --outages 11,12
    python blackout.py rc-campaign --case data/cases/stress_pockets.json --trials 20000
    python blackout.py risk --case data/cases/stress_pockets.json --ledger output/ledger.jsonl
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import pandas as pd

# Ensure src is in path
sys.path.insert(0, str(Path(__file__).parent))

from src import settings
from src.analysis import (
    accumulation_table,
    blackout_size_distribution,
    branch_frequency_table,
    distance_summary,
    malignant_vs_benign_distances,
    pair_frequency_table,
    pairwise_distance_distribution,
)
from src.cascade_sim import SimConfig, n_minus_1_report, simulate
from src.copula_risk import CorrelationModel, ProbabilityCache, contingency_joint
from src.download_data import download_case
from src.grid_model import (
    GridCase,
    apply_probabilities,
    load_case,
    load_probabilities,
    relieve_overloads,
    synthesize_coordinates,
    write_case,
    write_coordinates,
)
from src.ledger import load_ledger, meta_path
from src.manifest import RunManifest
from src.rc_sampler import CampaignConfig, RCScheme, audit_ledger, enumerate_malignancies, run_campaign
from src.render_report import render_report
from src.risk_engine import SetSizePolicy, estimate_risk, exact_k2_policy, k3_policy, load_sweep, risk_grid
from src.set_estimation import EstimationConfig, bounds_trajectory, chao_confidence, rcp_estimate, undersampling_report

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3

ANALYSES = ("accumulation", "pair-freq", "branch-freq", "distributions", "distances", "bounds")


def parse_floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def parse_ints(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def banner(title: str, *lines: str) -> None:
    print(f"\n{'='*60}")
    print(title)
    for line in lines:
        print(line)
    print(f"{'='*60}\n")


def workers_from(args) -> int:
    return args.workers if args.workers is not None else settings.default_workers()


def sim_config_from(args) -> SimConfig:
    return SimConfig(blackout_threshold=args.threshold)


def load_case_from(args) -> GridCase:
    case = load_case(
        args.case,
        format=args.format,
        coordinates=args.coords,
        unrated_rate_mw=args.unrated_rate,
    )
    if args.probabilities:
        case = apply_probabilities(case, load_probabilities(args.probabilities))
    return case


def config_snapshot(args) -> dict:
    return {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in vars(args).items()
        if key not in ("func", "verbose")
    }


def write_manifest(manifest: RunManifest, directory: Path) -> None:
    path = manifest.write(directory)
    print(f"   Manifest: {path}")


def write_csv(frame: pd.DataFrame, path: Path, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    manifest.add_output(path)
    print(f"   Wrote {len(frame)} rows to {path}")
    return path


def cmd_simulate(args) -> int:
    config = sim_config_from(args)
    manifest = RunManifest.for_case("simulate", args.case, config=config_snapshot(args))

    print("[1/2] Loading case...")
    case = load_case_from(args)
    print(f"   {len(case.buses)} buses, {case.n_branches} branches, {case.total_load:.1f} MW load")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    if args.n_1:
        print("\n[2/2] Screening every single-branch outage...")
        rows = [{"branch_id": branch_id, **outcome.to_dict()} for branch_id, outcome in n_minus_1_report(case, config)]
        report = pd.DataFrame(rows)
        report["trip_sequence"] = report["trip_sequence"].map(lambda seq: " ".join(map(str, seq)))
        write_csv(report, args.out_dir / "n_minus_1.csv", manifest)
        insecure = report[report["is_blackout"]]
        print(f"   {len(insecure)} single outages cause a blackout")
    else:
        if not args.outages:
            raise ValueError("simulate needs --outages or --n-1")
        print(f"\n[2/2] Simulating outage of branches {args.outages}...")
        outcome = simulate(case, args.outages, config)
        payload = {"outages": sorted(args.outages), **outcome.to_dict()}
        print(json.dumps(payload, indent=2))
        path = args.out_dir / "outcome.json"
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2)
        manifest.add_output(path)
    write_manifest(manifest, args.out_dir)
    return EXIT_OK


def _reset_ledger(path: Path) -> None:
    for stale in (path, meta_path(path)):
        if stale.exists():
            stale.unlink()


def cmd_rc_campaign(args) -> int:
    workers = workers_from(args)
    print("[1/3] Loading case...")
    case = load_case_from(args)
    scheme = RCScheme.parse(args.scheme, len(case.in_service_branch_ids), args.max_subsamples)
    config = CampaignConfig(
        n_trials=args.trials, scheme=scheme, seed=args.seed, workers=workers,
        checkpoint_every=args.checkpoint_every, sim=sim_config_from(args),
    )
    manifest = RunManifest.for_case(
        "rc-campaign", args.case, seed=args.seed, scheme=list(scheme.sizes), config=config_snapshot(args)
    )

    banner(
        f"RC campaign on {case.name or args.case}",
        f"Scheme: {scheme}  Trials: {args.trials}  Seed: {args.seed}  Workers: {workers}",
    )

    if not args.resume:
        _reset_ledger(args.out)

    print("[2/3] Running trials...")

    def progress(done: int, total: int, unique: int) -> None:
        print(f"   {done}/{total} trials, {unique} unique malignancies")

    ledger = run_campaign(
        case, scheme, args.trials, args.seed, checkpoint=args.out,
        workers=workers, checkpoint_every=config.checkpoint_every, sim_config=config.sim,
        progress=progress,
        manifest={"case_sha256": manifest.case_sha256, "blackout_threshold": config.sim.blackout_threshold},
    )
    manifest.add_output(args.out)

    print("\n[3/3] Summary")
    print(f"   Trials run: {ledger.trials_run} ({ledger.trials_aborted} aborted)")
    for k in ledger.orders():
        counts = ledger.occurrence_counts(k)
        print(f"   N-{k}: {len(counts)} unique of {sum(counts.values())} discoveries")
    if args.audit:
        violations = audit_ledger(case, ledger, config.sim)
        print(f"   Minimality audit: {len(violations)} violations")
        for key, reason in violations:
            print(f"     {key}: {reason}")
    write_manifest(manifest, args.out.parent)
    return EXIT_OK


def cmd_brute_force(args) -> int:
    workers = workers_from(args)
    manifest = RunManifest.for_case("brute-force", args.case, config=config_snapshot(args))
    print("[1/2] Loading case...")
    case = load_case_from(args)

    print(f"\n[2/2] Enumerating minimal blackout sets up to N-{args.k_max}...")
    found = enumerate_malignancies(case, args.k_max, sim_config_from(args), workers)
    rows = [
        {"k": k, "branches": " ".join(map(str, m.branches)), "shed_mw": m.blackout_size_mw}
        for k in sorted(found)
        for m in sorted(found[k], key=lambda m: m.key)
    ]
    for k in sorted(found):
        print(f"   N-{k}: {len(found[k])} malignancies")
    write_csv(pd.DataFrame(rows, columns=["k", "branches", "shed_mw"]), args.out, manifest)
    write_manifest(manifest, args.out.parent)
    return EXIT_OK


def cmd_estimate_size(args) -> int:
    workers = workers_from(args)
    manifest = RunManifest.for_case("estimate-size", args.case, config=config_snapshot(args))
    print("[1/3] Loading case and ledger...")
    case = load_case_from(args)
    ledger = load_ledger(args.ledger)
    config = EstimationConfig(k=args.k)

    print("\n[2/3] Estimating set size...")
    bounds = rcp_estimate(
        case, ledger, config, sim_config_from(args), require_stable=not args.allow_unstable, workers=workers
    )
    low, high = chao_confidence(ledger, args.k)
    payload = {**bounds.to_dict(), "chao_ci_low": low, "chao_ci_high": high}
    print(f"   Unique N-{args.k} found: {bounds.unique_found}")
    print(f"   Chao lower bound: {bounds.chao_lower:.1f} (95% CI {low:.1f} to {high:.1f})")
    print(f"   RCP upper bound:  {bounds.rcp_upper:.1f} (q = {bounds.q_proportion:.3f} for pair {bounds.pair_max})")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "size_bounds.json"
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2)
    manifest.add_output(path)

    print(f"\n[3/3] Checking sampling of the top {args.top_m} pairs...")
    report = undersampling_report(case, ledger, args.top_m, sim_config_from(args), workers, args.k)
    write_csv(report, args.out_dir / "undersampling.csv", manifest)
    write_manifest(manifest, args.out_dir)
    return EXIT_OK


def cmd_jointp(args) -> int:
    manifest = RunManifest.for_case("jointp", args.case, config=config_snapshot(args))
    case = load_case_from(args)
    model = CorrelationModel(args.rho0, args.L)
    result = contingency_joint(case, args.branches, model, strict=args.strict)
    independent = 1.0
    for branch_id in args.branches:
        independent *= case.branch_probability(branch_id)
    print(f"Branches:        {sorted(args.branches)}")
    print(f"rho0 = {args.rho0}, L = {args.L} km")
    print(f"Joint p:         {result.value:.6e}")
    print(f"Error estimate:  {result.abs_error_estimate:.3e} ({result.method})")
    print(f"Independent p:   {independent:.6e}")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "jointp.json"
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({
            "branches": sorted(args.branches),
            "rho0": args.rho0,
            "L": args.L,
            "value": result.value,
            "abs_error_estimate": result.abs_error_estimate,
            "method": result.method,
            "tolerance_met": result.tolerance_met,
            "independent": independent,
        }, f, indent=2)
    manifest.add_output(path)
    write_manifest(manifest, args.out_dir)
    return EXIT_OK


def set_sizes_from(args, case: GridCase, ledger, workers: int) -> dict[int, SetSizePolicy]:
    set_sizes = {}
    if ledger.occurrence_counts(2):
        set_sizes[2] = SetSizePolicy.exact(args.k2_size) if args.k2_size else exact_k2_policy(ledger)
    k3 = k3_policy(
        case, ledger, args.k3_bounds, require_stable=False, workers=workers, sim_config=sim_config_from(args)
    )
    if k3 is not None:
        set_sizes[3] = k3
    return set_sizes


def cmd_risk(args) -> int:
    workers = workers_from(args)
    manifest = RunManifest.for_case("risk", args.case, config=config_snapshot(args))
    print("[1/3] Loading case and ledger...")
    case = load_case_from(args)
    ledger = load_ledger(args.ledger)

    print("\n[2/3] Sizing malignancy sets...")
    set_sizes = set_sizes_from(args, case, ledger, workers)
    for k, policy in sorted(set_sizes.items()):
        size = f"{policy.lower:.1f}" if policy.is_exact else f"{policy.lower:.1f} to {policy.upper:.1f}"
        print(f"   |Omega_{k}| = {size}")

    print(f"\n[3/3] Evaluating {len(args.rho0) * len(args.L)} correlation settings...")
    grid = risk_grid(case, ledger, args.rho0, args.L, set_sizes, ProbabilityCache(case))
    write_csv(grid, args.out, manifest)
    write_manifest(manifest, args.out.parent)
    return EXIT_OK


def cmd_load_sweep(args) -> int:
    workers = workers_from(args)
    manifest = RunManifest.for_case("load-sweep", args.case, seed=args.seed, config=config_snapshot(args))
    print("[1/2] Loading case...")
    case = load_case_from(args)
    scheme = None if args.scheme == "auto" else RCScheme.parse(args.scheme, len(case.in_service_branch_ids))
    campaign = CampaignConfig(
        n_trials=args.trials, scheme=scheme, seed=args.seed, workers=workers, sim=sim_config_from(args)
    )

    print(f"\n[2/2] Sweeping {len(args.factors)} load levels...")
    table = load_sweep(case, args.factors, CorrelationModel(args.rho0, args.L), campaign, args.k3_bounds)
    write_csv(table, args.out, manifest)
    write_manifest(manifest, args.out.parent)
    return EXIT_OK


def cmd_analyze(args) -> int:
    manifest = RunManifest.for_case("analyze", args.case, config=config_snapshot(args))
    ledger = load_ledger(args.ledger)
    case = load_case_from(args) if args.case else None
    out = args.out_dir
    if args.kind in ("distances", "bounds") and case is None:
        raise ValueError(f"analyze {args.kind} needs --case")

    print(f"Analyzing {args.ledger}: {args.kind}")
    if args.kind == "accumulation":
        write_csv(accumulation_table(ledger, args.k), out / "accumulation.csv", manifest)
    elif args.kind == "pair-freq":
        write_csv(pair_frequency_table(ledger, args.k or 3, args.top_m), out / "pair_frequencies.csv", manifest)
    elif args.kind == "branch-freq":
        write_csv(branch_frequency_table(ledger, args.k or 2), out / "branch_frequencies.csv", manifest)
    elif args.kind == "distributions":
        sizes, size_medians = blackout_size_distribution(ledger)
        write_csv(sizes, out / "blackout_sizes.csv", manifest)
        write_csv(size_medians, out / "blackout_size_medians.csv", manifest)
        if case is not None:
            distances, distance_medians = pairwise_distance_distribution(case, ledger)
            write_csv(distances, out / "pairwise_distances.csv", manifest)
            write_csv(distance_medians, out / "pairwise_distance_medians.csv", manifest)
    elif args.kind == "distances":
        distances = malignant_vs_benign_distances(case, ledger, args.benign_pairs, args.seed)
        write_csv(distances, out / "malignant_vs_benign_distances.csv", manifest)
        write_csv(distance_summary(distances), out / "distance_summary.csv", manifest)
    elif args.kind == "bounds":
        checkpoints = args.checkpoints or [
            max(1, round(ledger.trials_run * i / 10)) for i in range(1, 11)
        ]
        trajectory = bounds_trajectory(case, ledger, checkpoints, sim_config_from(args), workers_from(args))
        write_csv(trajectory, out / "bounds_trajectory.csv", manifest)
    write_manifest(manifest, out)
    return EXIT_OK


def cmd_layout(args) -> int:
    manifest = RunManifest.for_case("layout", args.case, seed=args.seed, config=config_snapshot(args))
    print("[1/2] Loading case without coordinates...")
    case = load_case(
        args.case, format=args.format, allow_missing_coordinates=True, unrated_rate_mw=args.unrated_rate
    )
    print(f"\n[2/2] Placing {len(case.buses)} buses over {args.extent_km:g} km...")
    coords = synthesize_coordinates(case, args.extent_km, args.seed)
    manifest.add_output(write_coordinates(coords, args.out))
    print(f"   Coordinates: {args.out}")
    if args.case_out:
        placed = load_case(
            args.case, format=args.format, coordinates=args.out, unrated_rate_mw=args.unrated_rate
        )
        if args.relieve:
            placed, adjusted = relieve_overloads(placed)
            print(f"   Raised ratings of {len(adjusted)} overloaded branches")
        manifest.add_output(write_case(placed, args.case_out))
        print(f"   Case: {args.case_out}")
    write_manifest(manifest, args.out.parent)
    return EXIT_OK


def cmd_download(args) -> int:
    manifest = RunManifest("download", config=config_snapshot(args))
    for name in args.names:
        path = download_case(name, force=args.force, cases_dir=args.out_dir)
        manifest.add_output(path)
        print(f"   {name}: {path}")
    write_manifest(manifest, args.out_dir)
    return EXIT_OK


def cmd_report(args) -> int:
    manifest = RunManifest("report", config=config_snapshot(args))
    path = render_report(args.risk, args.manifest, args.bounds, args.out)
    manifest.add_output(path)
    print(f"Generated report: {path}")
    write_manifest(manifest, path.parent)
    return EXIT_OK


def add_case_arguments(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--case", type=Path, required=required, help="Case file (native JSON or MATPOWER .m)")
    parser.add_argument("--format", choices=["native-json", "matpower-text"], help="Case format (default: from suffix)")
    parser.add_argument("--coords", type=Path, help="Bus coordinate CSV (bus_id,x_km,y_km)")
    parser.add_argument("--unrated-rate", type=float, help="RateA (MW) for MATPOWER branches with RateA = 0")
    parser.add_argument("--probabilities", type=Path, help="Per-branch outage probability CSV (branch_id,p)")


def add_sim_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threshold", type=float, default=settings.BLACKOUT_THRESHOLD,
        help=f"Blackout threshold as a fraction of load (default: {settings.BLACKOUT_THRESHOLD})",
    )


def add_workers_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workers", type=int, help="Worker processes (default: BLACKOUT_WORKERS, config.py, or CPU count)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Cascading blackout risk engine",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python blackout.py simulate --case data/cases/stress_pockets.json --outages 11,12
    python blackout.py simulate --case data/cases/stress_pockets.json --n-1
    python blackout.py rc-campaign --case data/cases/stress_pockets.json --trials 20000 --seed 7
    python blackout.py estimate-size --case data/cases/stress_pockets.json --ledger output/ledger.jsonl
    python blackout.py risk --case data/cases/stress_pockets.json --ledger output/ledger.jsonl \\
        --rho0 0,0.05,0.10,0.15 --L 0,100,200,300 --out output/risk.csv
    python blackout.py analyze distributions --case data/cases/stress_pockets.json --ledger output/ledger.jsonl
    python blackout.py report --risk output/risk.csv --manifest output/manifest.json

MATPOWER cases without geography:
    1. Run: python blackout.py download case30
    2. Run: python blackout.py layout --case data/cases/case30.m --out data/cases/case30_coords.csv
        """
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    out = settings.OUTPUT_DIR

    p = sub.add_parser("simulate", help="Run one cascade or the N-1 screen")
    add_case_arguments(p)
    add_sim_arguments(p)
    p.add_argument("--outages", type=parse_ints, help="Comma-separated initiating branch ids")
    p.add_argument("--n-1", dest="n_1", action="store_true", help="Simulate every single-branch outage")
    p.add_argument("--out-dir", type=Path, default=out, help="Output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rc-campaign", help="Random Chemistry campaign")
    add_case_arguments(p)
    add_sim_arguments(p)
    add_workers_argument(p)
    p.add_argument("--trials", type=int, required=True, help="Number of RC trials")
    p.add_argument("--scheme", default="auto", help="Subset sizes, e.g. 80,40,20,14,10,7,5, or 'auto'")
    p.add_argument("--max-subsamples", type=int, default=20, help="Draws per stage before a trial aborts")
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="Campaign seed")
    p.add_argument("--checkpoint-every", type=int, default=settings.CHECKPOINT_EVERY, help="Trials between checkpoints")
    p.add_argument("--out", type=Path, default=out / "ledger.jsonl", help="Ledger file (JSON-lines)")
    p.add_argument("--resume", action="store_true", help="Continue an existing ledger instead of replacing it")
    p.add_argument("--audit", action="store_true", help="Re-simulate every malignancy to check minimality")
    p.set_defaults(func=cmd_rc_campaign)

    p = sub.add_parser("brute-force", help="Exhaustive malignancy enumeration (small cases)")
    add_case_arguments(p)
    add_sim_arguments(p)
    add_workers_argument(p)
    p.add_argument("--k-max", type=int, default=2, choices=[2, 3], help="Largest order to enumerate")
    p.add_argument("--out", type=Path, default=out / "brute_force.csv", help="Output CSV")
    p.set_defaults(func=cmd_brute_force)

    p = sub.add_parser("estimate-size", help="Chao and RCP bounds on the N-3 set size")
    add_case_arguments(p)
    add_sim_arguments(p)
    add_workers_argument(p)
    p.add_argument("--ledger", type=Path, required=True, help="Campaign ledger")
    p.add_argument("--k", type=int, default=3, choices=[3], help="Malignancy order")
    p.add_argument("--top-m", type=int, default=20, help="Pairs in the undersampling table")
    p.add_argument("--allow-unstable", action="store_true", help="Warn instead of failing when Pair_max is unstable")
    p.add_argument("--out-dir", type=Path, default=out, help="Output directory")
    p.set_defaults(func=cmd_estimate_size)

    p = sub.add_parser("jointp", help="Joint outage probability of a branch set")
    add_case_arguments(p)
    p.add_argument("--branches", type=parse_ints, required=True, help="Comma-separated branch ids (2 to 5)")
    p.add_argument("--rho0", type=float, default=0.0, help="Correlation at zero distance")
    p.add_argument("--L", type=float, default=0.0, help="Characteristic length (km)")
    p.add_argument("--strict", action="store_true", help="Fail when the integration tolerance is not met")
    p.add_argument("--out-dir", type=Path, default=out, help="Output directory")
    p.set_defaults(func=cmd_jointp)

    p = sub.add_parser("risk", help="System risk over a correlation grid")
    add_case_arguments(p)
    add_sim_arguments(p)
    add_workers_argument(p)
    p.add_argument("--ledger", type=Path, required=True, help="Campaign ledger")
    p.add_argument("--rho0", type=parse_floats, default=[0.0, 0.05, 0.10, 0.15], help="rho0 values")
    p.add_argument("--L", type=parse_floats, default=[0.0, 100.0, 200.0, 300.0], help="L values (km)")
    p.add_argument("--k3-bounds", type=lambda s: s.split(","), default=["chao", "rcp"],
                   help="N-3 set size estimators: chao, rcp and/or sampled")
    p.add_argument("--k2-size", type=int, help="Known |Omega_2| (default: sampled count)")
    p.add_argument("--out", type=Path, default=out / "risk.csv", help="Output CSV")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("load-sweep", help="Risk against load level")
    add_case_arguments(p)
    add_sim_arguments(p)
    add_workers_argument(p)
    p.add_argument("--factors", type=parse_floats, default=[0.8, 0.9, 1.0, 1.1, 1.15], help="Load factors")
    p.add_argument("--trials", type=int, required=True, help="RC trials per load level")
    p.add_argument("--scheme", default="auto", help="Subset sizes or 'auto'")
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="Campaign seed")
    p.add_argument("--rho0", type=float, default=0.0, help="Correlation at zero distance")
    p.add_argument("--L", type=float, default=0.0, help="Characteristic length (km)")
    p.add_argument("--k3-bounds", type=lambda s: s.split(","), default=["chao", "rcp"], help="N-3 set size estimators")
    p.add_argument("--out", type=Path, default=out / "load_sweep.csv", help="Output CSV")
    p.set_defaults(func=cmd_load_sweep)

    p = sub.add_parser("analyze", help="CSV datasets describing a campaign")
    p.add_argument("kind", choices=ANALYSES, help="Dataset to emit")
    add_case_arguments(p, required=False)
    add_sim_arguments(p)
    add_workers_argument(p)
    p.add_argument("--ledger", type=Path, required=True, help="Campaign ledger")
    p.add_argument("--k", type=int, help="Malignancy order (default depends on the dataset)")
    p.add_argument("--top-m", type=int, help="Keep only the top pairs")
    p.add_argument("--benign-pairs", type=int, default=1_000_000, help="Random benign pairs for the distance baseline")
    p.add_argument("--seed", type=int, default=settings.DEFAULT_SEED, help="Seed for benign pair sampling")
    p.add_argument("--checkpoints", type=parse_ints, help="Trial counts for the bounds trajectory")
    p.add_argument("--out-dir", type=Path, default=out, help="Output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("layout", help="Synthesize bus coordinates for a case without geography")
    p.add_argument("--case", type=Path, required=True, help="Case file")
    p.add_argument("--format", choices=["native-json", "matpower-text"], help="Case format (default: from suffix)")
    p.add_argument("--unrated-rate", type=float, help="RateA (MW) for MATPOWER branches with RateA = 0")
    p.add_argument("--extent-km", type=float, default=500.0, help="Width of the layout (km)")
    p.add_argument("--seed", type=int, default=0, help="Layout seed")
    p.add_argument("--out", type=Path, required=True, help="Coordinate CSV to write")
    p.add_argument("--case-out", type=Path, help="Also write the placed case as native JSON")
    p.add_argument("--relieve", action="store_true", help="Raise ratings of branches overloaded in the base case")
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("download", help="Fetch MATPOWER cases")
    p.add_argument("names", nargs="+", help="Case names, e.g. case30 case118")
    p.add_argument("--force", action="store_true", help="Force re-download")
    p.add_argument("--out-dir", type=Path, default=settings.CASES_DIR, help="Case directory")
    p.set_defaults(func=cmd_download)

    p = sub.add_parser("report", help="Markdown risk summary")
    p.add_argument("--risk", type=Path, required=True, help="Risk grid CSV")
    p.add_argument("--manifest", type=Path, help="Manifest of the risk run")
    p.add_argument("--bounds", type=Path, help="size_bounds.json from estimate-size")
    p.add_argument("--out", type=Path, help="Report path (default: next to the CSV)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"\nError: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as e:
        print(f"\nError: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, OSError) as e:
        print(f"\nError: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
