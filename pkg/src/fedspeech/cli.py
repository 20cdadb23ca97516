"""Command-line entry point.

Subcommands::

    analyze       per-layer and per-module parameter / FLOP breakdown
    memory        forward-pass memory timeline and peak
    predict-time  seconds per batch on a device, with a memory-fit verdict
    fl-plan       partition + schedule + wall-clock + communication estimate
    fl-sim        synthetic federated run with fedavg or loss-weighted serving
    forecast      device parity year under a compute-doubling trend
    validate      run every built-in reference check and print a table

Exit codes: 0 success, 2 configuration or validation error, 3 data error
(manifest problems), 4 infeasible request (failed memory fit with
--fail-on-oom). Reports embed the resolved configuration and are
byte-identical across runs with the same inputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checks as checks_mod
from .aggregation import AggMethod, AggregationConfig, SyntheticFLConfig, run_synthetic_fl
from .arch import Precision, WorkloadSpec, arch_to_mapping, parse_precision
from .config import (config_fingerprint, load_config, resolve_arch, resolve_calibration,
                     resolve_profiles)
from .costs import forward_flops, module_rollup
from .devices import FitVerdict, check_fit, get_profile, predict_batch_time, \
    training_residency_bytes
from .errors import (ConfigError, FedspeechError, InfeasibleError, MalformedRowError,
                     MissingColumnError)
from .federation import (estimate_communication, estimate_wall_clock, load_manifest,
                         partition_by_speaker, schedule_rounds, uniform_assignment,
                         uniform_partition)
from .memory import memory_timeline
from .report import (COST_CSV_HEADER, TIMELINE_CSV_HEADER, TRAJECTORY_CSV_HEADER,
                     cost_report_payload, cost_report_rows, partition_payload,
                     schedule_payload, timeline_payload, timeline_rows,
                     trajectory_payload, trajectory_rows, wall_clock_payload,
                     write_csv, write_json)
from .trend import parity_year

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4


def _meta(args: argparse.Namespace, arch=None, **extra) -> dict:
    resolved = {"command": args.command, **extra}
    if arch is not None:
        resolved["arch"] = arch_to_mapping(arch)
    if getattr(args, "seed", None) is not None:
        resolved["seed"] = args.seed
    resolved["fingerprint"] = config_fingerprint(resolved)
    return resolved


def _workload_from(args: argparse.Namespace, cfg: dict) -> WorkloadSpec:
    w = cfg.get("workload", {})
    return WorkloadSpec(
        duration_s=args.duration if args.duration is not None
        else float(w.get("duration_s", 5.5)),
        sample_rate_hz=int(w.get("sample_rate_hz", 16_000)),
        batch=args.batch if args.batch is not None else int(w.get("batch", 1)),
        precision=parse_precision(args.precision or w.get("precision", "fp32")))


def _out_dir(args: argparse.Namespace, cfg: dict) -> Path:
    out = args.out or cfg.get("output_dir", "reports")
    return Path(out)


# ------------------------------------------------------------------ commands


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    arch = resolve_arch(cfg, args.arch)
    workload = _workload_from(args, cfg)
    report = forward_flops(arch, workload)
    meta = _meta(args, arch, workload={"duration_s": workload.duration_s,
                                       "sample_rate_hz": workload.sample_rate_hz,
                                       "batch": workload.batch,
                                       "precision": workload.precision.value})
    out = _out_dir(args, cfg)
    write_json(out / "analyze.json", cost_report_payload(report, meta))
    write_csv(out / "analyze.csv", COST_CSV_HEADER, cost_report_rows(report))
    write_csv(out / "analyze_modules.csv", ["module", "params_m", "gflops"],
              [[row["module"], f"{row['params'] / 1e6:.4f}", f"{row['gflops']:.4f}"]
               for row in module_rollup(report)])
    print(f"{arch.name}: {report.total_params / 1e6:.2f} M params, "
          f"{report.total_fwd_flops / 1e9:.2f} GFLOPs forward "
          f"({workload.duration_s} s, batch {workload.batch})")
    for row in module_rollup(report):
        print(f"  {row['module']:<12} {row['params'] / 1e6:10.2f} M "
              f"{row['gflops']:10.2f} GF")
    print(f"wrote {out / 'analyze.json'} and {out / 'analyze.csv'}")
    return EXIT_OK


def cmd_memory(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    arch = resolve_arch(cfg, args.arch)
    workload = _workload_from(args, cfg)
    cal = resolve_calibration(cfg)
    timeline = memory_timeline(arch, workload, cal)
    meta = _meta(args, arch, workload={"duration_s": workload.duration_s,
                                       "batch": workload.batch,
                                       "precision": workload.precision.value},
                 activation_overhead=cal.activation_overhead)
    out = _out_dir(args, cfg)
    write_json(out / "memory.json", timeline_payload(timeline, meta))
    write_csv(out / "memory.csv", TIMELINE_CSV_HEADER, timeline_rows(timeline))
    print(f"{arch.name} @ {workload.duration_s} s, batch {workload.batch}, "
          f"{workload.precision.value}: peak {timeline.peak_bytes / 1e9:.2f} GB "
          f"(static {timeline.static_bytes / 1e9:.2f} GB, "
          f"activations {timeline.activation_bytes / 1e9:.2f} GB)")
    print(f"wrote {out / 'memory.json'} and {out / 'memory.csv'}")
    return EXIT_OK


def cmd_predict_time(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    arch = resolve_arch(cfg, args.arch)
    workload = _workload_from(args, cfg)
    profiles = resolve_profiles(cfg)
    profile = get_profile(args.device, profiles)
    cal = resolve_calibration(cfg)
    pred = predict_batch_time(profile, arch, workload)
    peak = training_residency_bytes(arch, workload, cal)
    verdict = check_fit(profile, peak)
    if args.fail_on_oom and verdict is FitVerdict.OOM:
        raise InfeasibleError(
            f"{arch.name} at batch {workload.batch} does not fit on {profile.name}: "
            f"{peak / 1e9:.2f} GB vs {profile.memory_budget_bytes / 1e9:.2f} GB")
    meta = _meta(args, arch, device=profile.name,
                 workload={"duration_s": workload.duration_s, "batch": workload.batch,
                           "precision": workload.precision.value})
    out = _out_dir(args, cfg)
    write_json(out / "predict_time.json", {
        "meta": meta,
        "device": profile.name,
        "seconds_per_batch": pred.seconds_per_batch,
        "effective_throughput_flops": pred.effective_throughput,
        "anchor": {"arch": pred.anchor_used.arch_name,
                   "batch": pred.anchor_used.batch,
                   "precision": pred.anchor_used.precision.value,
                   "seconds_per_batch": pred.anchor_used.seconds_per_batch},
        "residency_bytes": peak,
        "fit": verdict.value,
    })
    write_csv(out / "predict_time.csv",
              ["device", "arch", "duration_s", "batch", "precision",
               "seconds_per_batch", "fit"],
              [[profile.name, arch.name, workload.duration_s, workload.batch,
                workload.precision.value, f"{pred.seconds_per_batch:.6g}",
                verdict.value]])
    print(f"{profile.name}: {pred.seconds_per_batch:.3f} s/batch for {arch.name} "
          f"({workload.duration_s} s, batch {workload.batch}, "
          f"{workload.precision.value}); memory fit: {verdict.value}")
    print(f"wrote {out / 'predict_time.json'} and {out / 'predict_time.csv'}")
    return EXIT_OK


def cmd_fl_plan(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    fl = cfg.get("fl", {})
    arch = resolve_arch(cfg, args.arch)
    profiles = resolve_profiles(cfg)
    profile = get_profile(args.device or "a40", profiles)
    cal = resolve_calibration(cfg)
    clients = args.clients if args.clients is not None else int(fl.get("clients", 10))
    rounds = args.rounds if args.rounds is not None else int(fl.get("rounds", 150))
    per_round = args.per_round if args.per_round is not None else int(
        fl.get("per_round", clients))
    batch = args.batch if args.batch is not None else int(fl.get("batch", 4))
    local_epochs = args.local_epochs if args.local_epochs is not None else int(
        fl.get("local_epochs", 1))
    seed = args.seed if args.seed is not None else int(fl.get("seed", 0))
    precision = parse_precision(args.precision or "fp32")

    if args.manifest:
        records = load_manifest(args.manifest)
        partition = partition_by_speaker(records, clients, seed)
    else:
        partition = uniform_partition(clients, args.samples_per_client,
                                      args.mean_duration)

    schedule = schedule_rounds(clients, per_round, rounds, seed)
    workload = WorkloadSpec(args.mean_duration, batch=batch, precision=precision)
    verdict = check_fit(profile, training_residency_bytes(arch, workload, cal))
    if args.fail_on_oom and verdict is FitVerdict.OOM:
        raise InfeasibleError(f"{arch.name} at batch {batch} does not fit on "
                              f"{profile.name}")
    estimate = estimate_wall_clock(partition, schedule,
                                   uniform_assignment(partition, profile), arch,
                                   batch=batch, local_epochs=local_epochs,
                                   precision=precision)
    comm = estimate_communication(arch, schedule, precision)

    meta = _meta(args, arch, device=profile.name, clients=clients, rounds=rounds,
                 per_round=per_round, batch=batch, local_epochs=local_epochs,
                 precision=precision.value)
    out = _out_dir(args, cfg)
    write_json(out / "fl_partition.json", partition_payload(partition, meta))
    write_json(out / "fl_schedule.json", schedule_payload(schedule, meta))
    write_json(out / "fl_plan.json", wall_clock_payload(estimate, comm, meta))
    write_csv(out / "fl_plan.csv",
              ["client_id", "device", "n_utterances", "seconds_per_local_epoch"],
              [[c.client_id, profile.name, c.n_utterances,
                f"{estimate.seconds_per_local_epoch[c.client_id]:.6g}"]
               for c in partition.clients])
    print(f"{clients} clients x {rounds} rounds on {profile.name}: "
          f"{estimate.total_hours:.1f} h total ({estimate.total_days:.2f} days), "
          f"{comm / 1e12:.3f} TB moved; memory fit: {verdict.value}")
    print(f"wrote {out / 'fl_plan.json'} (+ partition, schedule, csv)")
    return EXIT_OK


def cmd_fl_sim(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    agg_cfg = cfg.get("aggregation", {})
    method = AggMethod.LOSS_WEIGHTED if (args.agg or agg_cfg.get("method", "fedavg")) \
        in ("loss", "loss_weighted") else AggMethod.FEDAVG
    agg = AggregationConfig(
        method=method,
        alpha=args.alpha if args.alpha is not None else float(agg_cfg.get("alpha", 1.0)),
        epsilon=float(agg_cfg.get("epsilon", 1e-8)))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    optima = rng.normal(scale=args.spread, size=(args.clients, args.dim))
    sim = SyntheticFLConfig(
        optima=optima, n_samples=(args.samples,) * args.clients,
        learning_rate=args.lr, local_steps=args.local_steps, rounds=args.rounds,
        per_round=None if args.per_round in (None, args.clients) else args.per_round,
        seed=seed, report_pre_loss=args.pre_loss)
    trajectory = run_synthetic_fl(sim, agg)

    meta = _meta(args, None, agg=method.value, alpha=agg.alpha, clients=args.clients,
                 per_round=args.per_round or args.clients, rounds=args.rounds,
                 dim=args.dim, lr=args.lr, local_steps=args.local_steps)
    out = _out_dir(args, cfg)
    write_json(out / "fl_sim.json", trajectory_payload(trajectory, meta))
    write_csv(out / "fl_sim.csv", TRAJECTORY_CSV_HEADER, trajectory_rows(trajectory))
    last = trajectory.records[-1]
    print(f"{method.value}: {args.rounds} rounds, final population loss "
          f"{last.population_loss:.4g}, distance to weighted-mean optimum "
          f"{last.distance_to_optimum:.4g}")
    print(f"wrote {out / 'fl_sim.json'} and {out / 'fl_sim.csv'}")
    return EXIT_OK


def cmd_forecast(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    profiles = resolve_profiles(cfg)
    arch = resolve_arch(cfg, args.arch)
    device = get_profile(args.device, profiles)
    reference = get_profile(args.reference, profiles)

    combos = {}
    for batch in (1, 4):
        for precision in (Precision.FP32, Precision.MIXED):
            try:
                w = WorkloadSpec(5.5, batch=batch, precision=precision)
                slow = predict_batch_time(device, arch, w).seconds_per_batch
                fast = predict_batch_time(reference, arch, w).seconds_per_batch
                f = parity_year(args.base_year, slow, fast, args.doubling_months)
                combos[f"b{batch}-{precision.value}"] = {
                    "slow_s": slow, "fast_s": fast,
                    "slowdown_ratio": f.slowdown_ratio,
                    "years_to_parity": f.years_to_parity,
                    "parity_year": f.parity_year}
            except FedspeechError:
                continue
    headline_key = f"b{args.batch or 4}-{(args.precision or 'fp32')}"
    if headline_key not in combos:
        raise ConfigError(f"no anchors for the requested comparison {headline_key}")
    headline = combos[headline_key]

    meta = _meta(args, arch, device=device.name, reference=reference.name,
                 doubling_months=args.doubling_months, base_year=args.base_year)
    out = _out_dir(args, cfg)
    write_json(out / "forecast.json", {"meta": meta, "headline": headline_key,
                                       "combos": combos})
    print(f"{device.name} is {headline['slowdown_ratio']:.1f}x slower than "
          f"{reference.name} ({headline_key}); parity around "
          f"{headline['parity_year']:.1f} with {args.doubling_months:.0f}-month "
          "doubling")
    print(f"wrote {out / 'forecast.json'}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    results = checks_mod.run_all_checks()
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        if not r.passed:
            failed += 1
        print(f"{status}  {r.name:<{width}}  {r.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else 1


# -------------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser, workload: bool = True) -> None:
    p.add_argument("--config", help="YAML config path (or set FEDSPEECH_CONFIG)")
    p.add_argument("--out", help="output directory (default: reports)")
    p.add_argument("--arch", help="architecture preset (base or large)")
    if workload:
        p.add_argument("--duration", type=float, help="clip length in seconds")
        p.add_argument("--batch", type=int, help="batch size")
        p.add_argument("--precision", choices=["fp32", "mixed"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedspeech",
        description="Resource and feasibility planner for federated "
                    "self-supervised speech training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="parameter and FLOP breakdown")
    _add_common(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("memory", help="forward-pass memory timeline")
    _add_common(p)
    p.set_defaults(fn=cmd_memory)

    p = sub.add_parser("predict-time", help="per-batch training time on a device")
    _add_common(p)
    p.add_argument("--device", required=True)
    p.add_argument("--fail-on-oom", action="store_true",
                   help="exit 4 when the workload does not fit")
    p.set_defaults(fn=cmd_predict_time)

    p = sub.add_parser("fl-plan", help="federated wall-clock and traffic estimate")
    _add_common(p)
    p.add_argument("--manifest", help="TSV manifest; omit for an idealised corpus")
    p.add_argument("--clients", type=int)
    p.add_argument("--per-round", type=int, dest="per_round")
    p.add_argument("--rounds", type=int)
    p.add_argument("--local-epochs", type=int, dest="local_epochs")
    p.add_argument("--device")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples-per-client", type=int, dest="samples_per_client",
                   default=19_500, help="idealised corpus size per client")
    p.add_argument("--mean-duration", type=float, dest="mean_duration", default=5.5)
    p.add_argument("--fail-on-oom", action="store_true")
    p.set_defaults(fn=cmd_fl_plan)

    p = sub.add_parser("fl-sim", help="synthetic federated aggregation run")
    p.add_argument("--config", help="YAML config path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--agg", choices=["fedavg", "loss", "loss_weighted"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--clients", type=int, default=10)
    p.add_argument("--per-round", type=int, dest="per_round")
    p.add_argument("--rounds", type=int, default=50)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--local-steps", type=int, dest="local_steps", default=5)
    p.add_argument("--spread", type=float, default=1.0,
                   help="stddev of the synthetic client optima")
    p.add_argument("--pre-loss", action="store_true", dest="pre_loss",
                   help="weight by the loss before local training")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_fl_sim)

    p = sub.add_parser("forecast", help="parity-year forecast between two devices")
    _add_common(p)
    p.add_argument("--device", required=True)
    p.add_argument("--reference", default="a40")
    p.add_argument("--doubling-months", type=float, dest="doubling_months",
                   default=18.0)
    p.add_argument("--base-year", type=float, dest="base_year", default=2022.0)
    p.set_defaults(fn=cmd_forecast)

    p = sub.add_parser("validate", help="run the built-in reference checks")
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (MalformedRowError, MissingColumnError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedspeechError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
