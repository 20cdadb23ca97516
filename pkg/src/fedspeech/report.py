"""Deterministic JSON and CSV report emission.

Reports carry the fully resolved configuration and its fingerprint, never a
timestamp, so identical inputs produce byte-identical files. Writers go
through a temp file and an atomic rename so a failed run never leaves
partial output behind.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .aggregation import Trajectory
from .costs import CostReport, module_rollup
from .federation import Partition, RoundSchedule, WallClockEstimate
from .memory import MemoryTimeline


def write_json(path, payload: Mapping[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    os.replace(tmp, path)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def cost_report_payload(report: CostReport, meta: Mapping[str, Any]) -> dict:
    return {
        "meta": dict(meta),
        "arch": report.arch_name,
        "per_layer": [
            {"layer_id": l.layer_id, "kind": l.kind.value, "label": l.label,
             "params": l.params, "fwd_flops": l.fwd_flops,
             "activation_bytes_per_sample": l.activation_bytes_per_sample,
             "output_len": l.output_len}
            for l in report.per_layer
        ],
        "module_totals": {
            name: {"params": params, "fwd_flops": flops}
            for name, (params, flops) in report.module_totals.items()
        },
        "rollup": module_rollup(report),
        "grand_total": {"params": report.total_params,
                        "fwd_flops": report.total_fwd_flops},
    }


def cost_report_rows(report: CostReport) -> list[list]:
    return [[l.layer_id, l.kind.value, l.label, l.params, f"{l.fwd_flops:.6g}",
             f"{l.activation_bytes_per_sample:.6g}", l.output_len]
            for l in report.per_layer]


COST_CSV_HEADER = ["layer_id", "kind", "label", "params", "fwd_flops",
                   "activation_bytes_per_sample", "output_len"]


def timeline_payload(timeline: MemoryTimeline, meta: Mapping[str, Any]) -> dict:
    return {
        "meta": dict(meta),
        "arch": timeline.arch_name,
        "static_bytes": timeline.static_bytes,
        "activation_overhead": timeline.activation_overhead,
        "activation_bytes": timeline.activation_bytes,
        "peak_bytes": timeline.peak_bytes,
        "per_layer": [
            {"layer_id": i, "kind": kind, "label": label, "bytes": b,
             "cumulative_bytes": c}
            for i, (kind, label, b, c) in enumerate(
                zip(timeline.layer_kinds, timeline.layer_labels,
                    timeline.per_layer_bytes, timeline.cumulative_bytes))
        ],
    }


TIMELINE_CSV_HEADER = ["layer_id", "kind", "label", "bytes", "cumulative_bytes"]


def timeline_rows(timeline: MemoryTimeline) -> list[list]:
    return [[i, kind, label, f"{b:.6g}", f"{c:.6g}"]
            for i, (kind, label, b, c) in enumerate(
                zip(timeline.layer_kinds, timeline.layer_labels,
                    timeline.per_layer_bytes, timeline.cumulative_bytes))]


def partition_payload(partition: Partition, meta: Mapping[str, Any]) -> dict:
    return {
        "meta": dict(meta),
        "seed": partition.seed,
        "clients": [
            {"client_id": c.client_id, "n_utterances": c.n_utterances,
             "total_duration_s": round(c.total_duration_s, 6),
             "n_speakers": len(c.speakers),
             "utterance_ids": [u.utterance_id for u in c.utterances]}
            for c in partition.clients
        ],
    }


def schedule_payload(schedule: RoundSchedule, meta: Mapping[str, Any]) -> dict:
    return {
        "meta": dict(meta),
        "total_clients": schedule.total_clients,
        "per_round": schedule.per_round,
        "seed": schedule.seed,
        "rounds": [{"round_id": i, "selected": list(sel)}
                   for i, sel in enumerate(schedule.rounds)],
    }


def wall_clock_payload(estimate: WallClockEstimate, communication_bytes: float,
                       meta: Mapping[str, Any]) -> dict:
    return {
        "meta": dict(meta),
        "seconds_per_local_epoch": {k: round(v, 6) for k, v in
                                    sorted(estimate.seconds_per_local_epoch.items())},
        "device_breakdown_s": {k: round(v, 6) for k, v in
                               sorted(estimate.device_breakdown.items())},
        "n_rounds": len(estimate.seconds_per_round),
        "total_seconds": round(estimate.total_seconds, 6),
        "total_hours": round(estimate.total_hours, 6),
        "total_days": round(estimate.total_days, 6),
        "communication_bytes": communication_bytes,
    }


TRAJECTORY_CSV_HEADER = ["round", "mean_client_loss", "min_client_loss",
                         "max_client_loss", "population_loss", "distance_to_optimum"]


def trajectory_rows(trajectory: Trajectory) -> list[list]:
    rows = []
    for rec in trajectory.records:
        losses = list(rec.client_losses.values())
        rows.append([rec.round_id, f"{rec.mean_client_loss:.10g}",
                     f"{min(losses):.10g}", f"{max(losses):.10g}",
                     f"{rec.population_loss:.10g}",
                     f"{rec.distance_to_optimum:.10g}"])
    return rows


def trajectory_payload(trajectory: Trajectory, meta: Mapping[str, Any]) -> dict:
    return {
        "meta": dict(meta),
        "n_rounds": len(trajectory.records),
        "final_weights": [float(x) for x in trajectory.final_weights],
        "final_population_loss": trajectory.records[-1].population_loss,
        "final_distance_to_optimum": trajectory.records[-1].distance_to_optimum,
    }
