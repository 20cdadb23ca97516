"""Manifest ingestion, speaker-disjoint partitioning, round schedules, and
federated wall-clock / communication estimates.

Partitioning is greedy longest-first bin packing over speakers: speakers are
sorted by total speech duration (descending, equal durations shuffled under
the seed) and assigned one by one to the currently lightest client. That is
deterministic for a fixed seed and balances within a few parts per thousand
on corpus-scale manifests; optimal partitioning would be NP-hard and buys
nothing at the tolerances that matter here.

Rounds are synchronous: a round takes as long as its slowest selected
client, and clients process their local epoch at their device's predicted
seconds per batch using the client's mean utterance duration.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .arch import ArchitectureSpec, Precision, WorkloadSpec
from .costs import param_count
from .devices import DeviceProfile, TimePrediction, predict_batch_time
from .errors import (InvalidSampleSizeError, MalformedRowError, MissingColumnError,
                     TooFewSpeakersError)

REQUIRED_COLUMNS = ("utterance_id", "speaker_id", "duration_s")

# Adapter for raw Common Voice exports: validated.tsv names its columns
# client_id / path, and duration shows up under several names depending on
# release tooling.
_COLUMN_ALIASES = {
    "client_id": "speaker_id",
    "path": "utterance_id",
    "duration": "duration_s",
    "duration_ms": "duration_ms",
    "duration[ms]": "duration_ms",
}


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    duration_s: float


@dataclass(frozen=True)
class ClientDataset:
    client_id: str
    utterances: tuple[UtteranceRecord, ...]
    total_duration_s: float
    speakers: frozenset[str]

    @property
    def n_utterances(self) -> int:
        return len(self.utterances)

    @property
    def mean_duration_s(self) -> float:
        return self.total_duration_s / len(self.utterances)


@dataclass(frozen=True)
class Partition:
    clients: tuple[ClientDataset, ...]
    seed: int

    @property
    def n_clients(self) -> int:
        return len(self.clients)


@dataclass(frozen=True)
class RoundSchedule:
    rounds: tuple[tuple[int, ...], ...]  # round -> sorted selected client indices
    total_clients: int
    per_round: int
    seed: int

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    @property
    def total_selections(self) -> int:
        return sum(len(r) for r in self.rounds)


@dataclass(frozen=True)
class WallClockEstimate:
    seconds_per_local_epoch: dict[str, float]  # client_id -> one local epoch
    seconds_per_round: tuple[float, ...]
    total_seconds: float
    device_breakdown: dict[str, float]  # device name -> slowest epoch on it

    @property
    def total_hours(self) -> float:
        return self.total_seconds / 3600.0

    @property
    def total_days(self) -> float:
        return self.total_seconds / 86400.0


# ---------------------------------------------------------------------------
# Manifest handling


def load_manifest(path) -> list[UtteranceRecord]:
    """Read a tab-separated manifest with utterance_id, speaker_id, duration_s.

    Raw Common Voice column names (client_id, path, duration in ms) are
    accepted through the documented alias map. Rows with missing fields or
    non-positive durations are rejected with their line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumnError("manifest is empty") from None
        names = [_COLUMN_ALIASES.get(h.strip(), h.strip()) for h in header]
        index: dict[str, int] = {}
        for i, name in enumerate(names):
            index.setdefault(name, i)

        if "duration_s" in index:
            dur_col, dur_scale = index["duration_s"], 1.0
        elif "duration_ms" in index:
            dur_col, dur_scale = index["duration_ms"], 1e-3
        else:
            raise MissingColumnError("manifest has no duration column "
                                     "(duration_s, duration, or duration_ms)")
        for required in ("utterance_id", "speaker_id"):
            if required not in index:
                raise MissingColumnError(f"manifest has no {required} column")

        records: list[UtteranceRecord] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            needed = max(index["utterance_id"], index["speaker_id"], dur_col)
            if len(row) <= needed:
                raise MalformedRowError(line_no, f"expected {needed + 1} fields, got {len(row)}")
            utt = row[index["utterance_id"]].strip()
            spk = row[index["speaker_id"]].strip()
            if not utt or not spk:
                raise MalformedRowError(line_no, "empty utterance or speaker id")
            try:
                duration = float(row[dur_col]) * dur_scale
            except ValueError:
                raise MalformedRowError(
                    line_no, f"duration {row[dur_col]!r} is not a number") from None
            if not math.isfinite(duration) or duration <= 0:
                raise MalformedRowError(line_no, f"non-positive duration {duration!r}")
            records.append(UtteranceRecord(utt, spk, duration))
        return records


def write_manifest(path, records: Iterable[UtteranceRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(REQUIRED_COLUMNS)
        for r in records:
            writer.writerow([r.utterance_id, r.speaker_id, f"{r.duration_s:.6f}"])


def synthetic_manifest(n_utterances: int = 195_000, n_speakers: int = 6_000,
                       mean_duration_s: float = 5.5, seed: int = 7,
                       ) -> list[UtteranceRecord]:
    """Corpus-scale synthetic manifest with heterogeneous speakers.

    Speaker contribution follows a lognormal profile (every speaker keeps at
    least one utterance) and durations are rescaled so the corpus mean is
    exactly ``mean_duration_s``. Deterministic for a fixed seed.
    """
    if n_utterances < n_speakers:
        raise InvalidSampleSizeError("need at least one utterance per speaker")
    rng = np.random.default_rng(seed)
    weights = rng.lognormal(mean=0.0, sigma=0.6, size=n_speakers)
    extra = rng.multinomial(n_utterances - n_speakers, weights / weights.sum())
    counts = extra + 1
    durations = rng.lognormal(mean=0.0, sigma=0.45, size=n_utterances)
    durations *= mean_duration_s / durations.mean()
    speaker_of = np.repeat(np.arange(n_speakers), counts)
    width_u = len(str(n_utterances - 1))
    width_s = len(str(n_speakers - 1))
    return [UtteranceRecord(f"utt_{i:0{width_u}d}", f"spk_{s:0{width_s}d}", float(d))
            for i, (s, d) in enumerate(zip(speaker_of, durations))]


# ---------------------------------------------------------------------------
# Partitioning


def partition_by_speaker(records: Sequence[UtteranceRecord], k: int,
                         seed: int = 0) -> Partition:
    """Split a manifest into ``k`` speaker-disjoint, duration-balanced clients."""
    if k < 1:
        raise TooFewSpeakersError("need at least one client")
    totals: dict[str, float] = {}
    by_speaker: dict[str, list[UtteranceRecord]] = {}
    for r in records:
        totals[r.speaker_id] = totals.get(r.speaker_id, 0.0) + r.duration_s
        by_speaker.setdefault(r.speaker_id, []).append(r)
    if len(totals) < k:
        raise TooFewSpeakersError(
            f"{len(totals)} distinct speakers cannot fill {k} clients")

    # Longest first; speakers with identical totals are ordered by a seeded
    # shuffle so ties do not encode manifest order.
    ordered = sorted(totals, key=lambda s: (-totals[s], s))
    rng = np.random.default_rng(seed)
    shuffled: list[str] = []
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and totals[ordered[j]] == totals[ordered[i]]:
            j += 1
        group = ordered[i:j]
        if len(group) > 1:
            group = [group[g] for g in rng.permutation(len(group))]
        shuffled.extend(group)
        i = j

    heap = [(0.0, idx) for idx in range(k)]
    heapq.heapify(heap)
    assigned: list[list[str]] = [[] for _ in range(k)]
    for speaker in shuffled:
        load, idx = heapq.heappop(heap)
        assigned[idx].append(speaker)
        heapq.heappush(heap, (load + totals[speaker], idx))

    width = len(str(k - 1))
    clients = []
    for idx, speakers in enumerate(assigned):
        utts = [u for s in speakers for u in by_speaker[s]]
        clients.append(ClientDataset(
            client_id=f"client_{idx:0{width}d}",
            utterances=tuple(utts),
            total_duration_s=sum(u.duration_s for u in utts),
            speakers=frozenset(speakers)))
    return Partition(clients=tuple(clients), seed=seed)


def uniform_partition(n_clients: int, utterances_per_client: int,
                      mean_duration_s: float = 5.5) -> Partition:
    """Idealised partition: every client holds the same count of identical
    mean-length utterances. Used for planning when no manifest is given."""
    width = len(str(max(n_clients - 1, 1)))
    clients = []
    for idx in range(n_clients):
        cid = f"client_{idx:0{width}d}"
        utts = tuple(UtteranceRecord(f"{cid}_utt_{i}", f"{cid}_spk", mean_duration_s)
                     for i in range(utterances_per_client))
        clients.append(ClientDataset(
            client_id=cid, utterances=utts,
            total_duration_s=mean_duration_s * utterances_per_client,
            speakers=frozenset({f"{cid}_spk"})))
    return Partition(clients=tuple(clients), seed=0)


# ---------------------------------------------------------------------------
# Scheduling


def schedule_rounds(total_clients: int, per_round: int, n_rounds: int,
                    seed: int = 0) -> RoundSchedule:
    """Sample ``per_round`` distinct clients uniformly, independently per round."""
    if total_clients < 1 or per_round < 1:
        raise InvalidSampleSizeError("client counts must be >= 1")
    if per_round > total_clients:
        raise InvalidSampleSizeError(
            f"cannot select {per_round} of {total_clients} clients")
    if n_rounds < 1:
        raise InvalidSampleSizeError("need at least one round")
    rng = np.random.default_rng(seed)
    rounds = tuple(
        tuple(sorted(int(c) for c in
                     rng.choice(total_clients, size=per_round, replace=False)))
        for _ in range(n_rounds))
    return RoundSchedule(rounds=rounds, total_clients=total_clients,
                         per_round=per_round, seed=seed)


# ---------------------------------------------------------------------------
# Wall clock and communication


def client_epoch_seconds(client: ClientDataset, profile: DeviceProfile,
                         arch: ArchitectureSpec, batch: int,
                         precision: Precision = Precision.FP32,
                         sample_rate_hz: int = 16_000) -> float:
    """One local epoch: ceil(n / batch) batches at the predicted batch time,
    evaluated at the client's mean utterance duration."""
    workload = WorkloadSpec(duration_s=client.mean_duration_s,
                            sample_rate_hz=sample_rate_hz, batch=batch,
                            precision=precision)
    prediction: TimePrediction = predict_batch_time(profile, arch, workload)
    n_batches = math.ceil(client.n_utterances / batch)
    return n_batches * prediction.seconds_per_batch


def estimate_wall_clock(partition: Partition, schedule: RoundSchedule,
                        device_assignment: Mapping[str, DeviceProfile],
                        arch: ArchitectureSpec, batch: int,
                        local_epochs: int = 1,
                        precision: Precision = Precision.FP32,
                        sample_rate_hz: int = 16_000) -> WallClockEstimate:
    """Synchronous-round wall clock: sum over rounds of the slowest client."""
    if batch < 1:
        raise InvalidSampleSizeError("batch must be >= 1")
    if schedule.total_clients != partition.n_clients:
        raise InvalidSampleSizeError(
            f"schedule covers {schedule.total_clients} clients but the "
            f"partition has {partition.n_clients}")

    epoch_seconds: dict[str, float] = {}
    device_of: dict[str, str] = {}
    for client in partition.clients:
        profile = device_assignment[client.client_id]
        epoch_seconds[client.client_id] = client_epoch_seconds(
            client, profile, arch, batch, precision, sample_rate_hz)
        device_of[client.client_id] = profile.name

    per_round = tuple(
        max(epoch_seconds[partition.clients[idx].client_id] * local_epochs
            for idx in selected)
        for selected in schedule.rounds)

    breakdown: dict[str, float] = {}
    for cid, secs in epoch_seconds.items():
        name = device_of[cid]
        breakdown[name] = max(breakdown.get(name, 0.0), secs)

    return WallClockEstimate(seconds_per_local_epoch=epoch_seconds,
                             seconds_per_round=per_round,
                             total_seconds=sum(per_round),
                             device_breakdown=breakdown)


def uniform_assignment(partition: Partition,
                       profile: DeviceProfile) -> dict[str, DeviceProfile]:
    return {c.client_id: profile for c in partition.clients}


def estimate_communication(arch: ArchitectureSpec, schedule: RoundSchedule,
                           precision: Precision = Precision.FP32) -> float:
    """Total model bytes moved: down plus up, per selected client, per round."""
    bytes_per_param = 4 if precision is Precision.FP32 else 2
    params = param_count(arch).total_params
    return float(params) * bytes_per_param * 2 * schedule.total_selections
