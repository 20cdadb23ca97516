"""Training FLOPs, static memory, and the forward-pass memory timeline.

Two distinct memory quantities are modelled, because they answer different
questions:

* :func:`memory_timeline` reproduces what an activation profiler reports at
  the end of the forward pass: fp32 weights plus a fixed runtime floor plus
  the retained-activation total scaled by a single fitted overhead factor
  ``kappa``. This is the number the per-layer accumulation plots are built
  from, and it is deliberately lean: gradients and optimizer state are not
  yet materialised at that point of the step.
* :func:`static_memory` is the steady-state footprint of weights, gradients,
  and optimizer state, independent of sequence length. Device-fit checks
  combine it with an allocator and backward-temporaries multiplier (see
  ``devices``).

``kappa`` is fitted once against a measured reference peak and is part of
an immutable :class:`MemoryCalibration` record, never global state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

from .arch import ArchitectureSpec, Precision, WorkloadSpec, base_preset
from .costs import CostReport, forward_flops, param_count
from .errors import ConfigError

BACKWARD_FLOP_MULTIPLIER = 2.0  # backward ~= 2x forward for matmul-dominated nets

#: Reference activation-profiler peak used to fit the default calibration:
#: the base encoder trained on 5.5 s clips at batch 4, full precision.
REFERENCE_PEAK_BYTES = 2.54e9
REFERENCE_WORKLOAD = WorkloadSpec(duration_s=5.5, batch=4, precision=Precision.FP32)

DEFAULT_RUNTIME_OVERHEAD_BYTES = 400_000_000  # interpreter + framework + loader floor
DEFAULT_RESIDENCY_FACTOR = 3.2  # backward temporaries + allocator slack, whole process


class Optimizer(str, enum.Enum):
    ADAM = "adam"
    SGD = "sgd"


# Bytes per parameter held across a training step. fp32 + adam: weights 4,
# grads 4, two moments 8. Mixed keeps fp32 masters and adds fp16 working
# weights and grads, which lands on the same totals.
_STATIC_BYTES_PER_PARAM = {
    (Precision.FP32, Optimizer.ADAM): 16,
    (Precision.FP32, Optimizer.SGD): 8,
    (Precision.MIXED, Optimizer.ADAM): 16,
    (Precision.MIXED, Optimizer.SGD): 8,
}


@dataclass(frozen=True)
class LayerTrainingFlops:
    layer_id: int
    label: str
    fwd_flops: float
    bwd_flops: float

    @property
    def total_flops(self) -> float:
        return self.fwd_flops + self.bwd_flops


@dataclass(frozen=True)
class TrainingCost:
    fwd_flops: float
    bwd_flops: float
    precision: Precision
    per_layer: tuple[LayerTrainingFlops, ...] = ()
    peak_memory_bytes: float = 0.0

    @property
    def total_flops(self) -> float:
        return self.fwd_flops + self.bwd_flops


@dataclass(frozen=True)
class MemoryCalibration:
    """Immutable calibration constants for the memory models."""

    activation_overhead: float  # kappa: fitted multiplier on retained activations
    runtime_overhead_bytes: float = DEFAULT_RUNTIME_OVERHEAD_BYTES
    residency_factor: float = DEFAULT_RESIDENCY_FACTOR
    reference: str = ""


@dataclass(frozen=True)
class MemoryTimeline:
    """Forward-order activation accumulation and the resulting peak.

    ``static_bytes`` here is the sequence-length-independent portion present
    while the forward pass runs: fp32 weights plus the runtime floor. The
    peak is ``static_bytes + kappa * cumulative_bytes[-1]`` and lands on the
    last forward layer, where everything retained for backward coexists.
    """

    arch_name: str
    workload: WorkloadSpec
    layer_labels: tuple[str, ...]
    layer_kinds: tuple[str, ...]
    per_layer_bytes: tuple[float, ...]
    cumulative_bytes: tuple[float, ...]
    static_bytes: float
    activation_overhead: float

    @property
    def activation_bytes(self) -> float:
        return self.cumulative_bytes[-1] if self.cumulative_bytes else 0.0

    @property
    def peak_bytes(self) -> float:
        return peak_from_parts(self.static_bytes, self.activation_bytes,
                               self.activation_overhead)


def peak_from_parts(static_bytes: float, activation_bytes: float,
                    activation_overhead: float) -> float:
    return static_bytes + activation_overhead * activation_bytes


def training_flops(report: CostReport) -> TrainingCost:
    """Backward = 2x forward per layer; total = 3x forward."""
    per_layer = tuple(
        LayerTrainingFlops(layer_id=l.layer_id, label=l.label, fwd_flops=l.fwd_flops,
                           bwd_flops=BACKWARD_FLOP_MULTIPLIER * l.fwd_flops)
        for l in report.per_layer)
    fwd = report.total_fwd_flops
    precision = report.workload.precision if report.workload else Precision.FP32
    return TrainingCost(fwd_flops=fwd, bwd_flops=BACKWARD_FLOP_MULTIPLIER * fwd,
                        precision=precision, per_layer=per_layer)


def static_memory(arch: ArchitectureSpec, optimizer: Optimizer = Optimizer.ADAM,
                  precision: Precision = Precision.FP32) -> int:
    """Weights + gradients + optimizer state, in bytes."""
    return param_count(arch).total_params * _STATIC_BYTES_PER_PARAM[(precision, optimizer)]


def weight_bytes(arch: ArchitectureSpec) -> int:
    """fp32 master weights only."""
    return param_count(arch).total_params * 4


def fit_activation_overhead(arch: ArchitectureSpec, workload: WorkloadSpec,
                            measured_peak_bytes: float,
                            runtime_overhead_bytes: float = DEFAULT_RUNTIME_OVERHEAD_BYTES,
                            ) -> float:
    """Solve kappa so the modelled peak matches one measured point."""
    report = forward_flops(arch, workload)
    activations = report.total_activation_bytes_per_sample * workload.batch
    static = weight_bytes(arch) + runtime_overhead_bytes
    if activations <= 0:
        raise ConfigError("cannot fit the activation overhead on zero activations")
    if measured_peak_bytes <= static:
        raise ConfigError("measured peak is below the static floor; "
                          "check the measurement or the overhead setting")
    return (measured_peak_bytes - static) / activations


@lru_cache(maxsize=1)
def default_calibration() -> MemoryCalibration:
    """Calibration fitted on the bundled reference measurement."""
    kappa = fit_activation_overhead(base_preset(), REFERENCE_WORKLOAD,
                                    REFERENCE_PEAK_BYTES)
    return MemoryCalibration(
        activation_overhead=kappa,
        reference="base encoder, 5.5 s, batch 4, fp32 -> 2.54 GB forward peak")


def memory_timeline(arch: ArchitectureSpec, workload: WorkloadSpec,
                    calibration: Optional[MemoryCalibration] = None) -> MemoryTimeline:
    """Per-layer retained bytes in forward order, with the calibrated peak."""
    cal = calibration or default_calibration()
    report = forward_flops(arch, workload)
    per_layer = tuple(l.activation_bytes_per_sample * workload.batch
                      for l in report.per_layer)
    cumulative: list[float] = []
    running = 0.0
    for b in per_layer:
        running += b
        cumulative.append(running)
    return MemoryTimeline(
        arch_name=arch.name, workload=workload,
        layer_labels=tuple(l.label for l in report.per_layer),
        layer_kinds=tuple(l.kind.value for l in report.per_layer),
        per_layer_bytes=per_layer, cumulative_bytes=tuple(cumulative),
        static_bytes=weight_bytes(arch) + cal.runtime_overhead_bytes,
        activation_overhead=cal.activation_overhead)


def precision_memory_delta(arch: ArchitectureSpec, workload: WorkloadSpec,
                           calibration: Optional[MemoryCalibration] = None,
                           ) -> tuple[float, float]:
    """(fp32 peak, mixed peak) at the same workload.

    Mixed precision halves retained-activation bytes only; the static
    portion (fp32 master weights plus the runtime floor) is unchanged.
    """
    fp32 = memory_timeline(arch, replace(workload, precision=Precision.FP32), calibration)
    mixed = memory_timeline(arch, replace(workload, precision=Precision.MIXED), calibration)
    return fp32.peak_bytes, mixed.peak_bytes


def training_profile(arch: ArchitectureSpec, workload: WorkloadSpec,
                     calibration: Optional[MemoryCalibration] = None) -> TrainingCost:
    """Training FLOPs plus the modelled forward-peak memory for a workload."""
    cost = training_flops(forward_flops(arch, workload))
    timeline = memory_timeline(arch, workload, calibration)
    return replace(cost, peak_memory_bytes=timeline.peak_bytes)
