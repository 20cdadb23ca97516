"""Parameter, FLOP, and retained-activation accounting, layer by layer.

Counting conventions (documented once, applied everywhere):

* Dense and convolution multiply-accumulates count as 2 FLOPs.
* The two sequence-quadratic attention matmuls (score map and value mixing)
  together count as ``2 * L^2 * d`` FLOPs per block. Hook-style profilers,
  which the reference figures for this model family follow, under-count
  these fused kernels relative to dense layers; keeping the quadratic term
  at this weight also keeps total FLOPs near-linear in audio length over
  the 3 s to 30 s range while preserving the expected slight super-linear
  excess.
* Normalisation layers, activation functions, and softmax count 5 FLOPs
  per output element.
* Retained activations are the tensors a framework keeps for the backward
  pass: every op output (conv, norm, activation, projection, residual sum)
  plus, per transformer block, one L x L attention score map and the
  feed-forward hidden state.

Module attribution: the relative-position conv and the final norm report
under the transformer group; the quantizer output projection reports its
parameters under ``other`` but its compute under ``quantization`` (the two
reference breakdowns draw that boundary differently, and both are matched
here).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .arch import (Activation, ArchitectureSpec, ConvLayerSpec, NormKind,
                   WorkloadSpec)
from .errors import DegenerateInputError

ELEMENTWISE_FLOPS = 5  # per element: norm, activation, softmax


class LayerKind(str, enum.Enum):
    CONV = "conv"
    FEATURE_PROJ = "feature_proj"
    POS_CONV = "pos_conv"
    TRANSFORMER_BLOCK = "transformer_block"
    FINAL_NORM = "final_norm"
    QUANTIZER = "quantizer"
    QUANT_OUT_PROJ = "quant_out_proj"


class ModuleGroup(str, enum.Enum):
    CNN_ENCODER = "cnn_encoder"
    TRANSFORMER = "transformer"
    QUANTIZER = "quantizer"
    OTHER = "other"


_PARAM_GROUP = {
    LayerKind.CONV: ModuleGroup.CNN_ENCODER,
    LayerKind.FEATURE_PROJ: ModuleGroup.CNN_ENCODER,
    LayerKind.POS_CONV: ModuleGroup.TRANSFORMER,
    LayerKind.TRANSFORMER_BLOCK: ModuleGroup.TRANSFORMER,
    LayerKind.FINAL_NORM: ModuleGroup.TRANSFORMER,
    LayerKind.QUANTIZER: ModuleGroup.QUANTIZER,
    LayerKind.QUANT_OUT_PROJ: ModuleGroup.OTHER,
}
_FLOP_GROUP = dict(_PARAM_GROUP, **{LayerKind.QUANT_OUT_PROJ: ModuleGroup.QUANTIZER})


@dataclass(frozen=True)
class LayerCost:
    """Cost of a single layer at a given workload.

    ``fwd_flops`` covers the whole batch; ``activation_bytes_per_sample``
    is per sequence so callers can re-scale batching independently.
    """

    layer_id: int
    kind: LayerKind
    label: str
    params: int
    fwd_flops: float
    activation_bytes_per_sample: float
    output_len: int


@dataclass(frozen=True)
class CostReport:
    arch_name: str
    per_layer: tuple[LayerCost, ...]
    workload: Optional[WorkloadSpec]

    @property
    def total_params(self) -> int:
        return sum(l.params for l in self.per_layer)

    @property
    def total_fwd_flops(self) -> float:
        return sum(l.fwd_flops for l in self.per_layer)

    @property
    def total_activation_bytes_per_sample(self) -> float:
        return sum(l.activation_bytes_per_sample for l in self.per_layer)

    def group_params(self, group: ModuleGroup) -> int:
        return sum(l.params for l in self.per_layer if _PARAM_GROUP[l.kind] is group)

    def group_fwd_flops(self, group: ModuleGroup) -> float:
        return sum(l.fwd_flops for l in self.per_layer if _FLOP_GROUP[l.kind] is group)

    @property
    def module_totals(self) -> dict[str, tuple[int, float]]:
        return {g.value: (self.group_params(g), self.group_fwd_flops(g))
                for g in ModuleGroup}


# ---------------------------------------------------------------------------
# Shape arithmetic


def conv_output_len(len_in: int, kernel: int, stride: int) -> int:
    """Valid-convolution output length: floor((len_in - kernel) / stride) + 1."""
    if len_in < kernel:
        raise DegenerateInputError(
            f"input of {len_in} frames is shorter than the kernel ({kernel})")
    return (len_in - kernel) // stride + 1


def conv_stack_lens(arch: ArchitectureSpec, samples: int) -> list[int]:
    """Per-layer output lengths of the conv front end."""
    lens: list[int] = []
    n = samples
    for layer in arch.conv_stack:
        n = conv_output_len(n, layer.kernel, layer.stride)
        lens.append(n)
    return lens


def frames_for_duration(arch: ArchitectureSpec, workload: WorkloadSpec) -> int:
    """Frames produced by the conv stack for the workload's audio duration."""
    return conv_stack_lens(arch, workload.samples)[-1]


# ---------------------------------------------------------------------------
# Per-layer formulas


def linear_params(d_in: int, d_out: int, bias: bool = True) -> int:
    return d_in * d_out + (d_out if bias else 0)


def conv_params(layer: ConvLayerSpec) -> int:
    weights = layer.in_channels * layer.out_channels * layer.kernel // layer.groups
    norm = 2 * layer.out_channels if layer.norm is not NormKind.NONE else 0
    return weights + (layer.out_channels if layer.bias else 0) + norm


def _conv_flops(layer: ConvLayerSpec, out_len: int) -> float:
    macs = layer.in_channels * layer.out_channels * layer.kernel * out_len / layer.groups
    flops = 2.0 * macs
    if layer.norm is not NormKind.NONE:
        flops += ELEMENTWISE_FLOPS * layer.out_channels * out_len
    if layer.activation is not Activation.NONE:
        flops += ELEMENTWISE_FLOPS * layer.out_channels * out_len
    return flops


def _conv_retained(layer: ConvLayerSpec, out_len: int) -> int:
    copies = 1  # conv output
    if layer.norm is not NormKind.NONE:
        copies += 1
    if layer.activation is not Activation.NONE:
        copies += 1
    return copies * layer.out_channels * out_len


def _block_params(arch: ArchitectureSpec) -> int:
    b = arch.block
    attn = 4 * linear_params(b.model_dim, b.model_dim)
    norms = 2 * (2 * b.model_dim)
    ffn = linear_params(b.model_dim, b.ffn_dim) + linear_params(b.ffn_dim, b.model_dim)
    return attn + norms + ffn


def _block_flops(arch: ArchitectureSpec, frames: int) -> float:
    b, L = arch.block, frames
    proj = 8.0 * L * b.model_dim * b.model_dim            # q, k, v, out
    quad = 2.0 * L * L * b.model_dim                      # score map + value mixing
    ffn = 4.0 * L * b.model_dim * b.ffn_dim               # up + down
    ew = ELEMENTWISE_FLOPS * (2 * L * b.model_dim         # two layer norms
                              + b.heads * L * L           # softmax
                              + L * b.ffn_dim)            # gelu
    return proj + quad + ffn + ew


def _block_retained(arch: ArchitectureSpec, frames: int) -> int:
    # q/k/v, context, attn out, residual + norm, ffn out, residual + norm,
    # plus the ffn hidden state twice (pre and post activation) and one
    # L x L score map.
    b, L = arch.block, frames
    return (10 * b.model_dim + 2 * b.ffn_dim) * L + L * L


def quantizer_params(arch: ArchitectureSpec) -> int:
    q = arch.quantizer
    return linear_params(q.input_dim, q.total_entries) + q.total_entries * q.entry_dim


def _quantizer_flops(arch: ArchitectureSpec, frames: int) -> float:
    q, L = arch.quantizer, frames
    logits = 2.0 * q.input_dim * q.total_entries * L
    similarity = 2.0 * q.total_entries * q.entry_dim * L
    assembly = 2.0 * q.total_entries * q.entry_dim * L
    softmax = float(ELEMENTWISE_FLOPS * q.total_entries * L)
    return logits + similarity + assembly + softmax


# ---------------------------------------------------------------------------
# Report construction


def _build_layers(arch: ArchitectureSpec, workload: Optional[WorkloadSpec]) -> list[LayerCost]:
    lens: list[int] = []
    frames = 0
    batch = 1
    elem = 4
    if workload is not None:
        lens = conv_stack_lens(arch, workload.samples)
        frames = lens[-1]
        batch = workload.batch
        elem = workload.precision.activation_bytes

    layers: list[LayerCost] = []

    def add(kind: LayerKind, label: str, params: int, flops: float,
            retained_elems: int, out_len: int) -> None:
        layers.append(LayerCost(
            layer_id=len(layers), kind=kind, label=label, params=params,
            fwd_flops=flops * batch,
            activation_bytes_per_sample=float(retained_elems * elem),
            output_len=out_len))

    for i, conv in enumerate(arch.conv_stack):
        out_len = lens[i] if workload else 0
        add(LayerKind.CONV, f"conv{i}", conv_params(conv),
            _conv_flops(conv, out_len) if workload else 0.0,
            _conv_retained(conv, out_len) if workload else 0, out_len)

    d_in, d_out = arch.feature_proj
    add(LayerKind.FEATURE_PROJ, "feature_proj",
        2 * d_in + linear_params(d_in, d_out),
        (2.0 * d_in * d_out + ELEMENTWISE_FLOPS * d_in) * frames,
        (d_in + d_out) * frames, frames)

    if arch.pos_conv is not None:
        pc = arch.pos_conv
        pos_flops = 2.0 * pc.in_channels * pc.out_channels * pc.kernel * frames / pc.groups
        copies = 2  # conv output + residual sum
        if pc.activation is not Activation.NONE:
            pos_flops += ELEMENTWISE_FLOPS * pc.out_channels * frames
            copies += 1
        add(LayerKind.POS_CONV, "pos_conv", conv_params(pc), pos_flops,
            copies * pc.out_channels * frames, frames)

    for i in range(arch.block_count):
        add(LayerKind.TRANSFORMER_BLOCK, f"block{i}", _block_params(arch),
            _block_flops(arch, frames) if workload else 0.0,
            _block_retained(arch, frames) if workload else 0, frames)

    if arch.block_count:
        d = arch.block.model_dim
        add(LayerKind.FINAL_NORM, "final_norm", 2 * d,
            float(ELEMENTWISE_FLOPS * d * frames), d * frames, frames)

    q = arch.quantizer
    add(LayerKind.QUANTIZER, "quantizer", quantizer_params(arch),
        _quantizer_flops(arch, frames) if workload else 0.0,
        (q.total_entries + q.codevector_dim) * frames, frames)
    add(LayerKind.QUANT_OUT_PROJ, "quant_out_proj",
        linear_params(q.codevector_dim, q.codevector_dim),
        2.0 * q.codevector_dim * q.codevector_dim * frames,
        q.codevector_dim * frames, frames)

    return layers


def param_count(arch: ArchitectureSpec) -> CostReport:
    """Parameter counts only; FLOP and activation fields are zero."""
    return CostReport(arch_name=arch.name,
                      per_layer=tuple(_build_layers(arch, None)), workload=None)


def forward_flops(arch: ArchitectureSpec, workload: WorkloadSpec) -> CostReport:
    """Per-layer forward cost at the workload's duration, batch, and precision.

    FLOPs scale linearly with ``workload.batch``; activation bytes are
    reported per sample.
    """
    return CostReport(arch_name=arch.name,
                      per_layer=tuple(_build_layers(arch, workload)), workload=workload)


def module_rollup(report: CostReport) -> list[dict]:
    """Module-level summary rows: one per group plus a grand total."""
    rows = []
    for group, label in [(ModuleGroup.CNN_ENCODER, "CNN Encoder"),
                         (ModuleGroup.TRANSFORMER, "Transformer"),
                         (ModuleGroup.QUANTIZER, "Quantization"),
                         (ModuleGroup.OTHER, "Other")]:
        rows.append({"module": label,
                     "params": report.group_params(group),
                     "gflops": report.group_fwd_flops(group) / 1e9})
    rows.append({"module": "Total", "params": report.total_params,
                 "gflops": report.total_fwd_flops / 1e9})
    return rows
