"""Architecture and workload descriptors for conv + transformer + quantizer encoders.

The model family covered here is the raw-waveform speech encoder used by
self-supervised pretraining stacks such as wav2vec 2.0: a strided 1-d
convolution front end that downsamples audio samples to frames, an optional
convolutional relative-position layer, a stack of identical transformer
blocks, and a product-codebook quantizer fed from the conv output. Two
presets, ``base`` and ``large``, mirror the public wav2vec 2.0
configurations; any field can be overridden from a config file.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from .errors import ConfigError


class Precision(str, enum.Enum):
    FP32 = "fp32"
    MIXED = "mixed"

    @property
    def activation_bytes(self) -> int:
        """Bytes per retained activation element."""
        return 4 if self is Precision.FP32 else 2


class NormKind(str, enum.Enum):
    NONE = "none"
    GROUP = "group"
    LAYER = "layer"


class Activation(str, enum.Enum):
    NONE = "none"
    GELU = "gelu"


def parse_precision(value: "str | Precision") -> Precision:
    if isinstance(value, Precision):
        return value
    try:
        return Precision(str(value).lower())
    except ValueError:
        raise ConfigError(f"unknown precision {value!r}; expected one of: "
                          + ", ".join(p.value for p in Precision)) from None


@dataclass(frozen=True)
class ConvLayerSpec:
    """One 1-d convolution layer (valid convolution, no padding)."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    bias: bool = False
    norm: NormKind = NormKind.NONE
    groups: int = 1
    activation: Activation = Activation.GELU

    def __post_init__(self) -> None:
        if self.kernel < 1 or self.stride < 1:
            raise ConfigError("conv kernel and stride must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("conv channel counts must be >= 1")
        if self.groups < 1 or self.in_channels % self.groups:
            raise ConfigError("conv groups must divide in_channels")


@dataclass(frozen=True)
class AttentionBlockSpec:
    """Shape of one transformer block (self-attention + feed-forward)."""

    model_dim: int
    heads: int
    ffn_dim: int

    def __post_init__(self) -> None:
        if min(self.model_dim, self.heads, self.ffn_dim) < 1:
            raise ConfigError("transformer block dimensions must be >= 1")
        if self.model_dim % self.heads:
            raise ConfigError("model_dim must be divisible by heads")


@dataclass(frozen=True)
class QuantizerSpec:
    """Product quantizer: a logits projection plus a grouped codebook.

    ``codevector_dim`` is the dimensionality of the assembled codevector;
    each of the ``groups`` codebooks contributes ``codevector_dim / groups``
    dimensions per entry. The quantized output is passed through a square
    output projection of size ``codevector_dim``.
    """

    input_dim: int
    groups: int
    entries_per_group: int
    codevector_dim: int

    def __post_init__(self) -> None:
        if min(self.input_dim, self.groups, self.entries_per_group, self.codevector_dim) < 1:
            raise ConfigError("quantizer counts must be >= 1")
        if self.codevector_dim % self.groups:
            raise ConfigError("codevector_dim must be divisible by groups")

    @property
    def total_entries(self) -> int:
        return self.groups * self.entries_per_group

    @property
    def entry_dim(self) -> int:
        return self.codevector_dim // self.groups


@dataclass(frozen=True)
class ArchitectureSpec:
    """Complete encoder description.

    ``feature_proj`` maps the conv output dimension to the transformer
    width (with a preceding layer norm). ``pos_conv`` is the grouped
    convolutional relative-position layer feeding the transformer; it is
    only meaningful when ``block_count`` >= 1 and preserves sequence length
    (same padding). The transformer stack additionally carries one final
    layer norm when it has at least one block.
    """

    name: str
    conv_stack: tuple[ConvLayerSpec, ...]
    feature_proj: tuple[int, int]
    block_count: int
    block: AttentionBlockSpec
    quantizer: QuantizerSpec
    pos_conv: Optional[ConvLayerSpec] = None

    def __post_init__(self) -> None:
        if not self.conv_stack:
            raise ConfigError("conv_stack must contain at least one layer")
        if self.block_count < 0:
            raise ConfigError("block_count must be >= 0")
        for prev, nxt in zip(self.conv_stack, self.conv_stack[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ConfigError(
                    f"conv stack channel mismatch: {prev.out_channels} -> {nxt.in_channels}")
        if self.feature_proj[0] != self.conv_stack[-1].out_channels:
            raise ConfigError("feature_proj input must match the last conv output channels")
        if self.block_count and self.feature_proj[1] != self.block.model_dim:
            raise ConfigError("feature_proj output must match the transformer width")
        if self.pos_conv is not None and self.block_count == 0:
            raise ConfigError("pos_conv requires at least one transformer block")

    @property
    def receptive_samples(self) -> int:
        """Minimum number of input samples the conv stack can consume."""
        need = 1
        for layer in reversed(self.conv_stack):
            need = (need - 1) * layer.stride + layer.kernel
        return need


@dataclass(frozen=True)
class WorkloadSpec:
    """One training or inference workload: audio length, batching, precision."""

    duration_s: float
    sample_rate_hz: int = 16_000
    batch: int = 1
    precision: Precision = Precision.FP32

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ConfigError("duration must be > 0")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample rate must be > 0")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")

    @property
    def samples(self) -> int:
        """Waveform samples, rounding half up."""
        import math

        return int(math.floor(self.duration_s * self.sample_rate_hz + 0.5))


def _encoder_conv_stack() -> tuple[ConvLayerSpec, ...]:
    # 320x total downsampling: one 10/5 layer, four 3/2, two 2/2.
    layers = [ConvLayerSpec(1, 512, 10, 5, norm=NormKind.GROUP)]
    layers += [ConvLayerSpec(512, 512, 3, 2) for _ in range(4)]
    layers += [ConvLayerSpec(512, 512, 2, 2) for _ in range(2)]
    return tuple(layers)


def _pos_conv(dim: int) -> ConvLayerSpec:
    return ConvLayerSpec(dim, dim, kernel=128, stride=1, bias=True, groups=16)


def base_preset() -> ArchitectureSpec:
    return ArchitectureSpec(
        name="base",
        conv_stack=_encoder_conv_stack(),
        feature_proj=(512, 768),
        block_count=12,
        block=AttentionBlockSpec(model_dim=768, heads=12, ffn_dim=3072),
        quantizer=QuantizerSpec(input_dim=512, groups=2, entries_per_group=320,
                                codevector_dim=256),
        pos_conv=_pos_conv(768),
    )


def large_preset() -> ArchitectureSpec:
    return ArchitectureSpec(
        name="large",
        conv_stack=_encoder_conv_stack(),
        feature_proj=(512, 1024),
        block_count=24,
        block=AttentionBlockSpec(model_dim=1024, heads=16, ffn_dim=4096),
        quantizer=QuantizerSpec(input_dim=512, groups=2, entries_per_group=320,
                                codevector_dim=768),
        pos_conv=_pos_conv(1024),
    )


PRESETS = {"base": base_preset, "large": large_preset}


def get_preset(name: str) -> ArchitectureSpec:
    try:
        return PRESETS[name.lower()]()
    except KeyError:
        raise ConfigError(f"unknown architecture preset {name!r}; "
                          f"available: {', '.join(sorted(PRESETS))}") from None


# ---------------------------------------------------------------------------
# Config-file (de)serialisation


def _conv_from_mapping(m: Mapping, where: str) -> ConvLayerSpec:
    allowed = {"in_channels", "out_channels", "kernel", "stride", "bias",
               "norm", "groups", "activation"}
    for key in m:
        if key not in allowed:
            raise ConfigError(f"unknown configuration key: {where}.{key}")
    try:
        return ConvLayerSpec(
            in_channels=int(m["in_channels"]),
            out_channels=int(m["out_channels"]),
            kernel=int(m["kernel"]),
            stride=int(m["stride"]),
            bias=bool(m.get("bias", False)),
            norm=NormKind(m.get("norm", "none")),
            groups=int(m.get("groups", 1)),
            activation=Activation(m.get("activation", "gelu")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing conv field {exc.args[0]!r} at {where}") from None
    except ValueError as exc:
        raise ConfigError(f"bad conv field at {where}: {exc}") from None


def arch_from_mapping(m: Mapping, where: str = "arch") -> ArchitectureSpec:
    """Build an :class:`ArchitectureSpec` from a config mapping.

    A bare ``{"preset": "base"}`` selects a preset; any other keys override
    preset fields. Unknown keys are rejected with their location.
    """
    allowed = {"preset", "name", "conv_stack", "feature_proj", "pos_conv",
               "transformer", "quantizer"}
    for key in m:
        if key not in allowed:
            raise ConfigError(f"unknown configuration key: {where}.{key}")

    spec = get_preset(str(m["preset"])) if "preset" in m else None
    if spec is None and not {"conv_stack", "transformer", "quantizer"} <= set(m):
        raise ConfigError(
            f"{where}: either 'preset' or a full architecture "
            "(conv_stack, transformer, quantizer) is required")

    name = str(m.get("name", spec.name if spec else "custom"))
    conv_stack = (tuple(_conv_from_mapping(c, f"{where}.conv_stack[{i}]")
                        for i, c in enumerate(m["conv_stack"]))
                  if "conv_stack" in m else spec.conv_stack)

    if "transformer" in m:
        t = m["transformer"]
        for key in t:
            if key not in {"blocks", "model_dim", "heads", "ffn_dim"}:
                raise ConfigError(f"unknown configuration key: {where}.transformer.{key}")
        block_count = int(t.get("blocks", spec.block_count if spec else 0))
        base_block = spec.block if spec else AttentionBlockSpec(768, 12, 3072)
        block = AttentionBlockSpec(
            model_dim=int(t.get("model_dim", base_block.model_dim)),
            heads=int(t.get("heads", base_block.heads)),
            ffn_dim=int(t.get("ffn_dim", base_block.ffn_dim)),
        )
    else:
        block_count, block = spec.block_count, spec.block

    if "quantizer" in m:
        q = m["quantizer"]
        for key in q:
            if key not in {"input_dim", "groups", "entries_per_group", "codevector_dim"}:
                raise ConfigError(f"unknown configuration key: {where}.quantizer.{key}")
        base_q = spec.quantizer if spec else QuantizerSpec(512, 2, 320, 256)
        quantizer = QuantizerSpec(
            input_dim=int(q.get("input_dim", base_q.input_dim)),
            groups=int(q.get("groups", base_q.groups)),
            entries_per_group=int(q.get("entries_per_group", base_q.entries_per_group)),
            codevector_dim=int(q.get("codevector_dim", base_q.codevector_dim)),
        )
    else:
        quantizer = spec.quantizer

    if "feature_proj" in m:
        fp = m["feature_proj"]
        feature_proj = (int(fp["in_dim"]), int(fp["out_dim"]))
    else:
        feature_proj = spec.feature_proj if spec else (conv_stack[-1].out_channels,
                                                       block.model_dim)

    if "pos_conv" in m:
        pos_conv = (None if m["pos_conv"] is None
                    else _conv_from_mapping(m["pos_conv"], f"{where}.pos_conv"))
    elif spec is not None and block_count:
        pos_conv = (spec.pos_conv if spec.pos_conv is None
                    else replace(spec.pos_conv, in_channels=block.model_dim,
                                 out_channels=block.model_dim))
    else:
        pos_conv = None

    return ArchitectureSpec(name=name, conv_stack=conv_stack, feature_proj=feature_proj,
                            block_count=block_count, block=block, quantizer=quantizer,
                            pos_conv=pos_conv)


def arch_to_mapping(arch: ArchitectureSpec) -> dict:
    """Inverse of :func:`arch_from_mapping`, used to embed configs in reports."""
    return {
        "name": arch.name,
        "conv_stack": [
            {"in_channels": c.in_channels, "out_channels": c.out_channels,
             "kernel": c.kernel, "stride": c.stride, "bias": c.bias,
             "norm": c.norm.value, "groups": c.groups, "activation": c.activation.value}
            for c in arch.conv_stack
        ],
        "feature_proj": {"in_dim": arch.feature_proj[0], "out_dim": arch.feature_proj[1]},
        "pos_conv": None if arch.pos_conv is None else {
            "in_channels": arch.pos_conv.in_channels,
            "out_channels": arch.pos_conv.out_channels,
            "kernel": arch.pos_conv.kernel, "stride": arch.pos_conv.stride,
            "bias": arch.pos_conv.bias, "norm": arch.pos_conv.norm.value,
            "groups": arch.pos_conv.groups, "activation": arch.pos_conv.activation.value,
        },
        "transformer": {"blocks": arch.block_count, "model_dim": arch.block.model_dim,
                        "heads": arch.block.heads, "ffn_dim": arch.block.ffn_dim},
        "quantizer": {"input_dim": arch.quantizer.input_dim,
                      "groups": arch.quantizer.groups,
                      "entries_per_group": arch.quantizer.entries_per_group,
                      "codevector_dim": arch.quantizer.codevector_dim},
    }
