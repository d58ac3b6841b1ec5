"""
The tiny encoder-decoder segmentation network and weight-space arithmetic.

Architecture (fixed)::

    enc1  conv3x3 C_in->8   stride 1, BN, ReLU
    enc2  conv3x3 8->16     stride 2, BN, ReLU
    enc3  conv3x3 16->32    stride 2, BN, ReLU
    dec1  upsample x2, conv3x3 32->16, BN, ReLU
    dec2  upsample x2, conv3x3 16->8,  BN, ReLU
    head  conv1x1 8->C_out, sigmoid

Five BN layers; the first three belong to the encoder.
"""

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from daynight.constants import BN_MOMENTUM
from daynight.errors import ShapeError
from daynight.numerics.autodiff import GradTape, Variable
from daynight.numerics.layers import (
    batch_norm,
    conv2d,
    relu,
    sigmoid,
    upsample2,
)

WIDTHS = (8, 16, 32)
MIN_SIZE = 16

# (name, output width, stride, upsample first)
BLOCKS: Tuple[Tuple[str, int, int, bool], ...] = (
    ("enc1", 8, 1, False),
    ("enc2", 16, 2, False),
    ("enc3", 32, 2, False),
    ("dec1", 16, 1, True),
    ("dec2", 8, 1, True),
)
BN_LAYERS = tuple(name for name, *_ in BLOCKS)
ENCODER_BN_LAYERS = BN_LAYERS[:3]


def architecture_tag(in_channels: int, out_channels: int) -> str:
    return f"segnet-tiny-c{in_channels}-o{out_channels}"


def parse_architecture_tag(tag: str) -> Tuple[int, int]:
    try:
        prefix, c_part, o_part = tag.rsplit("-", 2)
        if prefix != "segnet-tiny" or c_part[0] != "c" or o_part[0] != "o":
            raise ValueError(tag)
        return int(c_part[1:]), int(o_part[1:])
    except (ValueError, IndexError) as e:
        unknown_tag_message = f"Unknown architecture tag: {tag!r}."
        raise ShapeError(unknown_tag_message) from e


class StatsKind(Enum):
    running = "RUNNING"
    batch = "BATCH"
    injected = "INJECTED"


@dataclass(frozen=True)
class StatsMode:
    """
    Which statistics the BN layers normalize with.

    `injected` carries one ``(mean, std)`` pair per BN layer, in layer order.
    """

    kind: StatsKind
    injected: Optional[Tuple[Tuple[np.ndarray, np.ndarray], ...]] = None

    @classmethod
    def running(cls) -> "StatsMode":
        return cls(StatsKind.running)

    @classmethod
    def batch(cls) -> "StatsMode":
        return cls(StatsKind.batch)

    @classmethod
    def inject(
        cls, stats: Sequence[Tuple[np.ndarray, np.ndarray]]
    ) -> "StatsMode":
        stats = tuple((np.asarray(m), np.asarray(s)) for m, s in stats)
        if len(stats) != len(BN_LAYERS):
            injected_count_message = (
                f"Injected statistics need {len(BN_LAYERS)} (mean, std) "
                f"pairs, got {len(stats)}."
            )
            raise ShapeError(injected_count_message)
        return cls(StatsKind.injected, stats)


class LayerStats(NamedTuple):
    batch_mean: Variable
    batch_std: Variable
    running_mean: np.ndarray
    running_std: np.ndarray


ForwardTrace = List[LayerStats]


class ForwardResult(NamedTuple):
    probs: Variable
    trace: ForwardTrace
    params: Dict[str, Variable]


@dataclass
class SegModelState:
    """
    Named parameters plus per-BN-layer running statistics.

    Parameter names are ``<block>.weight``, ``<block>.bias``,
    ``<block>.gamma``, ``<block>.beta`` and ``head.weight``, ``head.bias``;
    running statistics are ``<block>.mean`` and ``<block>.std``.
    """

    arch: str
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    running: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def in_channels(self) -> int:
        return parse_architecture_tag(self.arch)[0]

    @property
    def out_channels(self) -> int:
        return parse_architecture_tag(self.arch)[1]

    def tensors(self) -> Dict[str, np.ndarray]:
        """Every parameter and running statistic, in a fixed order."""
        return {
            **{f"param.{k}": v for k, v in self.params.items()},
            **{f"running.{k}": v for k, v in self.running.items()},
        }

    def to_flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors().values()])

    def from_flat(self, flat: np.ndarray) -> "SegModelState":
        """A state of this architecture whose tensors are read from `flat`."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.to_flat().size:
            flat_size_message = (
                f"Flat vector of length {flat.size} does not match "
                f"{self.arch} with {self.to_flat().size} entries."
            )
            raise ShapeError(flat_size_message)
        out = SegModelState(self.arch)
        offset = 0
        pairs = ((out.params, self.params), (out.running, self.running))
        for target, source in pairs:
            for name, value in source.items():
                chunk = flat[offset : offset + value.size]
                target[name] = chunk.reshape(value.shape).copy()
                offset += value.size
        return out

    def copy(self) -> "SegModelState":
        return copy.deepcopy(self)

    def same_as(self, other: "SegModelState") -> bool:
        """Bit-exact equality of architecture and every tensor."""
        mine, theirs = self.tensors(), other.tensors()
        return (
            self.arch == other.arch
            and mine.keys() == theirs.keys()
            and all(np.array_equal(mine[k], theirs[k]) for k in mine)
        )


def init_model(
    seed: int, in_channels: int = 1, out_channels: int = 1
) -> SegModelState:
    """He-normal kernels, zero biases, unit BN scale and running std."""
    rng = np.random.default_rng(seed)
    model = SegModelState(architecture_tag(in_channels, out_channels))
    width = in_channels
    for name, out, _, _ in BLOCKS:
        scale = np.sqrt(2.0 / (width * 9))
        model.params[f"{name}.weight"] = rng.normal(
            0.0, scale, size=(out, width, 3, 3)
        )
        model.params[f"{name}.bias"] = np.zeros(out)
        model.params[f"{name}.gamma"] = np.ones(out)
        model.params[f"{name}.beta"] = np.zeros(out)
        model.running[f"{name}.mean"] = np.zeros(out)
        model.running[f"{name}.std"] = np.ones(out)
        width = out
    model.params["head.weight"] = rng.normal(
        0.0, np.sqrt(2.0 / width), size=(out_channels, width, 1, 1)
    )
    model.params["head.bias"] = np.zeros(out_channels)
    return model


def _check_input(model: SegModelState, batch: np.ndarray) -> None:
    if batch.ndim != 4:
        batch_message = f"Expected an (N, C, H, W) batch, got {batch.shape}."
        raise ShapeError(batch_message)
    _, c, h, w = batch.shape
    if c != model.in_channels:
        channel_message = (
            f"{model.arch} expects {model.in_channels} input channels, "
            f"got {c}."
        )
        raise ShapeError(channel_message)
    if h < MIN_SIZE or w < MIN_SIZE or h % 4 or w % 4:
        size_message = (
            f"Input size {h}x{w} must be at least {MIN_SIZE}x{MIN_SIZE} and "
            "divisible by 4."
        )
        raise ShapeError(size_message)


def forward(
    model: SegModelState,
    batch,
    mode: StatsMode = StatsMode.running(),
    tape: Optional[GradTape] = None,
    trainable: bool = False,
    update_running: bool = False,
) -> ForwardResult:
    """
    Per-pixel foreground probabilities and the BN trace of one batch.

    `batch` may be an array or a `Variable` (the day loop passes the taped
    prompted image). With `trainable` the parameters are watched so the tape
    yields weight gradients. `update_running` applies the momentum-0.1
    running-statistic update, and only in batch mode.
    """
    x = batch if isinstance(batch, Variable) else Variable(batch)
    _check_input(model, x.value)

    params = {
        name: Variable(value, requires_grad=trainable)
        for name, value in model.params.items()
    }
    trace: ForwardTrace = []
    for index, (name, _, stride, upsample_first) in enumerate(BLOCKS):
        if upsample_first:
            x = upsample2(x, tape)
        x = conv2d(
            x, params[f"{name}.weight"], params[f"{name}.bias"], stride, tape
        )
        running_mean = model.running[f"{name}.mean"]
        running_std = model.running[f"{name}.std"]
        if mode.kind is StatsKind.running:
            stats = {"mean": running_mean, "std": running_std}
        elif mode.kind is StatsKind.injected:
            mean, std = mode.injected[index]
            stats = {"mean": mean, "std": std}
        else:
            stats = {}
        x, batch_mean, batch_std = batch_norm(
            x,
            params[f"{name}.gamma"],
            params[f"{name}.beta"],
            tape=tape,
            **stats,
        )
        trace.append(
            LayerStats(batch_mean, batch_std, running_mean, running_std)
        )
        x = relu(x, tape)

    logits = conv2d(x, params["head.weight"], params["head.bias"], 1, tape)
    probs = sigmoid(logits, tape)

    if update_running and mode.kind is StatsKind.batch:
        keep = 1.0 - BN_MOMENTUM
        for name, stats in zip(BN_LAYERS, trace):
            mean_key, std_key = f"{name}.mean", f"{name}.std"
            model.running[mean_key] = (
                keep * model.running[mean_key]
                + BN_MOMENTUM * stats.batch_mean.value
            )
            model.running[std_key] = (
                keep * model.running[std_key]
                + BN_MOMENTUM * stats.batch_std.value
            )

    return ForwardResult(probs, trace, params)


def predict(
    model: SegModelState, images: np.ndarray, batch_size: int = 32
) -> np.ndarray:
    """Running-mode probabilities for a stack of ``(C, H, W)`` images."""
    images = np.asarray(images, dtype=np.float64)
    chunks = [
        forward(model, images[i : i + batch_size]).probs.value
        for i in range(0, len(images), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def weights_axpy(
    a: float, w1: SegModelState, b: float, w2: SegModelState
) -> SegModelState:
    """
    ``a * w1 + b * w2`` over every parameter and running statistic.

    Examples:
        >>> m = init_model(0)
        >>> weights_axpy(1.0, m, 0.0, init_model(1)).same_as(m)
        True
    """
    if w1.arch != w2.arch:
        arch_mismatch_message = (
            f"Cannot combine models of architecture {w1.arch} and {w2.arch}."
        )
        raise ShapeError(arch_mismatch_message)
    return SegModelState(
        w1.arch,
        {k: a * v + b * w2.params[k] for k, v in w1.params.items()},
        {k: a * v + b * w2.running[k] for k, v in w1.running.items()},
    )
